#pragma once

#include <span>
#include <vector>

#include "nara/geo_model.hpp"

// Low-level planar predicates shared by validation, relations and encoders.
namespace nara::kernel {

struct Segment {
    Vec2 a;
    Vec2 b;
};

inline double cross(Vec2 o, Vec2 a, Vec2 b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

double distance(Vec2 a, Vec2 b);
double point_segment_distance(Vec2 p, const Segment& s);
Vec2 closest_point_on_segment(Vec2 p, const Segment& s);

/// Closed-segment intersection test (touching counts).
bool segments_intersect(const Segment& s, const Segment& t);
double segment_distance(const Segment& s, const Segment& t);

/// Parameters in [0,1] along `s` where `t` meets it: endpoints of a
/// collinear overlap, or the single crossing point.
std::vector<double> intersection_params(const Segment& s, const Segment& t, double tol);

/// Consecutive vertex pairs. A point yields one zero-length segment.
std::vector<Segment> segments_of(const Geometry& g);

double ring_signed_area(std::span<const Vec2> ring);
double polyline_length(std::span<const Vec2> pts);

enum class RingLocation { Outside, Boundary, Inside };

/// Location of p relative to a closed ring; Boundary when within `tol`.
RingLocation locate_in_ring(Vec2 p, std::span<const Vec2> ring, double tol);

/// True when two non-adjacent edges of the ring touch or cross.
bool ring_self_intersects(std::span<const Vec2> ring);

/// Point at arc-length fraction t in [0,1] along an open polyline or closed ring.
Vec2 point_at_fraction(std::span<const Vec2> pts, double t);

}  // namespace nara::kernel
