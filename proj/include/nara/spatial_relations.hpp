#pragma once

#include <cstdint>
#include <string_view>

#include "nara/geo_model.hpp"

namespace nara {

/// Symmetric four-way relation. Containment and within share one code;
/// direction is never stored.
enum class TopoRelation : std::uint8_t {
    Disjoint = 0,
    Intersects = 1,
    Adjacent = 2,
    ContainsWithin = 3,
};

constexpr int kNumRelations = 4;

std::string_view to_string(TopoRelation r);

/// Boundaries closer than this are treated as touching.
constexpr double kTouchTolerance = 1e-6;

/// Minimum Euclidean distance between the two closed point sets
/// (polygons include their interior). Zero iff they touch or overlap.
double min_distance(const Geometry& a, const Geometry& b);

/// Precedence: contains/within > adjacent > intersects > disjoint.
///  - contains/within: one closed point set lies inside the other's
///  - adjacent: closures meet, interiors do not
///  - intersects: interiors share points
TopoRelation classify_relation(const Geometry& a, const Geometry& b);

/// True iff min_distance(anchor, member) <= radius. Negative radius throws.
bool within_buffer(const Geometry& anchor, const Geometry& member, double radius);

struct GeometryDescriptors {
    Vec2 centroid;
    double length = 0.0;  // polyline length or polygon perimeter
    double area = 0.0;
};

GeometryDescriptors geometry_descriptors(const Geometry& g);

/// Closure of `inner` is a subset of the closure of `outer` (within tolerance).
bool covered_by(const Geometry& inner, const Geometry& outer);

}  // namespace nara
