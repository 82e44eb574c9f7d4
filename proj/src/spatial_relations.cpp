#include "nara/spatial_relations.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "nara/errors.hpp"
#include "nara/geometry_kernel.hpp"

namespace nara {

using kernel::RingLocation;
using kernel::Segment;

std::string_view to_string(TopoRelation r) {
    switch (r) {
        case TopoRelation::Disjoint: return "disjoint";
        case TopoRelation::Intersects: return "intersects";
        case TopoRelation::Adjacent: return "adjacent";
        case TopoRelation::ContainsWithin: return "contains_within";
    }
    return "unknown";
}

namespace {

bool is_point(const Geometry& g) { return g.kind == GeometryKind::Point; }
bool is_polyline(const Geometry& g) { return g.kind == GeometryKind::Polyline; }
bool is_polygon(const Geometry& g) { return g.kind == GeometryKind::Polygon; }

double distance_to_curve(Vec2 p, const Geometry& g) {
    double best = std::numeric_limits<double>::infinity();
    for (const Segment& s : kernel::segments_of(g)) best = std::min(best, kernel::point_segment_distance(p, s));
    return best;
}

/// Midpoints of the pieces of `a`'s edges after splitting them wherever
/// `b`'s edges meet them. Each piece is entirely inside, outside, or on `b`.
std::vector<Vec2> split_midpoints(const Geometry& a, const Geometry& b) {
    std::vector<Vec2> mids;
    const auto b_segs = kernel::segments_of(b);
    for (const Segment& s : kernel::segments_of(a)) {
        const double len = kernel::distance(s.a, s.b);
        if (len == 0.0) continue;
        std::vector<double> cuts{0.0, 1.0};
        for (const Segment& t : b_segs) {
            for (double u : kernel::intersection_params(s, t, kTouchTolerance)) cuts.push_back(u);
        }
        std::sort(cuts.begin(), cuts.end());
        const double min_piece = kTouchTolerance / len;
        for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
            if (cuts[k + 1] - cuts[k] <= min_piece) continue;
            const double u = 0.5 * (cuts[k] + cuts[k + 1]);
            mids.push_back(s.a + u * (s.b - s.a));
        }
    }
    return mids;
}

bool point_in_closure(Vec2 p, const Geometry& g) {
    switch (g.kind) {
        case GeometryKind::Point: return kernel::distance(p, g.coords[0]) <= kTouchTolerance;
        case GeometryKind::Polyline: return distance_to_curve(p, g) <= kTouchTolerance;
        case GeometryKind::Polygon:
            return kernel::locate_in_ring(p, g.coords, kTouchTolerance) != RingLocation::Outside;
    }
    return false;
}

bool polyline_is_closed(const Geometry& g) { return g.coords.front() == g.coords.back(); }

bool near_polyline_endpoint(Vec2 p, const Geometry& g) {
    if (polyline_is_closed(g)) return false;
    return kernel::distance(p, g.coords.front()) <= kTouchTolerance ||
           kernel::distance(p, g.coords.back()) <= kTouchTolerance;
}

bool polylines_share_interior(const Geometry& a, const Geometry& b) {
    for (const Segment& s : kernel::segments_of(a)) {
        for (const Segment& t : kernel::segments_of(b)) {
            const auto params = kernel::intersection_params(s, t, kTouchTolerance);
            if (params.size() == 2) return true;  // collinear overlap of positive length
            if (params.size() == 1) {
                const Vec2 p = s.a + params[0] * (s.b - s.a);
                if (!near_polyline_endpoint(p, a) && !near_polyline_endpoint(p, b)) return true;
            }
        }
    }
    return false;
}

bool has_piece_strictly_inside(const Geometry& a, const Geometry& polygon) {
    for (const Vec2& m : split_midpoints(a, polygon)) {
        if (kernel::locate_in_ring(m, polygon.coords, kTouchTolerance) == RingLocation::Inside) return true;
    }
    return false;
}

bool interiors_intersect(const Geometry& a, const Geometry& b) {
    if (is_point(a) || is_point(b)) {
        // A point touching anything is covered by it; handled before this call.
        return false;
    }
    if (is_polyline(a) && is_polyline(b)) return polylines_share_interior(a, b);
    if (is_polygon(b)) {
        if (has_piece_strictly_inside(a, b)) return true;
        if (is_polygon(a)) return has_piece_strictly_inside(b, a);
        return false;
    }
    return has_piece_strictly_inside(b, a);  // polygon a, polyline b
}

}  // namespace

bool covered_by(const Geometry& inner, const Geometry& outer) {
    if (is_polygon(inner) && !is_polygon(outer)) return false;
    if (is_polyline(inner) && is_point(outer)) return false;
    for (const Vec2& p : inner.coords) {
        if (!point_in_closure(p, outer)) return false;
    }
    if (is_point(inner)) return true;
    for (const Vec2& m : split_midpoints(inner, outer)) {
        if (!point_in_closure(m, outer)) return false;
    }
    return true;
}

double min_distance(const Geometry& a, const Geometry& b) {
    if (is_polygon(b)) {
        for (const Vec2& p : a.coords) {
            if (kernel::locate_in_ring(p, b.coords, 0.0) != RingLocation::Outside) return 0.0;
        }
    }
    if (is_polygon(a)) {
        for (const Vec2& p : b.coords) {
            if (kernel::locate_in_ring(p, a.coords, 0.0) != RingLocation::Outside) return 0.0;
        }
    }
    double best = std::numeric_limits<double>::infinity();
    const auto bs = kernel::segments_of(b);
    for (const Segment& s : kernel::segments_of(a)) {
        for (const Segment& t : bs) {
            best = std::min(best, kernel::segment_distance(s, t));
            if (best == 0.0) return 0.0;
        }
    }
    return best;
}

TopoRelation classify_relation(const Geometry& a, const Geometry& b) {
    if (min_distance(a, b) > kTouchTolerance) return TopoRelation::Disjoint;
    if (covered_by(a, b) || covered_by(b, a)) return TopoRelation::ContainsWithin;
    if (interiors_intersect(a, b)) return TopoRelation::Intersects;
    return TopoRelation::Adjacent;
}

bool within_buffer(const Geometry& anchor, const Geometry& member, double radius) {
    if (radius < 0.0) throw ValidationError("buffer radius must be non-negative");
    return min_distance(anchor, member) <= radius;
}

GeometryDescriptors geometry_descriptors(const Geometry& g) {
    GeometryDescriptors d;
    switch (g.kind) {
        case GeometryKind::Point:
            d.centroid = g.coords[0];
            break;
        case GeometryKind::Polyline: {
            double total = 0.0;
            Vec2 acc;
            for (const Segment& s : kernel::segments_of(g)) {
                const double len = kernel::distance(s.a, s.b);
                acc = acc + len * (0.5 * (s.a + s.b));
                total += len;
            }
            d.length = total;
            d.centroid = total > 0.0 ? (1.0 / total) * acc : g.coords[0];
            break;
        }
        case GeometryKind::Polygon: {
            const auto& r = g.coords;
            double a2 = 0.0;
            double cx = 0.0;
            double cy = 0.0;
            for (std::size_t i = 0; i + 1 < r.size(); ++i) {
                const double c = r[i].x * r[i + 1].y - r[i + 1].x * r[i].y;
                a2 += c;
                cx += (r[i].x + r[i + 1].x) * c;
                cy += (r[i].y + r[i + 1].y) * c;
            }
            d.area = std::abs(0.5 * a2);
            d.length = kernel::polyline_length(r);
            d.centroid = {cx / (3.0 * a2), cy / (3.0 * a2)};
            break;
        }
    }
    return d;
}

}  // namespace nara
