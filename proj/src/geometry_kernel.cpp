#include "nara/geometry_kernel.hpp"

#include <algorithm>
#include <cmath>

namespace nara::kernel {

double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

Vec2 closest_point_on_segment(Vec2 p, const Segment& s) {
    const Vec2 d = s.b - s.a;
    const double len2 = dot(d, d);
    if (len2 == 0.0) return s.a;
    const double t = std::clamp(dot(p - s.a, d) / len2, 0.0, 1.0);
    return s.a + t * d;
}

double point_segment_distance(Vec2 p, const Segment& s) {
    return distance(p, closest_point_on_segment(p, s));
}

namespace {

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

bool on_segment_collinear(Vec2 p, const Segment& s) {
    return std::min(s.a.x, s.b.x) <= p.x && p.x <= std::max(s.a.x, s.b.x) &&
           std::min(s.a.y, s.b.y) <= p.y && p.y <= std::max(s.a.y, s.b.y);
}

}  // namespace

bool segments_intersect(const Segment& s, const Segment& t) {
    const int o1 = sign_of(cross(s.a, s.b, t.a));
    const int o2 = sign_of(cross(s.a, s.b, t.b));
    const int o3 = sign_of(cross(t.a, t.b, s.a));
    const int o4 = sign_of(cross(t.a, t.b, s.b));
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment_collinear(t.a, s)) return true;
    if (o2 == 0 && on_segment_collinear(t.b, s)) return true;
    if (o3 == 0 && on_segment_collinear(s.a, t)) return true;
    if (o4 == 0 && on_segment_collinear(s.b, t)) return true;
    return false;
}

double segment_distance(const Segment& s, const Segment& t) {
    if (segments_intersect(s, t)) return 0.0;
    return std::min({point_segment_distance(s.a, t), point_segment_distance(s.b, t),
                     point_segment_distance(t.a, s), point_segment_distance(t.b, s)});
}

std::vector<double> intersection_params(const Segment& s, const Segment& t, double tol) {
    std::vector<double> out;
    const Vec2 d = s.b - s.a;
    const Vec2 e = t.b - t.a;
    const double len_s = std::hypot(d.x, d.y);
    if (len_s == 0.0) return out;
    const double len_t = std::hypot(e.x, e.y);
    const double denom = d.x * e.y - d.y * e.x;
    const auto param_of = [&](Vec2 p) { return dot(p - s.a, d) / (len_s * len_s); };

    if (len_t == 0.0 || std::abs(denom) <= 1e-12 * len_s * len_t) {
        // Parallel (or degenerate t): only collinear overlap matters.
        if (point_segment_distance(t.a, s) > tol && point_segment_distance(t.b, s) > tol &&
            point_segment_distance(s.a, t) > tol && point_segment_distance(s.b, t) > tol) {
            return out;
        }
        const double dist_line = std::abs(cross(s.a, s.b, t.a)) / len_s;
        if (dist_line > tol) return out;
        double u0 = param_of(t.a);
        double u1 = param_of(t.b);
        if (u0 > u1) std::swap(u0, u1);
        const double utol = tol / len_s;
        if (u1 < -utol || u0 > 1.0 + utol) return out;
        const double lo = std::clamp(u0, 0.0, 1.0);
        const double hi = std::clamp(u1, 0.0, 1.0);
        out.push_back(lo);
        if (hi - lo > utol) out.push_back(hi);
        return out;
    }

    const Vec2 w = t.a - s.a;
    const double u = (w.x * e.y - w.y * e.x) / denom;
    const double v = (w.x * d.y - w.y * d.x) / denom;
    const double utol = tol / len_s;
    const double vtol = tol / len_t;
    if (u >= -utol && u <= 1.0 + utol && v >= -vtol && v <= 1.0 + vtol) {
        out.push_back(std::clamp(u, 0.0, 1.0));
    }
    return out;
}

std::vector<Segment> segments_of(const Geometry& g) {
    std::vector<Segment> out;
    if (g.coords.size() == 1) {
        out.push_back({g.coords[0], g.coords[0]});
        return out;
    }
    out.reserve(g.coords.size() - 1);
    for (std::size_t i = 0; i + 1 < g.coords.size(); ++i) out.push_back({g.coords[i], g.coords[i + 1]});
    return out;
}

double ring_signed_area(std::span<const Vec2> ring) {
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
        acc += ring[i].x * ring[i + 1].y - ring[i + 1].x * ring[i].y;
    }
    return 0.5 * acc;
}

double polyline_length(std::span<const Vec2> pts) {
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) acc += distance(pts[i], pts[i + 1]);
    return acc;
}

RingLocation locate_in_ring(Vec2 p, std::span<const Vec2> ring, double tol) {
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
        if (point_segment_distance(p, {ring[i], ring[i + 1]}) <= tol) return RingLocation::Boundary;
    }
    bool inside = false;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
        const Vec2 a = ring[i];
        const Vec2 b = ring[i + 1];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (p.x < x_cross) inside = !inside;
        }
    }
    return inside ? RingLocation::Inside : RingLocation::Outside;
}

bool ring_self_intersects(std::span<const Vec2> ring) {
    const std::size_t n = ring.size() - 1;  // edge count
    for (std::size_t i = 0; i < n; ++i) {
        const Segment si{ring[i], ring[i + 1]};
        for (std::size_t j = i + 1; j < n; ++j) {
            const Segment sj{ring[j], ring[j + 1]};
            const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
            if (!adjacent) {
                if (segments_intersect(si, sj)) return true;
                continue;
            }
            // Adjacent edges share one vertex; folding back onto each other is a spike.
            const Vec2 shared = (j == i + 1) ? ring[i + 1] : ring[0];
            const Vec2 p = (j == i + 1) ? si.a : si.b;
            const Vec2 q = (j == i + 1) ? sj.b : sj.a;
            if (cross(shared, p, q) == 0.0 && dot(p - shared, q - shared) > 0.0) return true;
        }
    }
    return false;
}

Vec2 point_at_fraction(std::span<const Vec2> pts, double t) {
    if (pts.size() == 1) return pts[0];
    const double total = polyline_length(pts);
    if (total == 0.0) return pts[0];
    double target = std::clamp(t, 0.0, 1.0) * total;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const double len = distance(pts[i], pts[i + 1]);
        if (target <= len || i + 2 == pts.size()) {
            const double f = len > 0.0 ? std::clamp(target / len, 0.0, 1.0) : 0.0;
            return pts[i] + f * (pts[i + 1] - pts[i]);
        }
        target -= len;
    }
    return pts.back();
}

}  // namespace nara::kernel
