#include "nara/relation_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace nara::oracle {

namespace {

// Exact on-segment test; valid because sample and vertex coordinates are
// dyadic rationals.
bool on_segment_exact(Vec2 p, Vec2 a, Vec2 b) {
    const double cr = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    if (cr != 0.0) return false;
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
           p.y <= std::max(a.y, b.y);
}

bool inside_by_crossings(Vec2 p, const std::vector<Vec2>& ring) {
    bool inside = false;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
        const Vec2 a = ring[i];
        const Vec2 b = ring[i + 1];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (p.x < x) inside = !inside;
        }
    }
    return inside;
}

std::string describe(const Geometry& g) {
    std::ostringstream os;
    os << to_string(g.kind) << "[";
    for (const Vec2& p : g.coords) os << "(" << p.x << "," << p.y << ")";
    os << "]";
    return os.str();
}

}  // namespace

Label label_point(Vec2 p, const Geometry& g) {
    switch (g.kind) {
        case GeometryKind::Point:
            return p == g.coords[0] ? Label::Interior : Label::Exterior;
        case GeometryKind::Polyline: {
            const bool closed = g.coords.front() == g.coords.back();
            if (!closed && (p == g.coords.front() || p == g.coords.back())) return Label::Boundary;
            for (std::size_t i = 0; i + 1 < g.coords.size(); ++i) {
                if (on_segment_exact(p, g.coords[i], g.coords[i + 1])) return Label::Interior;
            }
            return Label::Exterior;
        }
        case GeometryKind::Polygon: {
            for (std::size_t i = 0; i + 1 < g.coords.size(); ++i) {
                if (on_segment_exact(p, g.coords[i], g.coords[i + 1])) return Label::Boundary;
            }
            return inside_by_crossings(p, g.coords) ? Label::Interior : Label::Exterior;
        }
    }
    return Label::Exterior;
}

TopoRelation rasterized_relation(const Geometry& a, const Geometry& b, double step) {
    const BoundingBox ba = bounding_box(a);
    const BoundingBox bb = bounding_box(b);
    const double x0 = std::floor(std::min(ba.x_min, bb.x_min)) - 1.0;
    const double y0 = std::floor(std::min(ba.y_min, bb.y_min)) - 1.0;
    const double x1 = std::ceil(std::max(ba.x_max, bb.x_max)) + 1.0;
    const double y1 = std::ceil(std::max(ba.y_max, bb.y_max)) + 1.0;
    const auto nx = static_cast<long>(std::lround((x1 - x0) / step));
    const auto ny = static_cast<long>(std::lround((y1 - y0) / step));

    bool closures_meet = false;
    bool interiors_meet = false;
    bool a_in_b = true;
    bool b_in_a = true;
    for (long i = 0; i <= nx; ++i) {
        for (long j = 0; j <= ny; ++j) {
            const Vec2 p{x0 + static_cast<double>(i) * step, y0 + static_cast<double>(j) * step};
            const Label la = label_point(p, a);
            const Label lb = label_point(p, b);
            const bool ca = la != Label::Exterior;
            const bool cb = lb != Label::Exterior;
            if (ca && cb) closures_meet = true;
            if (la == Label::Interior && lb == Label::Interior) interiors_meet = true;
            if (ca && !cb) a_in_b = false;
            if (cb && !ca) b_in_a = false;
        }
    }
    if (!closures_meet) return TopoRelation::Disjoint;
    if (a_in_b || b_in_a) return TopoRelation::ContainsWithin;
    if (interiors_meet) return TopoRelation::Intersects;
    return TopoRelation::Adjacent;
}

Geometry random_grid_shape(Rng& rng, int grid) {
    const auto coord = [&](int max) { return static_cast<double>(uniform_index(rng, static_cast<std::uint64_t>(max) + 1)); };
    const auto length = [&]() { return static_cast<double>(1 + uniform_index(rng, 3)); };
    static constexpr Vec2 kDirs[] = {{1, 0}, {0, 1}, {1, 1}, {1, -1}, {-1, 0}, {0, -1}, {-1, -1}, {-1, 1}};
    const auto in_grid = [&](Vec2 p) { return p.x >= 0 && p.y >= 0 && p.x <= grid && p.y <= grid; };

    for (;;) {
        switch (uniform_index(rng, 4)) {
            case 0:
                return Geometry::point({coord(grid), coord(grid)});
            case 1: {
                const Vec2 start{coord(grid), coord(grid)};
                std::vector<Vec2> pts{start};
                const std::size_t n_seg = 1 + uniform_index(rng, 2);
                Vec2 prev_dir{0, 0};
                bool ok = true;
                for (std::size_t s = 0; s < n_seg; ++s) {
                    const Vec2 dir = kDirs[uniform_index(rng, 8)];
                    if (s > 0 && (dir.x * prev_dir.y - dir.y * prev_dir.x) == 0.0) {
                        ok = false;  // collinear continuation or fold-back
                        break;
                    }
                    const Vec2 next = pts.back() + length() * dir;
                    if (!in_grid(next)) {
                        ok = false;
                        break;
                    }
                    pts.push_back(next);
                    prev_dir = dir;
                }
                if (!ok) continue;
                return Geometry::polyline(std::move(pts));
            }
            case 2: {
                const double x = coord(grid - 1);
                const double y = coord(grid - 1);
                const double w = std::min<double>(length(), grid - x);
                const double h = std::min<double>(length(), grid - y);
                return Geometry::rectangle(x, y, x + w, y + h);
            }
            default: {
                const double x = coord(grid - 1);
                const double y = coord(grid - 1);
                const double leg = std::min({length(), grid - x, grid - y});
                // Orientation picks which corner carries the right angle.
                switch (uniform_index(rng, 4)) {
                    case 0: return Geometry::polygon({{x, y}, {x + leg, y}, {x, y + leg}});
                    case 1: return Geometry::polygon({{x, y}, {x + leg, y}, {x + leg, y + leg}});
                    case 2: return Geometry::polygon({{x + leg, y}, {x + leg, y + leg}, {x, y + leg}});
                    default: return Geometry::polygon({{x, y}, {x + leg, y + leg}, {x, y + leg}});
                }
            }
        }
    }
}

AgreementReport run_agreement(std::size_t n_pairs, std::uint64_t seed, int grid) {
    AgreementReport rep;
    Rng rng = make_rng(seed, "relcheck");
    for (std::size_t k = 0; k < n_pairs; ++k) {
        const Geometry a = random_grid_shape(rng, grid);
        const Geometry b = random_grid_shape(rng, grid);
        const TopoRelation fast_ab = classify_relation(a, b);
        const TopoRelation fast_ba = classify_relation(b, a);
        const TopoRelation slow = rasterized_relation(a, b);
        ++rep.pairs;
        if (fast_ab == fast_ba) ++rep.symmetric;
        if (fast_ab == slow) {
            ++rep.agreements;
        } else if (rep.disagreements.size() < 10) {
            rep.disagreements.push_back(describe(a) + " vs " + describe(b) + ": classify=" +
                                        std::string(to_string(fast_ab)) + " oracle=" + std::string(to_string(slow)));
        }
    }
    return rep;
}

}  // namespace nara::oracle
