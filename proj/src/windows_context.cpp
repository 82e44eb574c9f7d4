#include "nara/windows_context.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include "nara/errors.hpp"

namespace nara {

namespace {

std::vector<double> origins(double lo, double extent, double size, double stride) {
    std::vector<double> out;
    if (extent <= size) return {lo};
    const auto steps = static_cast<long>(std::floor((extent - size) / stride + 1e-9));
    for (long k = 0; k <= steps; ++k) out.push_back(lo + static_cast<double>(k) * stride);
    return out;
}

Geometry square(const BoundingBox& b) { return Geometry::rectangle(b.x_min, b.y_min, b.x_max, b.y_max); }

// Draw min(k, n) distinct values from [0, n) in random order.
std::vector<std::size_t> draw_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    k = std::min(k, n);
    for (std::size_t t = 0; t < k; ++t) std::swap(idx[t], idx[t + uniform_index(rng, n - t)]);
    idx.resize(k);
    return idx;
}

}  // namespace

std::vector<SpatialWindow> build_windows(const BoundingBox& extent, double size, double stride) {
    if (!(size > 0) || !(stride > 0) || stride > size) throw ValidationError("window size/stride must satisfy 0 < stride <= size");
    std::vector<SpatialWindow> out;
    for (double y : origins(extent.y_min, extent.height(), size, stride)) {
        for (double x : origins(extent.x_min, extent.width(), size, stride)) {
            SpatialWindow w;
            w.index = static_cast<int>(out.size());
            w.bounds = {x, y, x + size, y + size};
            out.push_back(std::move(w));
        }
    }
    return out;
}

bool intersects_bounds(const Geometry& g, const BoundingBox& bounds) {
    if (!bounding_box(g).intersects(bounds)) return false;
    return min_distance(g, square(bounds)) <= kTouchTolerance;
}

void assign_members(std::vector<SpatialWindow>& windows, const Dataset& data, std::size_t cap) {
    std::vector<BoundingBox> boxes;
    boxes.reserve(data.entities.size());
    for (const auto& e : data.entities) boxes.push_back(bounding_box(e.geometry));
    for (auto& w : windows) {
        w.members.clear();
        const Geometry sq = square(w.bounds);
        for (std::size_t k = 0; k < data.entities.size(); ++k) {
            if (!boxes[k].intersects(w.bounds)) continue;
            if (min_distance(data.entities[k].geometry, sq) <= kTouchTolerance) w.members.push_back(k);
        }
        if (w.members.size() <= cap) continue;
        const Geometry c = Geometry::point(w.center());
        std::vector<std::pair<double, std::size_t>> ranked;
        for (std::size_t k : w.members) ranked.emplace_back(min_distance(c, data.entities[k].geometry), k);
        std::sort(ranked.begin(), ranked.end());
        ranked.resize(cap);
        w.members.clear();
        for (const auto& [d, k] : ranked) w.members.push_back(k);
        std::sort(w.members.begin(), w.members.end());
    }
}

std::vector<int> select_masks(int n_members, double ratio, Rng& rng) {
    if (!(ratio > 0 && ratio < 1)) throw ValidationError("mask ratio must lie in (0, 1)");
    if (n_members < 2) return {};
    const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(ratio * n_members)));
    std::vector<int> out;
    for (std::size_t v : draw_without_replacement(static_cast<std::size_t>(n_members), k, rng))
        out.push_back(static_cast<int>(v));
    std::sort(out.begin(), out.end());
    return out;
}

PairTable::PairTable(const std::vector<Geoentity>& entities) : n_(static_cast<int>(entities.size())) {
    const auto n = static_cast<std::size_t>(n_);
    dist_.assign(n * n, 0.0);
    rel_.assign(n * n, TopoRelation::ContainsWithin);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const Geometry& a = entities[i].geometry;
            const Geometry& b = entities[j].geometry;
            const double d = min_distance(a, b);
            const TopoRelation r = d > kTouchTolerance ? TopoRelation::Disjoint : classify_relation(a, b);
            dist_[i * n + j] = dist_[j * n + i] = d;
            rel_[i * n + j] = rel_[j * n + i] = r;
        }
    }
}

TopoRelation relation_to_anchor(const Geometry& member, const std::vector<const Geometry*>& parts) {
    bool all_cover = true, any_interior = false, any_touch = false, any_cover = false;
    for (const Geometry* p : parts) {
        const TopoRelation r = classify_relation(member, *p);
        any_cover |= r == TopoRelation::ContainsWithin;
        all_cover &= r == TopoRelation::ContainsWithin;
        any_interior |= r == TopoRelation::Intersects || r == TopoRelation::ContainsWithin;
        any_touch |= r == TopoRelation::Adjacent;
    }
    if (member.kind != GeometryKind::Polygon) {
        // points and lines lying on any one segment lie on the union
        if (any_cover) return TopoRelation::ContainsWithin;
    } else if (all_cover && !parts.empty()) {
        return TopoRelation::ContainsWithin;
    }
    if (any_interior) return TopoRelation::Intersects;
    if (any_touch) return TopoRelation::Adjacent;
    return TopoRelation::Disjoint;
}

std::vector<SiblingGroup> build_sibling_groups(const std::vector<Geoentity>& entities) {
    using Key = std::tuple<int, std::int64_t, int, int>;  // anchor kind, key, relation, member kind
    std::map<Key, std::vector<int>> groups;
    const int n = static_cast<int>(entities.size());

    std::map<std::int64_t, std::vector<int>> ways;
    for (int a = 0; a < n; ++a)
        if (entities[a].geometry.kind == GeometryKind::Polyline) ways[entities[a].anchor_key()].push_back(a);

    for (const auto& [key, segs] : ways) {
        std::vector<const Geometry*> parts;
        for (int s : segs) parts.push_back(&entities[s].geometry);
        for (int m = 0; m < n; ++m) {
            const Geometry& g = entities[m].geometry;
            if (g.kind == GeometryKind::Polyline) continue;
            bool near = false;
            for (const Geometry* p : parts) near = near || within_buffer(*p, g, kLineAnchorBuffer);
            if (!near) continue;
            const TopoRelation r = relation_to_anchor(g, parts);
            groups[{static_cast<int>(GeometryKind::Polyline), key, static_cast<int>(r), static_cast<int>(g.kind)}]
                .push_back(m);
        }
    }
    for (int a = 0; a < n; ++a) {
        const Geometry& anchor = entities[a].geometry;
        if (anchor.kind != GeometryKind::Polygon) continue;
        for (int m = 0; m < n; ++m) {
            const Geometry& g = entities[m].geometry;
            if (g.kind != GeometryKind::Point || !within_buffer(anchor, g, kPolygonAnchorBuffer)) continue;
            const TopoRelation r = classify_relation(g, anchor);
            groups[{static_cast<int>(GeometryKind::Polygon), entities[a].anchor_key(), static_cast<int>(r),
                    static_cast<int>(GeometryKind::Point)}]
                .push_back(m);
        }
    }

    std::vector<SiblingGroup> out;
    for (auto& [k, members] : groups) {
        SiblingGroup g;
        g.anchor_kind = static_cast<GeometryKind>(std::get<0>(k));
        g.anchor_key = std::get<1>(k);
        g.relation = static_cast<TopoRelation>(std::get<2>(k));
        g.member_type = static_cast<GeometryKind>(std::get<3>(k));
        std::sort(members.begin(), members.end());
        members.erase(std::unique(members.begin(), members.end()), members.end());
        g.members = std::move(members);
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<int> WindowContext::siblings_of(int i) const {
    std::vector<int> out;
    for (int j = 0; j < size(); ++j)
        if (j != i && are_siblings(i, j)) out.push_back(j);
    return out;
}

WindowContext make_window_context(const SpatialWindow& window, const Dataset& data) {
    WindowContext ctx;
    ctx.window = window;
    for (std::size_t k : window.members) ctx.entities.push_back(data.entities[k]);
    ctx.pairs = PairTable(ctx.entities);
    ctx.groups = build_sibling_groups(ctx.entities);
    const auto n = static_cast<std::size_t>(ctx.size());
    ctx.sibling.assign(n * n, 0);
    for (const auto& g : ctx.groups)
        for (int a : g.members)
            for (int b : g.members)
                if (a != b) ctx.sibling[static_cast<std::size_t>(a) * n + static_cast<std::size_t>(b)] = 1;
    return ctx;
}

std::vector<PairSample> sample_geo_pairs(const WindowContext& ctx, int n_random, int n_hard, Rng& rng) {
    const int n = ctx.size();
    std::vector<std::pair<int, int>> hard_pool, all;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            all.emplace_back(i, j);
            if (ctx.pairs.relation(i, j) != TopoRelation::Disjoint) hard_pool.emplace_back(i, j);
        }
    }
    const auto make = [&](std::pair<int, int> p, PairKind kind) {
        return PairSample{p.first, p.second, ctx.pairs.distance(p.first, p.second),
                          ctx.pairs.relation(p.first, p.second), kind};
    };
    std::vector<PairSample> out;
    std::vector<std::uint8_t> taken(static_cast<std::size_t>(n * n), 0);
    for (std::size_t k : draw_without_replacement(hard_pool.size(), static_cast<std::size_t>(std::max(0, n_hard)), rng)) {
        out.push_back(make(hard_pool[k], PairKind::Hard));
        taken[static_cast<std::size_t>(hard_pool[k].first * n + hard_pool[k].second)] = 1;
    }
    std::vector<std::pair<int, int>> rest;
    for (const auto& p : all)
        if (!taken[static_cast<std::size_t>(p.first * n + p.second)]) rest.push_back(p);
    for (std::size_t k : draw_without_replacement(rest.size(), static_cast<std::size_t>(std::max(0, n_random)), rng))
        out.push_back(make(rest[k], PairKind::Random));
    return out;
}

std::vector<PairSample> sample_global_pairs(const WindowContext& ctx, int n_global, Rng& rng, double radius) {
    const int n = ctx.size();
    std::vector<std::pair<int, int>> pool;
    for (int i = 0; i < n; ++i) {
        const GeometryKind t = ctx.entities[static_cast<std::size_t>(i)].geometry.kind;
        if (t == GeometryKind::Polyline) continue;
        for (int j = i + 1; j < n; ++j) {
            if (ctx.entities[static_cast<std::size_t>(j)].geometry.kind != t) continue;
            if (ctx.pairs.distance(i, j) > radius || ctx.are_siblings(i, j)) continue;
            pool.emplace_back(i, j);
        }
    }
    std::vector<PairSample> out;
    for (std::size_t k : draw_without_replacement(pool.size(), static_cast<std::size_t>(std::max(0, n_global)), rng)) {
        const auto [i, j] = pool[k];
        out.push_back({i, j, ctx.pairs.distance(i, j), ctx.pairs.relation(i, j), PairKind::GlobalBaseline});
    }
    return out;
}

}  // namespace nara
