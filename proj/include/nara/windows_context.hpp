#pragma once

#include <cstdint>
#include <vector>

#include "nara/geo_model.hpp"
#include "nara/seeding.hpp"
#include "nara/spatial_relations.hpp"

namespace nara {

inline constexpr std::size_t kWindowMemberCap = 128;
inline constexpr double kLineAnchorBuffer = 30.0;
inline constexpr double kPolygonAnchorBuffer = 5.0;
inline constexpr double kGlobalPairRadius = 100.0;

struct SpatialWindow {
    int index = 0;
    BoundingBox bounds;
    std::vector<std::size_t> members;  // dataset indices, ascending

    double size() const { return bounds.width(); }
    Vec2 center() const { return {0.5 * (bounds.x_min + bounds.x_max), 0.5 * (bounds.y_min + bounds.y_max)}; }
};

/// Origins at x_min + k*stride for k = 0..floor((width - size)/stride), same
/// for y. An extent smaller than `size` still gets one window.
std::vector<SpatialWindow> build_windows(const BoundingBox& extent, double size, double stride);

/// True iff the closed geometry touches the closed square.
bool intersects_bounds(const Geometry& g, const BoundingBox& bounds);

/// Fills `members` for every window; over-full windows keep the `cap`
/// entities nearest the center (ties broken by dataset index).
void assign_members(std::vector<SpatialWindow>& windows, const Dataset& data,
                    std::size_t cap = kWindowMemberCap);

/// Local member indices to mask: max(1, floor(ratio*n)) when n >= 2,
/// otherwise none. Sorted ascending.
std::vector<int> select_masks(int n_members, double ratio, Rng& rng);

struct SiblingGroup {
    std::int64_t anchor_key = 0;  // parent way id for polylines
    GeometryKind anchor_kind = GeometryKind::Polygon;
    TopoRelation relation = TopoRelation::Disjoint;
    GeometryKind member_type = GeometryKind::Point;
    std::vector<int> members;  // local indices, ascending
};

enum class PairKind { Random, Hard, GlobalBaseline };

struct PairSample {
    int i = 0;  // local indices, i < j
    int j = 0;
    double distance = 0.0;
    TopoRelation relation = TopoRelation::Disjoint;
    PairKind kind = PairKind::Random;
};

/// Exact pairwise distances and relations among window members.
class PairTable {
public:
    PairTable() = default;
    explicit PairTable(const std::vector<Geoentity>& entities);

    int size() const { return n_; }
    double distance(int i, int j) const { return dist_[static_cast<std::size_t>(i * n_ + j)]; }
    TopoRelation relation(int i, int j) const { return rel_[static_cast<std::size_t>(i * n_ + j)]; }

private:
    int n_ = 0;
    std::vector<double> dist_;
    std::vector<TopoRelation> rel_;
};

/// Relation of `member` to the union of an anchor's segments.
TopoRelation relation_to_anchor(const Geometry& member, const std::vector<const Geometry*>& anchor_parts);

std::vector<SiblingGroup> build_sibling_groups(const std::vector<Geoentity>& entities);

/// Everything about a window that does not change between epochs.
struct WindowContext {
    SpatialWindow window;
    std::vector<Geoentity> entities;  // member copies, in `window.members` order
    PairTable pairs;
    std::vector<SiblingGroup> groups;
    std::vector<std::uint8_t> sibling;  // n*n co-membership flags

    int size() const { return static_cast<int>(entities.size()); }
    bool are_siblings(int i, int j) const { return sibling[static_cast<std::size_t>(i * size() + j)] != 0; }
    /// Distinct siblings of i over all groups, ascending.
    std::vector<int> siblings_of(int i) const;
};

WindowContext make_window_context(const SpatialWindow& window, const Dataset& data);

/// Up to n_hard non-disjoint pairs, then up to n_random pairs from the rest.
std::vector<PairSample> sample_geo_pairs(const WindowContext& ctx, int n_random, int n_hard, Rng& rng);

/// Same-type (point or polygon) pairs within `radius` that share no sibling group.
std::vector<PairSample> sample_global_pairs(const WindowContext& ctx, int n_global, Rng& rng,
                                            double radius = kGlobalPairRadius);

}  // namespace nara
