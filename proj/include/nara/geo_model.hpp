#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nara {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }

enum class GeometryKind : std::uint8_t { Point = 0, Polyline = 1, Polygon = 2 };

std::string_view to_string(GeometryKind kind);
GeometryKind geometry_kind_from_string(std::string_view name);

/// Planar geometry in meters. Polygons are a single closed exterior ring
/// (first vertex repeated at the end).
struct Geometry {
    GeometryKind kind = GeometryKind::Point;
    std::vector<Vec2> coords;

    static Geometry point(Vec2 p) { return {GeometryKind::Point, {p}}; }
    static Geometry polyline(std::vector<Vec2> pts) { return {GeometryKind::Polyline, std::move(pts)}; }
    /// Closes the ring if the caller passed it open.
    static Geometry polygon(std::vector<Vec2> ring);
    static Geometry rectangle(double x0, double y0, double x1, double y1);

    friend bool operator==(const Geometry&, const Geometry&) = default;
};

struct BoundingBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    bool intersects(const BoundingBox& o) const {
        return x_min <= o.x_max && o.x_min <= x_max && y_min <= o.y_max && o.y_min <= y_max;
    }
    BoundingBox expanded(double margin) const {
        return {x_min - margin, y_min - margin, x_max + margin, y_max + margin};
    }
};

BoundingBox bounding_box(const Geometry& g);

/// Throws ValidationError naming the violated invariant.
void validate_geometry(const Geometry& g);

using TokenBag = std::vector<std::string>;  // multiset, kept sorted

struct Geoentity {
    std::int64_t id = 0;
    std::optional<std::int64_t> parent_id;
    TokenBag tokens;
    Geometry geometry;

    /// Anchor identity: parent way for noded polyline segments, else own id.
    std::int64_t anchor_key() const { return parent_id.value_or(id); }

    friend bool operator==(const Geoentity&, const Geoentity&) = default;
};

/// Lowercase, split on non-alphanumerics, keep duplicates. Bytes >= 0x80
/// are kept inside tokens so UTF-8 words survive intact.
TokenBag tokenize(std::string_view text);

/// Canonical sorted multiset of the tokens of all tags.
TokenBag tokenize_tags(const std::vector<std::string>& tags);

struct Dataset {
    std::vector<Geoentity> entities;
    BoundingBox extent;

    std::size_t index_of(std::int64_t id) const;  // throws if missing
};

/// Builds a dataset, checking id uniqueness and deriving the extent.
/// A degenerate extent axis is widened to 1 m.
Dataset make_dataset(std::vector<Geoentity> entities);

/// Parses one line-delimited JSON record. `line_no` only decorates errors.
Geoentity parse_geoentity_record(std::string_view line, std::size_t line_no = 0);

std::string serialize_geoentity_record(const Geoentity& e);

Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& ds, const std::string& path);

struct LonLat {
    double lon_deg = 0.0;
    double lat_deg = 0.0;
};

constexpr double kEarthRadiusM = 6371000.0;

/// Local equirectangular projection to planar meters around `origin`.
Vec2 project_lonlat(LonLat p, LonLat origin);

/// Projects every coordinate of records given in lon/lat degrees and
/// revalidates the projected geometry.
std::vector<Geoentity> project_lonlat(const std::vector<Geoentity>& records, LonLat origin);

}  // namespace nara
