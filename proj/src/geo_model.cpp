#include "nara/geo_model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "nara/errors.hpp"
#include "nara/geometry_kernel.hpp"

namespace nara {

using nlohmann::json;

std::string_view to_string(GeometryKind kind) {
    switch (kind) {
        case GeometryKind::Point: return "point";
        case GeometryKind::Polyline: return "polyline";
        case GeometryKind::Polygon: return "polygon";
    }
    return "unknown";
}

GeometryKind geometry_kind_from_string(std::string_view name) {
    if (name == "point") return GeometryKind::Point;
    if (name == "polyline") return GeometryKind::Polyline;
    if (name == "polygon") return GeometryKind::Polygon;
    throw ParseError("unknown geometry kind \"" + std::string(name) + "\"");
}

Geometry Geometry::polygon(std::vector<Vec2> ring) {
    if (!ring.empty() && !(ring.front() == ring.back())) ring.push_back(ring.front());
    return {GeometryKind::Polygon, std::move(ring)};
}

Geometry Geometry::rectangle(double x0, double y0, double x1, double y1) {
    return polygon({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}});
}

BoundingBox bounding_box(const Geometry& g) {
    BoundingBox b{g.coords.at(0).x, g.coords[0].y, g.coords[0].x, g.coords[0].y};
    for (const Vec2& p : g.coords) {
        b.x_min = std::min(b.x_min, p.x);
        b.y_min = std::min(b.y_min, p.y);
        b.x_max = std::max(b.x_max, p.x);
        b.y_max = std::max(b.y_max, p.y);
    }
    return b;
}

void validate_geometry(const Geometry& g) {
    for (const Vec2& p : g.coords) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw ValidationError("non-finite coordinate");
    }
    switch (g.kind) {
        case GeometryKind::Point:
            if (g.coords.size() != 1) throw ValidationError("point must have exactly 1 vertex");
            return;
        case GeometryKind::Polyline:
            if (g.coords.size() < 2) throw ValidationError("polyline needs at least 2 vertices");
            if (kernel::polyline_length(g.coords) <= 0.0) throw ValidationError("polyline has zero length");
            return;
        case GeometryKind::Polygon: {
            if (g.coords.empty() || !(g.coords.front() == g.coords.back())) {
                throw ValidationError("polygon not closed");
            }
            if (g.coords.size() < 4) throw ValidationError("polygon ring needs at least 4 vertices");
            for (std::size_t i = 0; i + 1 < g.coords.size(); ++i) {
                if (g.coords[i] == g.coords[i + 1]) throw ValidationError("polygon not simple (repeated vertex)");
            }
            if (kernel::ring_self_intersects(g.coords)) throw ValidationError("polygon not simple");
            if (std::abs(kernel::ring_signed_area(g.coords)) <= 0.0) {
                throw ValidationError("polygon has zero area");
            }
            return;
        }
    }
}

TokenBag tokenize(std::string_view text) {
    TokenBag out;
    std::string cur;
    for (unsigned char c : text) {
        if (c >= 0x80 || std::isalnum(c)) {
            cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

TokenBag tokenize_tags(const std::vector<std::string>& tags) {
    TokenBag out;
    for (const auto& t : tags) {
        TokenBag part = tokenize(t);
        out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::size_t Dataset::index_of(std::int64_t id) const {
    // Linear fallback keeps Dataset a plain aggregate; hot paths build their own maps.
    for (std::size_t i = 0; i < entities.size(); ++i) {
        if (entities[i].id == id) return i;
    }
    throw ValidationError("unknown entity id " + std::to_string(id));
}

Dataset make_dataset(std::vector<Geoentity> entities) {
    if (entities.empty()) throw ValidationError("dataset has no entities");
    std::unordered_set<std::int64_t> seen;
    BoundingBox ext = bounding_box(entities.front().geometry);
    for (const auto& e : entities) {
        if (!seen.insert(e.id).second) throw ValidationError("duplicate entity id " + std::to_string(e.id));
        const BoundingBox b = bounding_box(e.geometry);
        ext.x_min = std::min(ext.x_min, b.x_min);
        ext.y_min = std::min(ext.y_min, b.y_min);
        ext.x_max = std::max(ext.x_max, b.x_max);
        ext.y_max = std::max(ext.y_max, b.y_max);
    }
    if (ext.width() <= 0.0) ext.x_max = ext.x_min + 1.0;
    if (ext.height() <= 0.0) ext.y_max = ext.y_min + 1.0;
    return {std::move(entities), ext};
}

namespace {

std::string with_line(std::size_t line_no, const std::string& msg) {
    if (line_no == 0) return msg;
    return "line " + std::to_string(line_no) + ": " + msg;
}

Vec2 parse_vertex(const json& v) {
    if (!v.is_array() || v.size() != 2) throw ParseError("vertex must be [x, y]");
    if (v[0].is_array()) throw ValidationError("polygon holes are not supported");
    if (!v[0].is_number() || !v[1].is_number()) throw ParseError("vertex coordinates must be numbers");
    return {v[0].get<double>(), v[1].get<double>()};
}

}  // namespace

Geoentity parse_geoentity_record(std::string_view line, std::size_t line_no) {
    json doc;
    try {
        doc = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ParseError(with_line(line_no, std::string("malformed JSON: ") + e.what()));
    }
    try {
        if (!doc.is_object()) throw ParseError("record must be a JSON object");
        Geoentity out;
        if (!doc.contains("id") || !doc["id"].is_number_integer()) throw ParseError("missing integer \"id\"");
        out.id = doc["id"].get<std::int64_t>();
        if (doc.contains("parent_id") && !doc["parent_id"].is_null()) {
            if (!doc["parent_id"].is_number_integer()) throw ParseError("\"parent_id\" must be an integer or null");
            out.parent_id = doc["parent_id"].get<std::int64_t>();
        }
        if (!doc.contains("kind") || !doc["kind"].is_string()) throw ParseError("missing string \"kind\"");
        out.geometry.kind = geometry_kind_from_string(doc["kind"].get<std::string>());
        if (!doc.contains("coords") || !doc["coords"].is_array()) throw ParseError("missing array \"coords\"");
        for (const auto& v : doc["coords"]) {
            if (v.is_array() && !v.empty() && v[0].is_array()) {
                throw ValidationError("polygon holes are not supported");
            }
            out.geometry.coords.push_back(parse_vertex(v));
        }
        std::vector<std::string> tags;
        if (doc.contains("tags")) {
            if (!doc["tags"].is_array()) throw ParseError("\"tags\" must be an array of strings");
            for (const auto& t : doc["tags"]) {
                if (!t.is_string()) throw ParseError("\"tags\" must be an array of strings");
                tags.push_back(t.get<std::string>());
            }
        }
        out.tokens = tokenize_tags(tags);
        validate_geometry(out.geometry);
        return out;
    } catch (const ParseError& e) {
        throw ParseError(with_line(line_no, e.what()));
    } catch (const ValidationError& e) {
        throw ValidationError(with_line(line_no, e.what()));
    } catch (const json::exception& e) {
        throw ParseError(with_line(line_no, e.what()));
    }
}

std::string serialize_geoentity_record(const Geoentity& e) {
    json doc;
    doc["id"] = e.id;
    doc["parent_id"] = e.parent_id ? json(*e.parent_id) : json(nullptr);
    doc["kind"] = std::string(to_string(e.geometry.kind));
    json coords = json::array();
    for (const Vec2& p : e.geometry.coords) coords.push_back({p.x, p.y});
    doc["coords"] = std::move(coords);
    doc["tags"] = e.tokens;
    return doc.dump();
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open dataset file " + path);
    std::vector<Geoentity> entities;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        entities.push_back(parse_geoentity_record(line, line_no));
    }
    return make_dataset(std::move(entities));
}

void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write dataset file " + path);
    for (const auto& e : ds.entities) out << serialize_geoentity_record(e) << '\n';
}

Vec2 project_lonlat(LonLat p, LonLat origin) {
    constexpr double kDeg = std::numbers::pi / 180.0;
    if (std::abs(p.lat_deg) >= 85.0 || std::abs(origin.lat_deg) >= 85.0) {
        throw ValidationError("latitude out of range (|lat| must be < 85 degrees)");
    }
    const double x = kEarthRadiusM * (p.lon_deg - origin.lon_deg) * kDeg * std::cos(origin.lat_deg * kDeg);
    const double y = kEarthRadiusM * (p.lat_deg - origin.lat_deg) * kDeg;
    return {x, y};
}

std::vector<Geoentity> project_lonlat(const std::vector<Geoentity>& records, LonLat origin) {
    std::vector<Geoentity> out = records;
    for (auto& e : out) {
        for (Vec2& p : e.geometry.coords) p = project_lonlat(LonLat{p.x, p.y}, origin);
        validate_geometry(e.geometry);
    }
    return out;
}

}  // namespace nara
