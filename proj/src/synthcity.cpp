#include "nara/synthcity.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <limits>

#include "nara/errors.hpp"
#include "nara/seeding.hpp"
#include "nara/spatial_relations.hpp"

namespace nara {

namespace {

constexpr std::int64_t kWayIdBase = 1'000'000;

const std::array<const char*, kZoneCount> kZoneTags{"residential", "commercial", "industrial", "retail",
                                                    "civic",       "education",  "health",     "leisure"};

const std::array<std::array<const char*, 3>, kZoneCount> kZoneCategories{{
    {"house", "apartments", "kindergarten"},
    {"office", "bank", "coworking"},
    {"warehouse", "factory", "depot"},
    {"supermarket", "clothes", "mall"},
    {"townhall", "police", "library"},
    {"school", "university", "college"},
    {"clinic", "hospital", "pharmacy"},
    {"park", "cinema", "gym"},
}};

const std::array<const char*, 8> kGeneralCategories{"cafe",   "restaurant",  "fastfood", "atm",
                                                    "bakery", "convenience", "parking",  "fuel"};

// relative POI abundance and footprint size range per zone
const std::array<double, kZoneCount> kPoiRate{0.6, 1.6, 0.8, 1.8, 1.2, 1.2, 1.4, 1.4};
const std::array<std::array<double, 2>, kZoneCount> kSizeRange{{
    {12, 24}, {18, 32}, {26, 40}, {20, 36}, {16, 30}, {20, 36}, {18, 34}, {14, 30}}};

enum class RoadClass { Primary, Secondary, Residential };

const char* road_class_name(RoadClass c) {
    switch (c) {
        case RoadClass::Primary: return "primary";
        case RoadClass::Secondary: return "secondary";
        default: return "residential";
    }
}

double base_speed(RoadClass c) {
    switch (c) {
        case RoadClass::Primary: return 45.0;
        case RoadClass::Secondary: return 35.0;
        default: return 25.0;
    }
}

int categorical(Rng& rng, const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform01(rng) * total;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        if (u < weights[k]) return static_cast<int>(k);
        u -= weights[k];
    }
    return static_cast<int>(weights.size()) - 1;
}

int poisson(Rng& rng, double mean) {
    const double limit = std::exp(-mean);
    int k = 0;
    double p = uniform01(rng);
    while (p > limit) {
        ++k;
        p *= uniform01(rng);
    }
    return k;
}

std::string draw_category(Rng& rng, int zone) {
    if (uniform01(rng) < 0.6) return kZoneCategories[zone][uniform_index(rng, 3)];
    const std::uint64_t k = uniform_index(rng, kGeneralCategories.size() + 3 * kZoneCount);
    if (k < kGeneralCategories.size()) return kGeneralCategories[k];
    const std::uint64_t c = k - kGeneralCategories.size();
    return kZoneCategories[c / 3][c % 3];
}

TokenBag sorted_bag(TokenBag t) {
    std::sort(t.begin(), t.end());
    return t;
}

struct District {
    Vec2 at;
    int zone;
};

int zone_at(const std::vector<District>& ds, Vec2 p) {
    double best = std::numeric_limits<double>::infinity();
    int zone = 0;
    for (const auto& d : ds) {
        const double dd = (d.at.x - p.x) * (d.at.x - p.x) + (d.at.y - p.y) * (d.at.y - p.y);
        if (dd < best) {
            best = dd;
            zone = d.zone;
        }
    }
    return zone;
}

struct Footprint {
    BoundingBox box;
    int zone;
    std::string dominant;
};

bool inside_any(const std::vector<Footprint>& fs, Vec2 p, double margin) {
    for (const auto& f : fs) {
        const auto b = f.box.expanded(margin);
        if (p.x >= b.x_min && p.x <= b.x_max && p.y >= b.y_min && p.y <= b.y_max) return true;
    }
    return false;
}

}  // namespace

void CityParams::validate() const {
    if (!(extent > 0.0) || !(spacing > 0.0) || !(spacing < extent))
        throw ValidationError("city: spacing must be positive and smaller than the extent");
    if (spacing < 60.0) throw ValidationError("city: spacing below 60 m leaves no room for buildings");
    if (buildings_per_block < 1 || buildings_per_block > 2) throw ValidationError("city: buildings_per_block must be 1 or 2");
    if (pois_per_building < 0.0 || road_pois_per_km2 < 0.0 || !(districts_per_km2 > 0.0))
        throw ValidationError("city: densities must be non-negative");
    if (zone_priors.size() != kZoneCount) throw ValidationError("city: zone_priors needs 8 entries");
    for (double p : zone_priors) {
        if (!(p >= 0.0)) throw ValidationError("city: zone priors must be non-negative");
    }
    const auto prob = [](double v, const char* key) {
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(std::string("city: ") + key + " must lie in [0, 1]");
    };
    prob(empty_token_fraction, "empty_token_fraction");
    prob(building_tag_signal, "building_tag_signal");
    prob(building_tag_noise, "building_tag_noise");
    if (building_tag_signal + building_tag_noise > 1.0) throw ValidationError("city: tag signal plus noise exceeds 1");
    if (segments_per_way < 0) throw ValidationError("city: segments_per_way must be non-negative");
    if (!(density_radius >= 0.0) || !(speed_noise >= 0.0)) throw ValidationError("city: radii and noise must be non-negative");
}

void to_json(nlohmann::json& j, const CityParams& p) {
    j = {{"extent", p.extent},
         {"spacing", p.spacing},
         {"buildings_per_block", p.buildings_per_block},
         {"pois_per_building", p.pois_per_building},
         {"road_pois_per_km2", p.road_pois_per_km2},
         {"districts_per_km2", p.districts_per_km2},
         {"zone_priors", p.zone_priors},
         {"empty_token_fraction", p.empty_token_fraction},
         {"building_tag_signal", p.building_tag_signal},
         {"building_tag_noise", p.building_tag_noise},
         {"segments_per_way", p.segments_per_way},
         {"density_radius", p.density_radius},
         {"speed_density_coef", p.speed_density_coef},
         {"speed_noise", p.speed_noise},
         {"seed", p.seed}};
}

void from_json(const nlohmann::json& j, CityParams& p) {
    const nlohmann::json known = CityParams{};
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) throw ValidationError("city: unknown key " + key);
    }
    try {
        p.extent = j.value("extent", p.extent);
        p.spacing = j.value("spacing", p.spacing);
        p.buildings_per_block = j.value("buildings_per_block", p.buildings_per_block);
        p.pois_per_building = j.value("pois_per_building", p.pois_per_building);
        p.road_pois_per_km2 = j.value("road_pois_per_km2", p.road_pois_per_km2);
        p.districts_per_km2 = j.value("districts_per_km2", p.districts_per_km2);
        p.zone_priors = j.value("zone_priors", p.zone_priors);
        p.empty_token_fraction = j.value("empty_token_fraction", p.empty_token_fraction);
        p.building_tag_signal = j.value("building_tag_signal", p.building_tag_signal);
        p.building_tag_noise = j.value("building_tag_noise", p.building_tag_noise);
        p.segments_per_way = j.value("segments_per_way", p.segments_per_way);
        p.density_radius = j.value("density_radius", p.density_radius);
        p.speed_density_coef = j.value("speed_density_coef", p.speed_density_coef);
        p.speed_noise = j.value("speed_noise", p.speed_noise);
        p.seed = j.value("seed", p.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("city: ") + e.what());
    }
}

City generate_city(const CityParams& params) {
    params.validate();
    const double s = params.spacing;
    const int lines = static_cast<int>(std::floor(params.extent / s + 1e-9)) + 1;
    const int blocks = lines - 1;
    const double km2 = params.extent * params.extent / 1e6;

    std::vector<Geoentity> es;
    LatentLabels labels;
    std::int64_t next_id = 1;

    // roads: horizontal lines first, then vertical; one segment per grid cell edge
    Rng road_rng = make_rng(params.seed, "synth-roads");
    std::vector<std::size_t> segment_index;
    std::vector<RoadClass> segment_class;
    std::int64_t next_way = kWayIdBase;
    for (int axis = 0; axis < 2; ++axis) {
        for (int k = 0; k < lines; ++k) {
            RoadClass cls = RoadClass::Residential;
            if (k % 5 == 0) cls = RoadClass::Primary;
            else if (uniform01(road_rng) < 0.3) cls = RoadClass::Secondary;
            const std::string name = "rd" + std::to_string(axis * lines + k);
            const double c = k * s;
            for (int i = 0; i < blocks; ++i) {
                if (params.segments_per_way == 0 ? i == 0 : i % params.segments_per_way == 0) ++next_way;
                const Vec2 a = axis == 0 ? Vec2{i * s, c} : Vec2{c, i * s};
                const Vec2 b = axis == 0 ? Vec2{(i + 1) * s, c} : Vec2{c, (i + 1) * s};
                segment_index.push_back(es.size());
                segment_class.push_back(cls);
                es.push_back({next_id++, next_way, sorted_bag({"highway", road_class_name(cls), name}),
                              Geometry::polyline({a, b})});
            }
        }
    }

    Rng district_rng = make_rng(params.seed, "synth-districts");
    std::vector<District> districts;
    const int n_districts = std::max(1, static_cast<int>(std::lround(params.districts_per_km2 * km2)));
    for (int k = 0; k < n_districts; ++k) {
        const Vec2 at{uniform(district_rng, 0, params.extent), uniform(district_rng, 0, params.extent)};
        districts.push_back({at, categorical(district_rng, params.zone_priors)});
    }

    // buildings hug one side of their block, set back 3 to 10 m from the road
    Rng bld_rng = make_rng(params.seed, "synth-buildings");
    std::vector<Footprint> footprints;
    std::vector<std::size_t> building_index;
    for (int bj = 0; bj < blocks; ++bj) {
        for (int bi = 0; bi < blocks; ++bi) {
            const double x0 = bi * s, y0 = bj * s;
            std::vector<int> sides;
            if (params.buildings_per_block == 2) sides = {0, 1};
            else sides = {static_cast<int>(uniform_index(bld_rng, 4))};
            for (int side : sides) {
                const Vec2 nominal = side == 0   ? Vec2{x0 + s / 2, y0 + s - 25}
                                     : side == 1 ? Vec2{x0 + s / 2, y0 + 25}
                                     : side == 2 ? Vec2{x0 + s - 25, y0 + s / 2}
                                                 : Vec2{x0 + 25, y0 + s / 2};
                const int zone = zone_at(districts, nominal);
                const auto [lo, hi] = kSizeRange[zone];
                const double w = uniform(bld_rng, lo, hi), h = uniform(bld_rng, lo, hi);
                const double setback = uniform(bld_rng, 3, 10);
                const double shift = uniform(bld_rng, -15, 15);
                BoundingBox box;
                switch (side) {
                    case 0: box = {x0 + s / 2 + shift - w / 2, y0 + s - setback - h, x0 + s / 2 + shift + w / 2, y0 + s - setback}; break;
                    case 1: box = {x0 + s / 2 + shift - w / 2, y0 + setback, x0 + s / 2 + shift + w / 2, y0 + setback + h}; break;
                    case 2: box = {x0 + s - setback - w, y0 + s / 2 + shift - h / 2, x0 + s - setback, y0 + s / 2 + shift + h / 2}; break;
                    default: box = {x0 + setback, y0 + s / 2 + shift - h / 2, x0 + setback + w, y0 + s / 2 + shift + h / 2}; break;
                }
                TokenBag tags{"building"};
                const double u = uniform01(bld_rng);
                if (u < params.building_tag_signal) tags.push_back(kZoneTags[zone]);
                else if (u < params.building_tag_signal + params.building_tag_noise)
                    tags.push_back(kZoneTags[uniform_index(bld_rng, kZoneCount)]);
                building_index.push_back(es.size());
                labels.zone[next_id] = zone;
                es.push_back({next_id++, std::nullopt, sorted_bag(tags),
                              Geometry::rectangle(box.x_min, box.y_min, box.x_max, box.y_max)});
                footprints.push_back({box, zone, draw_category(bld_rng, zone)});
            }
        }
    }

    // POIs inside buildings share the building's dominant category most of the time
    Rng poi_rng = make_rng(params.seed, "synth-pois");
    std::vector<std::size_t> poi_index;
    for (const auto& f : footprints) {
        const int n = std::min(4, poisson(poi_rng, params.pois_per_building * kPoiRate[f.zone]));
        for (int k = 0; k < n; ++k) {
            const Vec2 p{uniform(poi_rng, f.box.x_min + 1, f.box.x_max - 1), uniform(poi_rng, f.box.y_min + 1, f.box.y_max - 1)};
            const std::string cat = uniform01(poi_rng) < 0.7 ? f.dominant : draw_category(poi_rng, f.zone);
            poi_index.push_back(es.size());
            es.push_back({next_id++, std::nullopt, sorted_bag({"amenity", cat}), Geometry::point(p)});
        }
    }
    const int road_pois = poisson(poi_rng, params.road_pois_per_km2 * km2);
    for (int k = 0; k < road_pois; ++k) {
        for (int attempt = 0; attempt < 10; ++attempt) {
            const auto& seg = es[segment_index[uniform_index(poi_rng, segment_index.size())]].geometry.coords;
            const double t = uniform(poi_rng, 0.1, 0.9);
            const double off = uniform(poi_rng, 4, 12) * (uniform01(poi_rng) < 0.5 ? -1.0 : 1.0);
            const Vec2 along{seg[0].x + t * (seg[1].x - seg[0].x), seg[0].y + t * (seg[1].y - seg[0].y)};
            const bool horizontal = seg[0].y == seg[1].y;
            const Vec2 p = horizontal ? Vec2{along.x, along.y + off} : Vec2{along.x + off, along.y};
            if (p.x < 0 || p.y < 0 || p.x > params.extent || p.y > params.extent) continue;
            if (inside_any(footprints, p, 1.0)) continue;
            poi_index.push_back(es.size());
            es.push_back({next_id++, std::nullopt, sorted_bag({"amenity", draw_category(poi_rng, zone_at(districts, p))}),
                          Geometry::point(p)});
            break;
        }
    }

    Rng speed_rng = make_rng(params.seed, "synth-speed");
    for (std::size_t k = 0; k < segment_index.size(); ++k) {
        const Geoentity& seg = es[segment_index[k]];
        int density = 0;
        for (std::size_t p : poi_index) {
            if (min_distance(seg.geometry, es[p].geometry) <= params.density_radius) ++density;
        }
        labels.speed[seg.id] = base_speed(segment_class[k]) - params.speed_density_coef * density +
                               params.speed_noise * standard_normal(speed_rng);
    }

    Rng empty_rng = make_rng(params.seed, "synth-empty");
    for (auto& e : es) {
        if (uniform01(empty_rng) < params.empty_token_fraction) e.tokens.clear();
    }
    return {make_dataset(std::move(es)), std::move(labels)};
}

void save_labels(const LatentLabels& labels, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write labels file " + path);
    std::map<std::int64_t, nlohmann::json> rows;
    for (const auto& [id, z] : labels.zone) rows[id] = {{"id", id}, {"zone", z}, {"speed", nullptr}};
    for (const auto& [id, v] : labels.speed) {
        auto& r = rows[id];
        if (r.is_null()) r = {{"id", id}, {"zone", nullptr}, {"speed", v}};
        else r["speed"] = v;
    }
    for (const auto& [_, r] : rows) out << r.dump() << '\n';
}

LatentLabels load_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open labels file " + path);
    LatentLabels labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("id"))
            throw ParseError("labels line " + std::to_string(line_no) + ": malformed record");
        const auto id = j.at("id").get<std::int64_t>();
        if (j.contains("zone") && !j.at("zone").is_null()) labels.zone[id] = j.at("zone").get<int>();
        if (j.contains("speed") && !j.at("speed").is_null()) labels.speed[id] = j.at("speed").get<double>();
    }
    return labels;
}

}  // namespace nara
