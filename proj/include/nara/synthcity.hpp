#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nara/geo_model.hpp"

namespace nara {

constexpr int kZoneCount = 8;

struct CityParams {
    double extent = 1000.0;   // square side, meters
    double spacing = 100.0;   // road grid spacing
    int buildings_per_block = 1;  // 1 or 2
    double pois_per_building = 0.7;  // mean, scaled per zone
    double road_pois_per_km2 = 10.0;
    double districts_per_km2 = 10.0;
    std::vector<double> zone_priors{0.6, 0.08, 0.07, 0.06, 0.06, 0.05, 0.04, 0.04};
    double empty_token_fraction = 0.05;
    double building_tag_signal = 0.3;  // chance a building carries its zone tag
    double building_tag_noise = 0.1;   // chance it carries a random zone tag instead
    int segments_per_way = 0;          // 0: one parent id per grid line
    double density_radius = 50.0;
    double speed_density_coef = 2.0;
    double speed_noise = 2.0;
    std::uint64_t seed = 0;

    void validate() const;  // throws ValidationError
};

void to_json(nlohmann::json& j, const CityParams& p);
void from_json(const nlohmann::json& j, CityParams& p);

/// Hidden targets: zone per building polygon, speed per road segment.
struct LatentLabels {
    std::map<std::int64_t, int> zone;
    std::map<std::int64_t, double> speed;
};

struct City {
    Dataset data;
    LatentLabels labels;
};

City generate_city(const CityParams& params);

/// One JSON object per labeled entity: {id, zone, speed}, null where absent.
void save_labels(const LatentLabels& labels, const std::string& path);
LatentLabels load_labels(const std::string& path);

}  // namespace nara
