#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nara/geo_model.hpp"
#include "nara/seeding.hpp"
#include "nara/spatial_relations.hpp"

// Brute-force relation oracle: samples a dense lattice, labels every sample
// interior / boundary / exterior for each geometry, and reads the relation
// off the sampled point sets. Independent of the exact predicates in
// spatial_relations; exact only for shapes whose vertices lie on an integer
// grid with axis-aligned or 45-degree edges (all feature points then fall
// on the quarter-unit lattice).
namespace nara::oracle {

enum class Label : std::uint8_t { Exterior, Boundary, Interior };

Label label_point(Vec2 p, const Geometry& g);

TopoRelation rasterized_relation(const Geometry& a, const Geometry& b, double step = 0.25);

/// Random grid-aligned shape: point, 1-2 segment polyline, rectangle or
/// isosceles right triangle with vertices in [0, grid]^2.
Geometry random_grid_shape(Rng& rng, int grid);

struct AgreementReport {
    std::size_t pairs = 0;
    std::size_t agreements = 0;
    std::size_t symmetric = 0;
    std::vector<std::string> disagreements;  // first few, human readable

    double agreement_rate() const { return pairs ? static_cast<double>(agreements) / pairs : 1.0; }
    bool all_ok() const { return agreements == pairs && symmetric == pairs; }
};

AgreementReport run_agreement(std::size_t n_pairs, std::uint64_t seed, int grid = 6);

}  // namespace nara::oracle
