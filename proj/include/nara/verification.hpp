#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nara/losses.hpp"
#include "nara/model.hpp"
#include "nara/windows_context.hpp"

namespace nara {

/// Small random scene with guaranteed sibling structure: a building with
/// POIs inside, a two-segment road beside it, small polygons south of the
/// road and an unrelated POI cluster that serves as the non-sibling baseline.
std::vector<Geoentity> random_scene(Rng& rng, int n);

/// Owns the window context a WindowSample points into.
struct SceneSample {
    std::unique_ptr<WindowContext> ctx;
    WindowSample sample;
};

/// One 500 m window over a random scene with masks and pairs drawn.
SceneSample random_sample(Rng& rng, int n, const SemanticEncoder& enc, const LossConfig& cfg,
                          double mask_ratio = 0.4);

inline constexpr std::array<const char*, 5> kLossTerms{"mgsm", "geo", "acc", "rsr", "joint"};

struct TermCheck {
    std::string term;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_nonsmooth = 0;
};

struct GradcheckOptions {
    int windows = 20;
    int min_entities = 6;
    int max_entities = 12;
    std::size_t per_tensor = 3;  // sampled coordinates per parameter tensor
    std::uint64_t seed = 0;
    ModelConfig model;
    LossConfig loss;
};

/// Central differences against backprop for each loss term and the joint
/// loss, one window at a time; errors are maxima over all windows.
std::vector<TermCheck> gradcheck(const GradcheckOptions& opts);

nlohmann::json to_json(const std::vector<TermCheck>& checks);

}  // namespace nara
