#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nara/model.hpp"

namespace nara {

struct EmbedOptions {
    double radius = 100.0;
    bool mask_target = false;
    /// Replace the spatial neighbors by as many entities drawn uniformly
    /// from the whole dataset (the no-spatial control).
    bool random_context = false;
    std::uint64_t context_seed = 0;
    double frame_size = 500.0;  // pseudo-window side used for geometry encoding
};

struct ContextualEmbedding {
    std::int64_t id = 0;
    RowVector h_fused;
    RowVector h_sem;
    double radius = 0.0;
    std::size_t context_size = 0;  // including the target
};

/// Ids of entities within `radius` of the target (target included), in dataset order.
std::vector<std::size_t> spatial_context(const Dataset& data, std::size_t target, double radius);

/// Unknown ids throw ValidationError listing every missing id.
std::vector<ContextualEmbedding> embed_entities(const Model& model, const SemanticEncoder& encoder, const Dataset& data,
                                                const std::vector<std::int64_t>& ids, const EmbedOptions& opts = {});

void save_embeddings(const std::vector<ContextualEmbedding>& es, const std::string& path);
std::vector<ContextualEmbedding> load_embeddings(const std::string& path);

/// Hex digest of the serialized checkpoint; equal digests mean equal parameters.
std::string checkpoint_hash(const Model& model);

struct ProbeOptions {
    double learning_rate = 1e-2;
    int epochs = 200;
    std::uint64_t split_seed = 0;
};

struct ClassifyMetrics {
    double macro_f1 = 0, weighted_f1 = 0, accuracy = 0;  // percent
    std::size_t n_train = 0, n_val = 0, n_test = 0;
};

struct RegressMetrics {
    double rmse = 0, mae = 0, r2 = 0, mape = 0;  // mape in percent
    std::size_t n_train = 0, n_val = 0, n_test = 0;
};

void to_json(nlohmann::json& j, const ClassifyMetrics& m);
void to_json(nlohmann::json& j, const RegressMetrics& m);

/// Percent-scaled F1 over the labels appearing in either vector.
double macro_f1(const std::vector<int>& truth, const std::vector<int>& pred);
double weighted_f1(const std::vector<int>& truth, const std::vector<int>& pred);

/// Multinomial logistic regression on a 50/25/25 split. Throws
/// ValidationError when fewer than two classes are present.
ClassifyMetrics probe_classify(const ad::Matrix& features, const std::vector<int>& labels, const ProbeOptions& opts = {});

/// Linear regression on a 60/20/20 split. When `neighbors` is given, row k
/// gains the mean training-split label over neighbors[k] (training mean if
/// none are labeled). Needs at least 10 rows.
RegressMetrics probe_regress(const ad::Matrix& features, const std::vector<double>& targets,
                             const std::vector<std::vector<std::size_t>>* neighbors, const ProbeOptions& opts = {});

/// Road-level view: segments grouped by parent way, h_fused mean-pooled.
struct RoadTable {
    std::vector<std::int64_t> road_ids;
    ad::Matrix pooled;                               // roads x d
    std::vector<double> speed;                       // mean segment label
    std::vector<std::vector<std::size_t>> neighbors; // other roads within the radius
};

RoadTable pool_roads(const Dataset& data, const std::vector<ContextualEmbedding>& segment_embeddings,
                     const std::map<std::int64_t, double>& segment_speed, double neighbor_radius = 100.0);

}  // namespace nara
