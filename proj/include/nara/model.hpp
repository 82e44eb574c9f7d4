#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nara/autodiff.hpp"
#include "nara/encoders.hpp"

namespace nara {

struct ModelConfig {
    int d = 32;
    int d_ff = 64;
    int layers = 3;
    int heads = 4;
    double dropout = 0.1;
    int d_sem = 64;
    int d_geom = kGeometryDim;
    double gate_bias_init = -2.0;

    void validate() const;  // throws ValidationError
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Named parameters in registration order. Paths look like
/// "layers.0.sem.ffn.0.weight".
class ParamStore {
public:
    ad::Tensor& add(const std::string& path, ad::Matrix init);
    const ad::Tensor& at(const std::string& path) const;
    ad::Tensor& at(const std::string& path);
    bool contains(const std::string& path) const { return index_.count(path) != 0; }

    std::size_t size() const { return tensors_.size(); }
    const std::string& path(std::size_t k) const { return paths_[k]; }
    ad::Tensor& tensor(std::size_t k) { return tensors_[k]; }
    const ad::Tensor& tensor(std::size_t k) const { return tensors_[k]; }
    std::size_t scalar_count() const;

    void zero_grad();
    /// Biases, layer-norm parameters and the mask token.
    static bool exempt_from_decay(const std::string& path);

    nlohmann::json to_json() const;
    /// Overwrites values of existing paths; shapes must match exactly.
    void load_json(const nlohmann::json& j);

private:
    std::vector<std::string> paths_;
    std::vector<ad::Tensor> tensors_;
    std::map<std::string, std::size_t> index_;
};

/// Encoded inputs for one window.
struct WindowInput {
    ad::Matrix sem;   // n x d_sem raw (frozen) semantic embeddings
    ad::Matrix geom;  // n x d_geom
    std::vector<int> masked;  // local indices, ascending

    int size() const { return static_cast<int>(sem.rows()); }
};

WindowInput encode_window(const std::vector<Geoentity>& entities, const WindowFrame& frame,
                          const SemanticEncoder& encoder, std::vector<int> masked = {});

struct FuseResult {
    ad::Tensor fused;  // n x d
    ad::Tensor alpha;  // n x 1
};

struct DualStreamOutput {
    ad::Tensor h_sem;    // n x d
    ad::Tensor h_fused;  // n x d
    ad::Tensor alpha;    // n x 1 gate values
    /// attention[layer][head], n x n, shared by both streams
    std::vector<std::vector<ad::Tensor>> attention;
};

struct PairPrediction {
    ad::Tensor distance;  // m x 1, normalized by window size
    ad::Tensor logits;    // m x 4
};

class Model {
public:
    Model(const ModelConfig& config, std::uint64_t seed);
    // parameter tensors are shared handles; copies must be explicit
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    Model clone() const;
    std::uint64_t init_seed() const { return seed_; }

    const ModelConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    /// Gate over projected inputs: out = (1 - a) * sem + a * geom.
    FuseResult fuse(const ad::Tensor& sem_projected, const ad::Tensor& geom_projected) const;

    /// `rng` drives dropout and is required when `train` is true.
    DualStreamOutput forward(const WindowInput& in, bool train = false, Rng* rng = nullptr) const;

    /// Eval-mode pass that also accepts a single entity (self-only context).
    DualStreamOutput encode_context(const WindowInput& in) const;

    /// f_rec applied row-wise: rows x d -> rows x d_sem.
    ad::Tensor reconstruct(const ad::Tensor& h_sem_rows) const;

    /// Heads over [h_i ; h_j] for every (i[k], j[k]).
    PairPrediction predict_pair(const ad::Tensor& h_fused, std::span<const ad::Index> i,
                                std::span<const ad::Index> j) const;

    nlohmann::json checkpoint(const nlohmann::json& extra = {}) const;
    static Model from_checkpoint(const nlohmann::json& j);
    void save(const std::string& path, const nlohmann::json& extra = {}) const;
    static Model load(const std::string& path);

private:
    DualStreamOutput run(const WindowInput& in, bool train, Rng* rng) const;
    ad::Tensor linear(const ad::Tensor& x, const std::string& prefix) const;
    ad::Tensor mlp2(const ad::Tensor& x, const std::string& prefix, bool relu_hidden) const;
    ad::Tensor attend(const ad::Tensor& a, const ad::Tensor& v, int head) const;

    ModelConfig config_;
    std::uint64_t seed_;
    ParamStore params_;
};

}  // namespace nara
