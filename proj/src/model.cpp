#include "nara/model.hpp"

#include <cmath>
#include <fstream>

#include "nara/errors.hpp"

namespace nara {

using ad::Index;
using ad::Matrix;
using ad::Tensor;

void ModelConfig::validate() const {
    if (d <= 0 || d_ff <= 0 || layers <= 0 || heads <= 0 || d_sem <= 0 || d_geom <= 0)
        throw ValidationError("model dimensions must be positive");
    if (d % heads != 0)
        throw ValidationError("model.d (" + std::to_string(d) + ") must be divisible by model.heads (" +
                              std::to_string(heads) + ")");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("model.dropout must lie in [0, 1)");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"d", c.d},           {"d_ff", c.d_ff},         {"layers", c.layers},
         {"heads", c.heads},   {"dropout", c.dropout},   {"d_sem", c.d_sem},
         {"d_geom", c.d_geom}, {"gate_bias_init", c.gate_bias_init}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.d = j.value("d", c.d);
    c.d_ff = j.value("d_ff", c.d_ff);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.dropout = j.value("dropout", c.dropout);
    c.d_sem = j.value("d_sem", c.d_sem);
    c.d_geom = j.value("d_geom", c.d_geom);
    c.gate_bias_init = j.value("gate_bias_init", c.gate_bias_init);
}

// ---------------------------------------------------------------------------
// ParamStore

Tensor& ParamStore::add(const std::string& path, Matrix init) {
    if (contains(path)) throw ValidationError("duplicate parameter " + path);
    index_[path] = tensors_.size();
    paths_.push_back(path);
    tensors_.push_back(Tensor::parameter(std::move(init)));
    return tensors_.back();
}

const Tensor& ParamStore::at(const std::string& path) const {
    const auto it = index_.find(path);
    if (it == index_.end()) throw ValidationError("unknown parameter " + path);
    return tensors_[it->second];
}

Tensor& ParamStore::at(const std::string& path) {
    return const_cast<Tensor&>(static_cast<const ParamStore&>(*this).at(path));
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value().size());
    return n;
}

void ParamStore::zero_grad() {
    for (auto& t : tensors_) t.zero_grad();
}

bool ParamStore::exempt_from_decay(const std::string& path) {
    const auto ends_with = [&](std::string_view s) {
        return path.size() >= s.size() && path.compare(path.size() - s.size(), s.size(), s) == 0;
    };
    return ends_with(".bias") || ends_with(".gain") || path == "mask_token";
}

nlohmann::json ParamStore::to_json() const {
    nlohmann::json out = nlohmann::json::object();
    for (std::size_t k = 0; k < tensors_.size(); ++k) {
        const Matrix& m = tensors_[k].value();
        out[paths_[k]] = {{"shape", {m.rows(), m.cols()}},
                          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
    }
    return out;
}

void ParamStore::load_json(const nlohmann::json& j) {
    for (std::size_t k = 0; k < tensors_.size(); ++k) {
        if (!j.contains(paths_[k])) throw ParseError("checkpoint missing parameter " + paths_[k]);
        const auto& entry = j.at(paths_[k]);
        const auto shape = entry.at("shape").get<std::vector<Index>>();
        Matrix& m = tensors_[k].node()->value;
        if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols())
            throw ShapeError("checkpoint shape mismatch for " + paths_[k]);
        const auto data = entry.at("data").get<std::vector<double>>();
        if (static_cast<Index>(data.size()) != m.size()) throw ShapeError("checkpoint data size mismatch for " + paths_[k]);
        std::copy(data.begin(), data.end(), m.data());
    }
}

// ---------------------------------------------------------------------------
// Inputs

WindowInput encode_window(const std::vector<Geoentity>& entities, const WindowFrame& frame,
                          const SemanticEncoder& encoder, std::vector<int> masked) {
    WindowInput in;
    const auto n = static_cast<Index>(entities.size());
    in.sem.resize(n, encoder.dim());
    in.geom.resize(n, kGeometryDim);
    for (Index r = 0; r < n; ++r) {
        const auto& e = entities[static_cast<std::size_t>(r)];
        in.sem.row(r) = encoder.encode(e.tokens);
        in.geom.row(r) = encode_geometry(e.geometry, frame);
    }
    in.masked = std::move(masked);
    return in;
}

// ---------------------------------------------------------------------------
// Model

namespace {

Matrix uniform_init(Rng& rng, Index rows, Index cols, Index fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix m(rows, cols);
    for (Index k = 0; k < m.size(); ++k) m.data()[k] = uniform(rng, -bound, bound);
    return m;
}

}  // namespace

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config), seed_(seed) {
    config_.validate();
    Rng rng = make_rng(seed, "init");
    const auto linear_param = [&](const std::string& prefix, Index in, Index out) {
        params_.add(prefix + ".weight", uniform_init(rng, in, out, in));
        params_.add(prefix + ".bias", uniform_init(rng, 1, out, in));
    };
    const Index d = config_.d;
    linear_param("proj_sem", config_.d_sem, d);
    linear_param("proj_geom", config_.d_geom, d);
    linear_param("gate.0", 2 * d, d);
    linear_param("gate.1", d, 1);
    params_.at("gate.1.bias").node()->value.setConstant(config_.gate_bias_init);
    params_.add("mask_token", Matrix::Zero(1, d));
    for (int l = 0; l < config_.layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        for (const char* w : {"w_q", "w_k", "w_v_sem", "w_v_fused"}) params_.add(p + w, uniform_init(rng, d, d, d));
        for (const char* s : {"sem", "fused"}) {
            const std::string q = p + s + ".";
            linear_param(q + "out", d, d);
            params_.add(q + "ln1.gain", Matrix::Ones(1, d));
            params_.add(q + "ln1.bias", Matrix::Zero(1, d));
            linear_param(q + "ffn.0", d, config_.d_ff);
            linear_param(q + "ffn.1", config_.d_ff, d);
            params_.add(q + "ln2.gain", Matrix::Ones(1, d));
            params_.add(q + "ln2.bias", Matrix::Zero(1, d));
        }
    }
    linear_param("rec.0", d, d);
    linear_param("rec.1", d, config_.d_sem);
    linear_param("dist.0", 2 * d, d);
    linear_param("dist.1", d, 1);
    linear_param("topo.0", 2 * d, d);
    linear_param("topo.1", d, 4);
}

Model Model::clone() const {
    Model m(config_, seed_);
    for (std::size_t k = 0; k < params_.size(); ++k) m.params_.tensor(k).node()->value = params_.tensor(k).value();
    return m;
}

Tensor Model::linear(const Tensor& x, const std::string& prefix) const {
    return ad::add_row_bias(ad::matmul(x, params_.at(prefix + ".weight")), params_.at(prefix + ".bias"));
}

Tensor Model::mlp2(const Tensor& x, const std::string& prefix, bool relu_hidden) const {
    const Tensor h = linear(x, prefix + ".0");
    return linear(relu_hidden ? ad::relu(h) : ad::gelu(h), prefix + ".1");
}

FuseResult Model::fuse(const Tensor& sem, const Tensor& geom) const {
    const Tensor alpha = ad::sigmoid(mlp2(ad::concat_cols(sem, geom), "gate", false));
    const Tensor fused = ad::add(sem, ad::scale_rows(ad::sub(geom, sem), alpha));
    return {fused, alpha};
}

DualStreamOutput Model::forward(const WindowInput& in, bool train, Rng* rng) const {
    if (in.size() < 2) throw ValidationError("window has fewer than 2 entities");
    return run(in, train, rng);
}

DualStreamOutput Model::encode_context(const WindowInput& in) const {
    if (in.size() < 1) throw ValidationError("context has no entities");
    return run(in, false, nullptr);
}

DualStreamOutput Model::run(const WindowInput& in, bool train, Rng* rng) const {
    const Index n = in.size();
    if (in.sem.cols() != config_.d_sem || in.geom.cols() != config_.d_geom || in.geom.rows() != n)
        throw ShapeError("window input shapes do not match the model config");
    if (train && config_.dropout > 0 && rng == nullptr) throw ValidationError("training forward needs an rng");
    const double rate = train ? config_.dropout : 0.0;
    const auto drop = [&](const Tensor& t) { return rate > 0 ? ad::dropout(t, rate, *rng) : t; };

    // masked rows read the mask token and nothing else
    std::vector<Index> rows(static_cast<std::size_t>(n));
    for (Index r = 0; r < n; ++r) rows[static_cast<std::size_t>(r)] = r;
    for (int m : in.masked) {
        if (m < 0 || m >= n) throw ValidationError("masked index out of range");
        rows[static_cast<std::size_t>(m)] = n;
    }
    const Tensor sem_proj = linear(Tensor::constant(in.sem), "proj_sem");
    const Tensor geom_proj = linear(Tensor::constant(in.geom), "proj_geom");
    const Tensor sem_masked =
        in.masked.empty() ? sem_proj : ad::gather_rows(ad::concat_rows(sem_proj, params_.at("mask_token")), rows);
    const FuseResult fz = fuse(sem_masked, geom_proj);

    DualStreamOutput out;
    out.alpha = fz.alpha;
    Tensor x_sem = sem_masked, x_fused = fz.fused;
    const Index dh = config_.d / config_.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int l = 0; l < config_.layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        const Tensor q = ad::matmul(x_fused, params_.at(p + "w_q"));
        const Tensor k = ad::matmul(x_fused, params_.at(p + "w_k"));
        const Tensor v_sem = ad::matmul(x_sem, params_.at(p + "w_v_sem"));
        const Tensor v_fused = ad::matmul(x_fused, params_.at(p + "w_v_fused"));
        std::vector<Tensor> maps, heads_sem, heads_fused;
        for (int h = 0; h < config_.heads; ++h) {
            const Tensor qh = ad::slice_cols(q, h * dh, dh);
            const Tensor kh = ad::slice_cols(k, h * dh, dh);
            const Tensor a = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt));
            maps.push_back(a);
            heads_sem.push_back(attend(a, v_sem, h));
            heads_fused.push_back(attend(a, v_fused, h));
        }
        out.attention.push_back(maps);
        const auto block = [&](const Tensor& x, const std::vector<Tensor>& heads, const std::string& s) {
            const Tensor attn = linear(ad::concat_cols(heads), p + s + ".out");
            const Tensor y = ad::layer_norm_rows(ad::add(x, drop(attn)), params_.at(p + s + ".ln1.gain"),
                                                 params_.at(p + s + ".ln1.bias"));
            const Tensor f = mlp2(y, p + s + ".ffn", false);
            return ad::layer_norm_rows(ad::add(y, drop(f)), params_.at(p + s + ".ln2.gain"),
                                       params_.at(p + s + ".ln2.bias"));
        };
        x_sem = block(x_sem, heads_sem, "sem");
        x_fused = block(x_fused, heads_fused, "fused");
    }
    out.h_sem = x_sem;
    out.h_fused = x_fused;
    return out;
}

Tensor Model::attend(const Tensor& a, const Tensor& v, int head) const {
    const Index dh = config_.d / config_.heads;
    return ad::matmul(a, ad::slice_cols(v, head * dh, dh));
}

Tensor Model::reconstruct(const Tensor& h) const { return mlp2(h, "rec", true); }

PairPrediction Model::predict_pair(const Tensor& h_fused, std::span<const Index> i, std::span<const Index> j) const {
    const Tensor x = ad::concat_cols(ad::gather_rows(h_fused, i), ad::gather_rows(h_fused, j));
    return {mlp2(x, "dist", false), mlp2(x, "topo", false)};
}

nlohmann::json Model::checkpoint(const nlohmann::json& extra) const {
    nlohmann::json j;
    j["format"] = "nara-checkpoint-v1";
    j["model_config"] = config_;
    j["init_seed"] = seed_;
    j["params"] = params_.to_json();
    if (!extra.is_null()) j["extra"] = extra;
    return j;
}

Model Model::from_checkpoint(const nlohmann::json& j) {
    if (!j.contains("params") || !j.contains("model_config")) throw ParseError("not a model checkpoint");
    Model m(j.at("model_config").get<ModelConfig>(), j.value("init_seed", std::uint64_t{0}));
    m.params_.load_json(j.at("params"));
    return m;
}

void Model::save(const std::string& path, const nlohmann::json& extra) const {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot write " + path);
    f << checkpoint(extra).dump() << '\n';
}

Model Model::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot read " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    return from_checkpoint(j);
}

}  // namespace nara
