#include "nara/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>

#include "nara/errors.hpp"

namespace nara {

using ad::Matrix;

void TrainConfig::validate() const {
    const auto positive = [](double v, const char* key) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string("config: ") + key + " must be positive");
    };
    positive(learning_rate, "learning_rate");
    if (!(weight_decay >= 0.0)) throw ValidationError("config: weight_decay must be non-negative");
    if (epochs < 0) throw ValidationError("config: epochs must be non-negative");
    if (batch_windows < 1) throw ValidationError("config: batch_windows must be positive");
    positive(grad_clip_norm, "grad_clip_norm");
    if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw ValidationError("config: mask_ratio must lie in (0, 1)");
    positive(window_size, "window_size");
    if (!(window_stride > 0.0 && window_stride <= window_size))
        throw ValidationError("config: window_stride must lie in (0, window_size]");
    if (member_cap < 2) throw ValidationError("config: member_cap must be at least 2");
    if (n_random < 0 || n_hard < 0 || n_global < 0) throw ValidationError("config: pair counts must be non-negative");
    if (eval_every < 0) throw ValidationError("config: eval_every must be non-negative");
    model.validate();
    loss.validate();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"learning_rate", c.learning_rate},
         {"weight_decay", c.weight_decay},
         {"epochs", c.epochs},
         {"batch_windows", c.batch_windows},
         {"grad_clip_norm", c.grad_clip_norm},
         {"seed", c.seed},
         {"codebook_seed", c.codebook_seed},
         {"mask_ratio", c.mask_ratio},
         {"window_size", c.window_size},
         {"window_stride", c.window_stride},
         {"member_cap", c.member_cap},
         {"n_random", c.n_random},
         {"n_hard", c.n_hard},
         {"n_global", c.n_global},
         {"eval_every", c.eval_every},
         {"model", c.model},
         {"loss", c.loss}};
}

namespace {

void reject_unknown_keys(const nlohmann::json& given, const nlohmann::json& known, const std::string& prefix) {
    if (!given.is_object()) throw ValidationError("config: " + (prefix.empty() ? std::string("document") : prefix) +
                                                  " must be an object");
    for (const auto& [key, value] : given.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!known.contains(key)) throw ValidationError("config: unknown key " + path);
        if (known.at(key).is_object()) reject_unknown_keys(value, known.at(key), path);
    }
}

}  // namespace

void from_json(const nlohmann::json& j, TrainConfig& c) {
    reject_unknown_keys(j, nlohmann::json(TrainConfig{}), "");
    try {
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.epochs = j.value("epochs", c.epochs);
        c.batch_windows = j.value("batch_windows", c.batch_windows);
        c.grad_clip_norm = j.value("grad_clip_norm", c.grad_clip_norm);
        c.seed = j.value("seed", c.seed);
        c.codebook_seed = j.value("codebook_seed", c.codebook_seed);
        c.mask_ratio = j.value("mask_ratio", c.mask_ratio);
        c.window_size = j.value("window_size", c.window_size);
        c.window_stride = j.value("window_stride", c.window_stride);
        c.member_cap = j.value("member_cap", c.member_cap);
        c.n_random = j.value("n_random", c.n_random);
        c.n_hard = j.value("n_hard", c.n_hard);
        c.n_global = j.value("n_global", c.n_global);
        c.eval_every = j.value("eval_every", c.eval_every);
        if (j.contains("model")) {
            nlohmann::json m = c.model;
            m.update(j.at("model"));
            c.model = m.get<ModelConfig>();
        }
        if (j.contains("loss")) {
            nlohmann::json l = c.loss;
            l.update(j.at("loss"));
            c.loss = l.get<LossConfig>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
}

void apply_override(nlohmann::json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ValidationError("override must look like key=value: " + assignment);
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    nlohmann::json* node = &config;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object() || !node->contains(part)) throw ValidationError("config: unknown key " + key);
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    *node = value;
}

TrainConfig load_train_config(const std::optional<std::string>& path, const std::vector<std::string>& overrides) {
    nlohmann::json doc = TrainConfig{};
    if (path) {
        std::ifstream f(*path);
        if (!f) throw ValidationError("cannot open config " + *path);
        const auto given = nlohmann::json::parse(f, nullptr, false);
        if (given.is_discarded()) throw ValidationError("config is not valid JSON: " + *path);
        reject_unknown_keys(given, doc, "");
        doc.merge_patch(given);
    }
    for (const auto& o : overrides) apply_override(doc, o);
    TrainConfig c = doc.get<TrainConfig>();
    c.validate();
    return c;
}

double lr_schedule(int epoch, int total_epochs, double base_lr) {
    if (total_epochs <= 0) return base_lr;
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / total_epochs));
}

double gradient_norm(const ParamStore& params) {
    double sq = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) sq += params.tensor(k).grad().squaredNorm();
    return std::sqrt(sq);
}

double clip_gradients(ParamStore& params, double max_norm) {
    const double norm = gradient_norm(params);
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for (std::size_t k = 0; k < params.size(); ++k) params.tensor(k).mutable_grad() *= s;
    }
    return norm;
}

void AdamW::step(ParamStore& params, double lr, double weight_decay) {
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (!params.tensor(k).grad().allFinite()) throw NumericError("non-finite gradient in " + params.path(k));
    }
    if (m_.empty()) {
        for (std::size_t k = 0; k < params.size(); ++k) {
            const auto& v = params.tensor(k).value();
            m_.push_back(Matrix::Zero(v.rows(), v.cols()));
            v_.push_back(Matrix::Zero(v.rows(), v.cols()));
        }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& theta = params.tensor(k).node()->value;
        const Matrix& g = params.tensor(k).grad();
        m_[k] = kBeta1 * m_[k] + (1.0 - kBeta1) * g;
        v_[k] = kBeta2 * v_[k] + (1.0 - kBeta2) * g.cwiseProduct(g);
        const double wd = ParamStore::exempt_from_decay(params.path(k)) ? 0.0 : weight_decay;
        const Matrix update = (m_[k] / c1).array() / ((v_[k] / c2).array().sqrt() + kEps);
        theta -= lr * (update + wd * theta);
    }
}

std::vector<WindowContext> prepare_windows(const Dataset& data, const TrainConfig& cfg) {
    auto windows = build_windows(data.extent, cfg.window_size, cfg.window_stride);
    assign_members(windows, data, cfg.member_cap);
    std::vector<WindowContext> out;
    for (const auto& w : windows) {
        if (w.members.size() >= 2) out.push_back(make_window_context(w, data));
    }
    return out;
}

WindowSample draw_window_sample(const WindowContext& ctx, const WindowInput& base, const TrainConfig& cfg, int epoch) {
    Rng rng = make_rng(cfg.seed, "window-sample", static_cast<std::uint64_t>(epoch),
                       static_cast<std::uint64_t>(ctx.window.index));
    WindowInput input = base;
    input.masked = select_masks(ctx.size(), cfg.mask_ratio, rng);
    auto geo = sample_geo_pairs(ctx, cfg.n_random, cfg.n_hard, rng);
    auto glob = sample_global_pairs(ctx, cfg.n_global, rng);
    return make_window_sample(ctx, std::move(input), std::move(geo), std::move(glob), cfg.loss);
}

nlohmann::json to_json(const StepLog& s) {
    return {{"epoch", s.epoch},
            {"batch", s.batch},
            {"l_mgsm", s.losses.l_mgsm},
            {"l_geo", s.losses.l_geo},
            {"l_acc", s.losses.l_acc},
            {"l_rsr", s.losses.l_rsr},
            {"l_total", s.losses.l_total},
            {"lr", s.lr},
            {"grad_norm", s.grad_norm}};
}

nlohmann::json checkpoint_extra(const TrainConfig& cfg, int epochs_done) {
    return {{"config", cfg}, {"epochs_done", epochs_done}, {"codebook_seed", cfg.codebook_seed}, {"seed", cfg.seed}};
}

namespace {

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(seed, "shuffle", static_cast<std::uint64_t>(epoch));
    for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[uniform_index(rng, k)]);
    return order;
}

}  // namespace

TrainResult train(const Dataset& data, const TrainConfig& cfg, const TrainOutputs& outputs) {
    cfg.validate();
    const auto windows = prepare_windows(data, cfg);
    if (windows.empty()) throw ValidationError("dataset has no window with at least two members");

    const SemanticEncoder encoder(cfg.model.d_sem, cfg.codebook_seed);
    std::vector<WindowInput> bases;
    bases.reserve(windows.size());
    for (const auto& ctx : windows) {
        bases.push_back(encode_window(ctx.entities, WindowFrame{ctx.window.center(), ctx.window.size()}, encoder));
    }

    TrainResult result{Model(cfg.model, cfg.seed), {}, {}};
    Model& model = result.model;
    AdamW optimizer;

    const std::filesystem::path out = outputs.out_dir;
    std::ofstream log_file;
    if (!outputs.out_dir.empty()) {
        std::filesystem::create_directories(out);
        std::ofstream(out / "config.json") << nlohmann::json(cfg).dump(2) << '\n';
        log_file.open(out / "train_log.jsonl");
    }

    int epochs_done = 0;
    try {
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            const double lr = lr_schedule(epoch, cfg.epochs, cfg.learning_rate);
            const auto order = shuffled_order(windows.size(), cfg.seed, epoch);
            double epoch_sum = 0.0;
            int batches = 0;
            for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_windows)) {
                const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_windows));
                std::vector<WindowSample> batch;
                for (std::size_t k = start; k < stop; ++k) {
                    batch.push_back(draw_window_sample(windows[order[k]], bases[order[k]], cfg, epoch));
                }
                Rng dropout_rng = make_rng(cfg.seed, "dropout", static_cast<std::uint64_t>(epoch),
                                           static_cast<std::uint64_t>(batches));
                model.params().zero_grad();
                const BatchLoss loss = batch_loss(model, batch, cfg.loss, true, &dropout_rng);
                if (!std::isfinite(loss.report.l_total)) throw NumericError("non-finite joint loss");
                ad::backward(loss.total);

                StepLog step{epoch, batches, loss.report, lr, clip_gradients(model.params(), cfg.grad_clip_norm)};
                // an exactly-zero objective carries no signal, so decay is skipped too
                if (loss.report.l_total != 0.0) optimizer.step(model.params(), lr, cfg.weight_decay);

                if (log_file) log_file << to_json(step).dump() << '\n';
                if (outputs.on_step) outputs.on_step(step);
                result.log.push_back(step);
                epoch_sum += step.losses.l_total;
                ++batches;
            }
            result.epoch_mean_loss.push_back(epoch_sum / batches);
            epochs_done = epoch + 1;
            if (!outputs.out_dir.empty() && cfg.eval_every > 0 && epochs_done % cfg.eval_every == 0 &&
                epochs_done < cfg.epochs) {
                model.save((out / ("checkpoint_epoch_" + std::to_string(epochs_done) + ".json")).string(),
                           checkpoint_extra(cfg, epochs_done));
            }
        }
    } catch (const NumericError&) {
        // parameters are untouched by a failed step, so the model is the last good state
        if (!outputs.out_dir.empty()) {
            model.save((out / "checkpoint_last_good.json").string(), checkpoint_extra(cfg, epochs_done));
        }
        throw;
    }
    if (!outputs.out_dir.empty()) model.save((out / "checkpoint.json").string(), checkpoint_extra(cfg, epochs_done));
    return result;
}

}  // namespace nara
