#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nara/losses.hpp"
#include "nara/model.hpp"
#include "nara/windows_context.hpp"

namespace nara {

struct TrainConfig {
    double learning_rate = 2e-4;
    double weight_decay = 0.01;
    int epochs = 100;
    int batch_windows = 16;
    double grad_clip_norm = 1.0;
    std::uint64_t seed = 0;
    std::uint64_t codebook_seed = 0;
    double mask_ratio = 0.4;
    double window_size = 500.0;
    double window_stride = 250.0;
    std::size_t member_cap = kWindowMemberCap;
    int n_random = 32;
    int n_hard = 16;
    int n_global = 64;
    int eval_every = 0;  // 0: checkpoint only at the end
    ModelConfig model;
    LossConfig loss;

    void validate() const;  // throws ValidationError naming the key
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Strict: unknown keys throw ValidationError.
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Applies "a.b.c=value" to a config document. The path must already exist;
/// the value is parsed as JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json& config, const std::string& assignment);

TrainConfig load_train_config(const std::optional<std::string>& path, const std::vector<std::string>& overrides);

double lr_schedule(int epoch, int total_epochs, double base_lr);

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_gradients(ParamStore& params, double max_norm);

double gradient_norm(const ParamStore& params);

class AdamW {
public:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    /// One update from the gradients currently stored on the parameters.
    /// Non-finite gradients throw NumericError naming the parameter.
    void step(ParamStore& params, double lr, double weight_decay);
    long steps() const { return t_; }

private:
    std::vector<ad::Matrix> m_, v_;
    long t_ = 0;
};

/// Windows with at least two members, built once per dataset.
std::vector<WindowContext> prepare_windows(const Dataset& data, const TrainConfig& cfg);

/// Draws masks and pairs for one window at one epoch.
WindowSample draw_window_sample(const WindowContext& ctx, const WindowInput& base, const TrainConfig& cfg, int epoch);

struct StepLog {
    int epoch = 0;
    int batch = 0;
    LossReport losses;
    double lr = 0.0;
    double grad_norm = 0.0;  // before clipping
};

nlohmann::json to_json(const StepLog& s);

struct TrainOutputs {
    std::string out_dir;  // empty: nothing written
    std::function<void(const StepLog&)> on_step;
};

struct TrainResult {
    Model model;
    std::vector<StepLog> log;
    std::vector<double> epoch_mean_loss;
};

TrainResult train(const Dataset& data, const TrainConfig& cfg, const TrainOutputs& outputs = {});

/// Checkpoint metadata: config echo and seeds.
nlohmann::json checkpoint_extra(const TrainConfig& cfg, int epochs_done);

}  // namespace nara
