#pragma once

#include <vector>

#include <nlohmann/json.hpp>

#include "nara/model.hpp"
#include "nara/windows_context.hpp"

namespace nara {

struct LossConfig {
    double tau_mgsm = 0.15;
    double tau_acc = 0.3;
    double lambda = 20.0;  // meters
    double delta = 0.4;
    double alpha_mgsm = 1.0;
    double alpha_geo = 1.0;
    double alpha_acc = 1.0;
    double alpha_rsr = 50.0;
    double alpha_topo = 0.5;
    double alpha_dist = 100.0;
    std::vector<double> bins{0, 25, 50, 100, 200, 400, 800};

    void validate() const;  // throws ValidationError
    int bin_of(double distance) const;  // -1 outside [bins.front(), bins.back())
};

void to_json(nlohmann::json& j, const LossConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);

struct LossReport {
    double l_mgsm = 0, l_geo = 0, l_acc = 0, l_rsr = 0, l_total = 0;
    std::size_t n_mgsm = 0;  // masked entities with |P(i)| >= 2
    std::size_t n_geo = 0;   // ordered pair examples
    std::size_t n_acc = 0;   // windows with a non-empty anchor set
    std::size_t n_rsr = 0;   // windows with at least one scored group
};

/// Weighted sum of the four component losses.
double loss_joint(const LossReport& r, const LossConfig& c);

/// Sum of per-item losses plus how many items contributed.
struct TermSum {
    ad::Tensor sum;  // 1x1, undefined when count == 0
    std::size_t count = 0;
};

/// InfoNCE of reconstructions (one row per masked entity) against raw
/// semantic embeddings. Entities with identical token multisets to the
/// target are left out of its denominator.
TermSum mgsm_terms(const ad::Tensor& e_hat, const ad::Matrix& raw_sem, const std::vector<int>& masked,
                   const std::vector<Geoentity>& entities, double tau);

/// alpha_topo * CE + alpha_dist * squared error, summed over examples.
TermSum geo_terms(const PairPrediction& pred, const std::vector<double>& targets,
                  const std::vector<TopoRelation>& relations, double alpha_topo, double alpha_dist);

/// Static structure of the anchor-conditioned contrastive term for one window.
struct AccPlan {
    std::vector<int> anchors;  // Q: unmasked entities with an unmasked sibling
    ad::Matrix weights;        // n x n, row i = w_ij / W_i over siblings
    ad::Matrix contrast;       // n x n 0/1, row i = siblings and same-type non-siblings
};

AccPlan plan_acc(const WindowContext& ctx, const std::vector<int>& masked, double lambda);

/// Mean over anchors of the per-entity loss; undefined when no anchors.
TermSum acc_window(const ad::Tensor& h_sem, const AccPlan& plan, double tau);

/// Mean of (1 - cos) over the listed pairs. Throws on an empty list.
double empirical_semivariance(const std::vector<std::pair<int, int>>& pairs, const ad::Matrix& h);

/// Static structure of the semivariogram term for one window. Rows are the
/// (group, bin) cells that have sibling pairs and a type-matched global estimate.
struct RsrPlan {
    std::vector<ad::Index> rel_i, rel_j, rel_cell;        // sibling pairs and their cell
    std::vector<ad::Index> glob_i, glob_j, glob_cell;     // global pairs and their (type, bin) cell
    std::vector<double> rel_count, glob_count;            // pairs per cell
    std::vector<ad::Index> cell_glob;                     // matching global cell per rel cell
    std::vector<double> cell_weight;                      // omega_b / number of scored groups
    std::vector<int> cell_group, cell_bin;
    std::size_t scored_groups = 0;
    /// Sum of omega_b over all binned cells of each scored group (== 1).
    std::vector<double> omega_totals;
};

RsrPlan plan_rsr(const WindowContext& ctx, const std::vector<int>& masked, const std::vector<PairSample>& global_pairs,
                 const LossConfig& cfg);

/// Group-averaged hinge; undefined when no group is scored.
TermSum rsr_window(const ad::Tensor& h_sem, const RsrPlan& plan, double delta);

/// Everything sampled for one window at one step.
struct WindowSample {
    const WindowContext* ctx = nullptr;
    WindowInput input;  // carries the mask set
    std::vector<PairSample> geo_pairs;
    std::vector<PairSample> global_pairs;
    AccPlan acc;
    RsrPlan rsr;
};

WindowSample make_window_sample(const WindowContext& ctx, WindowInput input, std::vector<PairSample> geo_pairs,
                                std::vector<PairSample> global_pairs, const LossConfig& cfg);

struct BatchLoss {
    ad::Tensor total;
    ad::Tensor mgsm, geo, acc, rsr;  // 1x1 each, constant zero when empty
    LossReport report;
};

/// Batch reduction: MGSM and GEO average over contributing items of the whole
/// batch, ACC and RSR average the per-window means over contributing windows.
BatchLoss batch_loss(const Model& model, const std::vector<WindowSample>& batch, const LossConfig& cfg,
                     bool train = false, Rng* dropout_rng = nullptr);

}  // namespace nara
