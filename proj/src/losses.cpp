#include "nara/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "nara/errors.hpp"

namespace nara {

using ad::Index;
using ad::Matrix;
using ad::Tensor;

void LossConfig::validate() const {
    if (!(tau_mgsm > 0) || !(tau_acc > 0)) throw ValidationError("loss temperatures must be positive");
    if (!(lambda > 0)) throw ValidationError("loss.lambda must be positive");
    if (!(delta > 0 && delta < 2)) throw ValidationError("loss.delta must lie in (0, 2)");
    for (double a : {alpha_mgsm, alpha_geo, alpha_acc, alpha_rsr, alpha_topo, alpha_dist})
        if (!(a >= 0)) throw ValidationError("loss weights must be non-negative");
    if (bins.size() < 2 || bins.front() != 0.0) throw ValidationError("loss.bins must start at 0 with at least one bin");
    for (std::size_t k = 1; k < bins.size(); ++k)
        if (!(bins[k] > bins[k - 1])) throw ValidationError("loss.bins must be strictly increasing");
}

int LossConfig::bin_of(double d) const {
    if (d < bins.front() || d >= bins.back()) return -1;
    const auto it = std::upper_bound(bins.begin(), bins.end(), d);
    return static_cast<int>(it - bins.begin()) - 1;
}

void to_json(nlohmann::json& j, const LossConfig& c) {
    j = {{"tau_mgsm", c.tau_mgsm},     {"tau_acc", c.tau_acc},       {"lambda", c.lambda},
         {"delta", c.delta},           {"alpha_mgsm", c.alpha_mgsm}, {"alpha_geo", c.alpha_geo},
         {"alpha_acc", c.alpha_acc},   {"alpha_rsr", c.alpha_rsr},   {"alpha_topo", c.alpha_topo},
         {"alpha_dist", c.alpha_dist}, {"bins", c.bins}};
}

void from_json(const nlohmann::json& j, LossConfig& c) {
    c.tau_mgsm = j.value("tau_mgsm", c.tau_mgsm);
    c.tau_acc = j.value("tau_acc", c.tau_acc);
    c.lambda = j.value("lambda", c.lambda);
    c.delta = j.value("delta", c.delta);
    c.alpha_mgsm = j.value("alpha_mgsm", c.alpha_mgsm);
    c.alpha_geo = j.value("alpha_geo", c.alpha_geo);
    c.alpha_acc = j.value("alpha_acc", c.alpha_acc);
    c.alpha_rsr = j.value("alpha_rsr", c.alpha_rsr);
    c.alpha_topo = j.value("alpha_topo", c.alpha_topo);
    c.alpha_dist = j.value("alpha_dist", c.alpha_dist);
    c.bins = j.value("bins", c.bins);
}

double loss_joint(const LossReport& r, const LossConfig& c) {
    return c.alpha_mgsm * r.l_mgsm + c.alpha_geo * r.l_geo + c.alpha_acc * r.l_acc + c.alpha_rsr * r.l_rsr;
}

namespace {

Matrix normalized(const Matrix& m) {
    Matrix out = m;
    for (Index r = 0; r < out.rows(); ++r) out.row(r) /= out.row(r).norm();
    return out;
}

Tensor column(const std::vector<double>& v) {
    Matrix m(static_cast<Index>(v.size()), 1);
    for (std::size_t k = 0; k < v.size(); ++k) m(static_cast<Index>(k), 0) = v[k];
    return Tensor::constant(std::move(m));
}

int type_slot(GeometryKind k) { return k == GeometryKind::Point ? 0 : 1; }

}  // namespace

TermSum mgsm_terms(const Tensor& e_hat, const Matrix& raw_sem, const std::vector<int>& masked,
                   const std::vector<Geoentity>& entities, double tau) {
    const auto m = static_cast<Index>(masked.size());
    const Index n = raw_sem.rows();
    if (e_hat.rows() != m) throw ShapeError("mgsm: one reconstruction per masked entity expected");
    TermSum out;
    if (m == 0) return out;
    Matrix mask = Matrix::Zero(m, n);
    std::vector<Index> rows, cols;
    for (Index k = 0; k < m; ++k) {
        const auto i = static_cast<std::size_t>(masked[static_cast<std::size_t>(k)]);
        Index size = 0;
        for (Index j = 0; j < n; ++j) {
            if (static_cast<std::size_t>(j) == i || entities[static_cast<std::size_t>(j)].tokens != entities[i].tokens) {
                mask(k, j) = 1.0;
                ++size;
            }
        }
        if (size < 2) {
            mask.row(k).setZero();
            continue;
        }
        rows.push_back(k);
        cols.push_back(static_cast<Index>(i));
    }
    if (rows.empty()) return out;
    const Tensor sims = ad::scale(ad::matmul(ad::normalize_rows(e_hat), Tensor::constant(normalized(raw_sem).transpose())),
                                  1.0 / tau);
    out.sum = ad::sub(ad::sum(ad::masked_logsumexp_rows(sims, mask)), ad::sum(ad::pick(sims, rows, cols)));
    out.count = rows.size();
    return out;
}

TermSum geo_terms(const PairPrediction& pred, const std::vector<double>& targets,
                  const std::vector<TopoRelation>& relations, double alpha_topo, double alpha_dist) {
    TermSum out;
    const auto m = static_cast<Index>(targets.size());
    if (m == 0) return out;
    if (pred.distance.rows() != m || static_cast<Index>(relations.size()) != m)
        throw ShapeError("geo: predictions and targets differ in length");
    std::vector<Index> rows(static_cast<std::size_t>(m)), cls(static_cast<std::size_t>(m));
    for (Index k = 0; k < m; ++k) {
        rows[static_cast<std::size_t>(k)] = k;
        cls[static_cast<std::size_t>(k)] = static_cast<Index>(relations[static_cast<std::size_t>(k)]);
    }
    const Tensor ce = ad::sub(ad::sum(ad::masked_logsumexp_rows(pred.logits, Matrix::Ones(m, pred.logits.cols()))),
                              ad::sum(ad::pick(pred.logits, rows, cls)));
    const Tensor err = ad::sub(pred.distance, column(targets));
    const Tensor se = ad::sum(ad::mul(err, err));
    out.sum = ad::add(ad::scale(ce, alpha_topo), ad::scale(se, alpha_dist));
    out.count = static_cast<std::size_t>(m);
    return out;
}

AccPlan plan_acc(const WindowContext& ctx, const std::vector<int>& masked, double lambda) {
    const int n = ctx.size();
    std::vector<bool> is_masked(static_cast<std::size_t>(n), false);
    for (int m : masked) is_masked[static_cast<std::size_t>(m)] = true;
    AccPlan plan;
    plan.weights = Matrix::Zero(n, n);
    plan.contrast = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        if (is_masked[static_cast<std::size_t>(i)]) continue;
        double total = 0.0;
        for (int j = 0; j < n; ++j) {
            if (j == i || is_masked[static_cast<std::size_t>(j)] || !ctx.are_siblings(i, j)) continue;
            const double w = std::exp(-ctx.pairs.distance(i, j) / lambda);
            plan.weights(i, j) = w;
            total += w;
        }
        if (total == 0.0) {
            // every sibling is masked, or the decay underflowed
            plan.weights.row(i).setZero();
            continue;
        }
        plan.weights.row(i) /= total;
        plan.anchors.push_back(i);
        const GeometryKind t = ctx.entities[static_cast<std::size_t>(i)].geometry.kind;
        for (int j = 0; j < n; ++j) {
            if (j == i || is_masked[static_cast<std::size_t>(j)]) continue;
            if (ctx.are_siblings(i, j) || ctx.entities[static_cast<std::size_t>(j)].geometry.kind == t)
                plan.contrast(i, j) = 1.0;
        }
    }
    return plan;
}

TermSum acc_window(const Tensor& h_sem, const AccPlan& plan, double tau) {
    TermSum out;
    if (plan.anchors.empty()) return out;
    const Tensor hn = ad::normalize_rows(h_sem);
    const Tensor sims = ad::scale(ad::matmul(hn, ad::transpose(hn)), 1.0 / tau);
    const Tensor lse = ad::sum(ad::masked_logsumexp_rows(sims, plan.contrast));
    const Tensor pos = ad::sum(ad::mul(sims, Tensor::constant(plan.weights)));
    out.sum = ad::scale(ad::sub(lse, pos), 1.0 / static_cast<double>(plan.anchors.size()));
    out.count = 1;
    return out;
}

double empirical_semivariance(const std::vector<std::pair<int, int>>& pairs, const Matrix& h) {
    if (pairs.empty()) throw ValidationError("semivariance of an empty pair set is undefined");
    const Matrix hn = normalized(h);
    double acc = 0.0;
    for (const auto& [i, j] : pairs) acc += 1.0 - hn.row(i).dot(hn.row(j));
    return acc / static_cast<double>(pairs.size());
}

RsrPlan plan_rsr(const WindowContext& ctx, const std::vector<int>& masked, const std::vector<PairSample>& global_pairs,
                 const LossConfig& cfg) {
    const int n = ctx.size();
    const int n_bins = static_cast<int>(cfg.bins.size()) - 1;
    std::vector<bool> is_masked(static_cast<std::size_t>(n), false);
    for (int m : masked) is_masked[static_cast<std::size_t>(m)] = true;

    RsrPlan plan;
    std::map<int, Index> glob_id;  // type_slot * n_bins + bin -> cell
    for (const auto& p : global_pairs) {
        if (is_masked[static_cast<std::size_t>(p.i)] || is_masked[static_cast<std::size_t>(p.j)]) continue;
        const int b = cfg.bin_of(p.distance);
        if (b < 0) continue;
        const int key = type_slot(ctx.entities[static_cast<std::size_t>(p.i)].geometry.kind) * n_bins + b;
        auto [it, fresh] = glob_id.try_emplace(key, static_cast<Index>(plan.glob_count.size()));
        if (fresh) plan.glob_count.push_back(0.0);
        plan.glob_i.push_back(p.i);
        plan.glob_j.push_back(p.j);
        plan.glob_cell.push_back(it->second);
        plan.glob_count[static_cast<std::size_t>(it->second)] += 1.0;
    }

    struct Cell {
        int bin;
        std::vector<std::pair<int, int>> pairs;
    };
    struct Scored {
        int group;
        double binned;  // all binned sibling pairs, scored bins or not
        double omega_total;
        std::vector<Cell> cells;
    };
    std::vector<Scored> scored;
    for (std::size_t g = 0; g < ctx.groups.size(); ++g) {
        const auto& grp = ctx.groups[g];
        std::vector<int> live;
        for (int m : grp.members)
            if (!is_masked[static_cast<std::size_t>(m)]) live.push_back(m);
        std::vector<std::vector<std::pair<int, int>>> by_bin(static_cast<std::size_t>(n_bins));
        double binned = 0.0;
        for (std::size_t a = 0; a < live.size(); ++a) {
            for (std::size_t b = a + 1; b < live.size(); ++b) {
                const int bin = cfg.bin_of(ctx.pairs.distance(live[a], live[b]));
                if (bin < 0) continue;
                by_bin[static_cast<std::size_t>(bin)].emplace_back(live[a], live[b]);
                binned += 1.0;
            }
        }
        if (binned == 0.0) continue;
        Scored sc{static_cast<int>(g), binned, 0.0, {}};
        for (int b = 0; b < n_bins; ++b) {
            const auto& prs = by_bin[static_cast<std::size_t>(b)];
            if (prs.empty()) continue;
            sc.omega_total += static_cast<double>(prs.size()) / binned;
            if (glob_id.count(type_slot(grp.member_type) * n_bins + b)) sc.cells.push_back({b, prs});
        }
        if (!sc.cells.empty()) scored.push_back(std::move(sc));
    }

    plan.scored_groups = scored.size();
    for (const Scored& sc : scored) {
        const auto& grp = ctx.groups[static_cast<std::size_t>(sc.group)];
        plan.omega_totals.push_back(sc.omega_total);
        for (const Cell& c : sc.cells) {
            const auto cell = static_cast<Index>(plan.rel_count.size());
            for (const auto& [i, j] : c.pairs) {
                plan.rel_i.push_back(i);
                plan.rel_j.push_back(j);
                plan.rel_cell.push_back(cell);
            }
            const auto count = static_cast<double>(c.pairs.size());
            plan.rel_count.push_back(count);
            plan.cell_glob.push_back(glob_id.at(type_slot(grp.member_type) * n_bins + c.bin));
            plan.cell_group.push_back(sc.group);
            plan.cell_bin.push_back(c.bin);
            // bins without a global estimate are dropped, not re-normalized
            plan.cell_weight.push_back(count / sc.binned / static_cast<double>(scored.size()));
        }
    }
    return plan;
}

TermSum rsr_window(const Tensor& h_sem, const RsrPlan& plan, double delta) {
    TermSum out;
    if (plan.scored_groups == 0) return out;
    const Tensor hn = ad::normalize_rows(h_sem);
    const Tensor cos = ad::matmul(hn, ad::transpose(hn));
    const auto inverse = [](const std::vector<double>& counts) {
        std::vector<double> v;
        for (double c : counts) v.push_back(1.0 / c);
        return column(v);
    };
    const Tensor rel = ad::scale_rows(
        ad::segment_sum(ad::pick(cos, plan.rel_i, plan.rel_j), plan.rel_cell, static_cast<Index>(plan.rel_count.size())),
        inverse(plan.rel_count));
    const Tensor glob = ad::scale_rows(ad::segment_sum(ad::pick(cos, plan.glob_i, plan.glob_j), plan.glob_cell,
                                                       static_cast<Index>(plan.glob_count.size())),
                                       inverse(plan.glob_count));
    // gamma_rel - gamma_glob + delta = mean_cos_glob - mean_cos_rel + delta
    const Tensor hinge = ad::relu(ad::add_scalar(ad::sub(ad::gather_rows(glob, plan.cell_glob), rel), delta));
    out.sum = ad::sum(ad::scale_rows(hinge, column(plan.cell_weight)));
    out.count = 1;
    return out;
}

WindowSample make_window_sample(const WindowContext& ctx, WindowInput input, std::vector<PairSample> geo_pairs,
                                std::vector<PairSample> global_pairs, const LossConfig& cfg) {
    WindowSample s;
    s.ctx = &ctx;
    s.acc = plan_acc(ctx, input.masked, cfg.lambda);
    s.rsr = plan_rsr(ctx, input.masked, global_pairs, cfg);
    s.input = std::move(input);
    s.geo_pairs = std::move(geo_pairs);
    s.global_pairs = std::move(global_pairs);
    return s;
}

namespace {

void accumulate(Tensor& acc, const TermSum& t) {
    if (t.count == 0) return;
    acc = acc.defined() ? ad::add(acc, t.sum) : t.sum;
}

Tensor averaged(const Tensor& sum, std::size_t count) {
    return count == 0 ? Tensor::scalar(0.0) : ad::scale(sum, 1.0 / static_cast<double>(count));
}

}  // namespace

BatchLoss batch_loss(const Model& model, const std::vector<WindowSample>& batch, const LossConfig& cfg, bool train,
                     Rng* dropout_rng) {
    Tensor s_mgsm, s_geo, s_acc, s_rsr;
    LossReport rep;
    for (const auto& w : batch) {
        if (w.input.size() < 2) continue;
        const DualStreamOutput out = model.forward(w.input, train, dropout_rng);
        if (!w.input.masked.empty()) {
            std::vector<Index> rows(w.input.masked.begin(), w.input.masked.end());
            const Tensor e_hat = model.reconstruct(ad::gather_rows(out.h_sem, rows));
            const TermSum t = mgsm_terms(e_hat, w.input.sem, w.input.masked, w.ctx->entities, cfg.tau_mgsm);
            accumulate(s_mgsm, t);
            rep.n_mgsm += t.count;
        }
        if (!w.geo_pairs.empty()) {
            std::vector<Index> a, b;
            std::vector<double> targets;
            std::vector<TopoRelation> rel;
            for (int order = 0; order < 2; ++order) {
                for (const auto& p : w.geo_pairs) {
                    a.push_back(order == 0 ? p.i : p.j);
                    b.push_back(order == 0 ? p.j : p.i);
                    targets.push_back(p.distance / w.ctx->window.size());
                    rel.push_back(p.relation);
                }
            }
            const TermSum t = geo_terms(model.predict_pair(out.h_fused, a, b), targets, rel, cfg.alpha_topo, cfg.alpha_dist);
            accumulate(s_geo, t);
            rep.n_geo += t.count;
        }
        const TermSum ta = acc_window(out.h_sem, w.acc, cfg.tau_acc);
        accumulate(s_acc, ta);
        rep.n_acc += ta.count;
        const TermSum tr = rsr_window(out.h_sem, w.rsr, cfg.delta);
        accumulate(s_rsr, tr);
        rep.n_rsr += tr.count;
    }
    BatchLoss res;
    res.mgsm = averaged(s_mgsm, rep.n_mgsm);
    res.geo = averaged(s_geo, rep.n_geo);
    res.acc = averaged(s_acc, rep.n_acc);
    res.rsr = averaged(s_rsr, rep.n_rsr);
    res.total = ad::add(ad::add(ad::scale(res.mgsm, cfg.alpha_mgsm), ad::scale(res.geo, cfg.alpha_geo)),
                        ad::add(ad::scale(res.acc, cfg.alpha_acc), ad::scale(res.rsr, cfg.alpha_rsr)));
    rep.l_mgsm = res.mgsm.item();
    rep.l_geo = res.geo.item();
    rep.l_acc = res.acc.item();
    rep.l_rsr = res.rsr.item();
    rep.l_total = res.total.item();
    res.report = rep;
    return res;
}

}  // namespace nara
