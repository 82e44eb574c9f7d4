#include "nara/probes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "nara/errors.hpp"
#include "nara/spatial_relations.hpp"
#include "nara/train.hpp"

namespace nara {

using ad::Index;
using ad::Matrix;
using ad::Tensor;

std::vector<std::size_t> spatial_context(const Dataset& data, std::size_t target, double radius) {
    const Geometry& g = data.entities[target].geometry;
    const BoundingBox reach = bounding_box(g).expanded(radius + 1e-6);
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < data.entities.size(); ++k) {
        if (k == target) {
            out.push_back(k);
            continue;
        }
        const Geometry& h = data.entities[k].geometry;
        if (!reach.intersects(bounding_box(h))) continue;
        if (within_buffer(g, h, radius)) out.push_back(k);
    }
    return out;
}

std::vector<ContextualEmbedding> embed_entities(const Model& model, const SemanticEncoder& encoder, const Dataset& data,
                                                const std::vector<std::int64_t>& ids, const EmbedOptions& opts) {
    if (!(opts.radius >= 0.0)) throw ValidationError("embedding radius must be non-negative");
    std::map<std::int64_t, std::size_t> index;
    for (std::size_t k = 0; k < data.entities.size(); ++k) index[data.entities[k].id] = k;
    std::string missing;
    for (auto id : ids) {
        if (!index.count(id)) missing += (missing.empty() ? "" : ", ") + std::to_string(id);
    }
    if (!missing.empty()) throw ValidationError("unknown entity ids: " + missing);

    std::vector<ContextualEmbedding> out;
    out.reserve(ids.size());
    for (auto id : ids) {
        const std::size_t target = index.at(id);
        std::vector<std::size_t> members = spatial_context(data, target, opts.radius);
        if (opts.random_context) {
            const std::size_t k = members.size() - 1;
            Rng rng = make_rng(opts.context_seed, "random-context", static_cast<std::uint64_t>(id));
            std::vector<std::size_t> pool;
            pool.reserve(data.entities.size() - 1);
            for (std::size_t q = 0; q < data.entities.size(); ++q)
                if (q != target) pool.push_back(q);
            // partial Fisher-Yates: the first k slots become the sample
            for (std::size_t q = 0; q < k && q < pool.size(); ++q) {
                std::swap(pool[q], pool[q + uniform_index(rng, pool.size() - q)]);
            }
            members.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(std::min(k, pool.size())));
            members.push_back(target);
            std::sort(members.begin(), members.end());
        }
        std::vector<Geoentity> ctx;
        int row = 0;
        for (std::size_t q = 0; q < members.size(); ++q) {
            if (members[q] == target) row = static_cast<int>(q);
            ctx.push_back(data.entities[members[q]]);
        }
        const WindowFrame frame{geometry_descriptors(data.entities[target].geometry).centroid, opts.frame_size};
        std::vector<int> masked;
        if (opts.mask_target) masked.push_back(row);
        const auto h = model.encode_context(encode_window(ctx, frame, encoder, masked));
        out.push_back({id, h.h_fused.value().row(row), h.h_sem.value().row(row), opts.radius, members.size()});
    }
    return out;
}

void save_embeddings(const std::vector<ContextualEmbedding>& es, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ParseError("cannot write embeddings file " + path);
    for (const auto& e : es) {
        const std::vector<double> hf(e.h_fused.data(), e.h_fused.data() + e.h_fused.size());
        const std::vector<double> hs(e.h_sem.data(), e.h_sem.data() + e.h_sem.size());
        f << nlohmann::json{{"id", e.id}, {"h_fused", hf}, {"h_sem", hs}}.dump() << '\n';
    }
}

std::vector<ContextualEmbedding> load_embeddings(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open embeddings file " + path);
    std::vector<ContextualEmbedding> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("id") || !j.contains("h_fused") || !j.contains("h_sem"))
            throw ParseError("malformed embedding record: " + line.substr(0, 80));
        const auto hf = j.at("h_fused").get<std::vector<double>>();
        const auto hs = j.at("h_sem").get<std::vector<double>>();
        ContextualEmbedding e;
        e.id = j.at("id").get<std::int64_t>();
        e.h_fused = Eigen::Map<const RowVector>(hf.data(), static_cast<Index>(hf.size()));
        e.h_sem = Eigen::Map<const RowVector>(hs.data(), static_cast<Index>(hs.size()));
        out.push_back(std::move(e));
    }
    return out;
}

std::string checkpoint_hash(const Model& model) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(model.checkpoint().dump())));
    return buf;
}

void to_json(nlohmann::json& j, const ClassifyMetrics& m) {
    j = {{"macro_f1", m.macro_f1}, {"weighted_f1", m.weighted_f1}, {"accuracy", m.accuracy},
         {"n_train", m.n_train},   {"n_val", m.n_val},             {"n_test", m.n_test}};
}

void to_json(nlohmann::json& j, const RegressMetrics& m) {
    j = {{"rmse", m.rmse},       {"mae", m.mae},     {"r2", m.r2},          {"mape", m.mape},
         {"n_train", m.n_train}, {"n_val", m.n_val}, {"n_test", m.n_test}};
}

namespace {

struct F1Parts {
    std::vector<int> labels;
    std::vector<double> f1, support;
};

F1Parts f1_parts(const std::vector<int>& truth, const std::vector<int>& pred) {
    if (truth.size() != pred.size()) throw ShapeError("label and prediction counts differ");
    std::set<int> labels(truth.begin(), truth.end());
    labels.insert(pred.begin(), pred.end());
    F1Parts out;
    for (int c : labels) {
        double tp = 0, fp = 0, fn = 0, support = 0;
        for (std::size_t k = 0; k < truth.size(); ++k) {
            const bool t = truth[k] == c, p = pred[k] == c;
            tp += t && p;
            fp += !t && p;
            fn += t && !p;
            support += t;
        }
        out.labels.push_back(c);
        out.f1.push_back(tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn));
        out.support.push_back(support);
    }
    return out;
}

struct Split {
    std::vector<std::size_t> train, val, test;
};

Split split_rows(std::size_t n, double f_train, double f_val, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(seed, "probe-split");
    for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[uniform_index(rng, k)]);
    const auto n_train = static_cast<std::size_t>(std::floor(f_train * n));
    const auto n_val = static_cast<std::size_t>(std::floor(f_val * n));
    Split s;
    s.train.assign(order.begin(), order.begin() + n_train);
    s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    s.test.assign(order.begin() + n_train + n_val, order.end());
    return s;
}

Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
    Matrix out(static_cast<Index>(rows.size()), m.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = m.row(static_cast<Index>(rows[k]));
    return out;
}

/// Column scaling fitted on the training rows; constant columns keep scale 1.
struct Standardizer {
    RowVector mean, scale;

    Standardizer(const Matrix& train) {
        mean = train.colwise().mean();
        scale = ((train.rowwise() - mean).array().square().colwise().mean()).sqrt().matrix();
        for (Index c = 0; c < scale.size(); ++c)
            if (!(scale(c) > 1e-12)) scale(c) = 1.0;
    }
    Matrix apply(const Matrix& m) const {
        return ((m.rowwise() - mean).array().rowwise() / scale.array()).matrix();
    }
};

/// Linear head fitted with the pretraining optimizer; keeps the parameters
/// of the epoch with the best validation score.
template <typename Loss, typename Score>
std::pair<Matrix, RowVector> fit_linear(const Matrix& x, Index outputs, const ProbeOptions& opts, Loss loss,
                                        Score val_score) {
    ParamStore ps;
    ps.add("probe.weight", Matrix::Zero(x.cols(), outputs));
    ps.add("probe.bias", Matrix::Zero(1, outputs));
    AdamW opt;
    const Tensor xc = Tensor::constant(x);
    Matrix best_w = ps.tensor(0).value();
    RowVector best_b = ps.tensor(1).value();
    double best = val_score(best_w, best_b);
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        ps.zero_grad();
        const Tensor out = ad::add_row_bias(ad::matmul(xc, ps.tensor(0)), ps.tensor(1));
        ad::backward(loss(out));
        opt.step(ps, opts.learning_rate, 0.0);
        const double score = val_score(ps.tensor(0).value(), ps.tensor(1).value());
        if (score >= best) {
            best = score;
            best_w = ps.tensor(0).value();
            best_b = ps.tensor(1).value();
        }
    }
    return {best_w, best_b};
}

std::vector<int> argmax_rows(const Matrix& logits) {
    std::vector<int> out(static_cast<std::size_t>(logits.rows()));
    for (Index r = 0; r < logits.rows(); ++r) logits.row(r).maxCoeff(&out[static_cast<std::size_t>(r)]);
    return out;
}

}  // namespace

double macro_f1(const std::vector<int>& truth, const std::vector<int>& pred) {
    const auto p = f1_parts(truth, pred);
    if (p.labels.empty()) return 0.0;
    return 100.0 * std::accumulate(p.f1.begin(), p.f1.end(), 0.0) / static_cast<double>(p.labels.size());
}

double weighted_f1(const std::vector<int>& truth, const std::vector<int>& pred) {
    const auto p = f1_parts(truth, pred);
    double num = 0, den = 0;
    for (std::size_t k = 0; k < p.labels.size(); ++k) {
        num += p.f1[k] * p.support[k];
        den += p.support[k];
    }
    return den == 0 ? 0.0 : 100.0 * num / den;
}

ClassifyMetrics probe_classify(const Matrix& features, const std::vector<int>& labels, const ProbeOptions& opts) {
    if (static_cast<std::size_t>(features.rows()) != labels.size()) throw ShapeError("features and labels differ in length");
    const std::set<int> classes(labels.begin(), labels.end());
    if (classes.size() < 2) throw ValidationError("classification probe needs at least two classes");
    if (*classes.begin() < 0) throw ValidationError("class labels must be non-negative");
    const Index k_classes = *classes.rbegin() + 1;

    const Split s = split_rows(labels.size(), 0.5, 0.25, opts.split_seed);
    const auto pick_labels = [&](const std::vector<std::size_t>& rows) {
        std::vector<int> out;
        for (auto r : rows) out.push_back(labels[r]);
        return out;
    };
    const Standardizer z(take_rows(features, s.train));
    const Matrix x_train = z.apply(take_rows(features, s.train));
    const Matrix x_val = z.apply(take_rows(features, s.val));
    const Matrix x_test = z.apply(take_rows(features, s.test));
    const auto y_train = pick_labels(s.train), y_val = pick_labels(s.val), y_test = pick_labels(s.test);

    const std::vector<Index> rows = [&] {
        std::vector<Index> r(y_train.size());
        std::iota(r.begin(), r.end(), 0);
        return r;
    }();
    const std::vector<Index> cols(y_train.begin(), y_train.end());
    const Matrix all = Matrix::Ones(static_cast<Index>(y_train.size()), k_classes);
    const auto ce = [&](const Tensor& logits) {
        const Tensor nll = ad::sub(ad::masked_logsumexp_rows(logits, all), ad::pick(logits, rows, cols));
        return ad::mean(nll);
    };
    const auto predict = [&](const Matrix& x, const Matrix& w, const RowVector& b) {
        return argmax_rows((x * w).rowwise() + b);
    };
    const auto val_score = [&](const Matrix& w, const RowVector& b) {
        return y_val.empty() ? 0.0 : macro_f1(y_val, predict(x_val, w, b));
    };
    const auto [w, b] = fit_linear(x_train, k_classes, opts, ce, val_score);

    const auto pred = predict(x_test, w, b);
    ClassifyMetrics m;
    m.macro_f1 = macro_f1(y_test, pred);
    m.weighted_f1 = weighted_f1(y_test, pred);
    std::size_t hits = 0;
    for (std::size_t k = 0; k < pred.size(); ++k) hits += pred[k] == y_test[k];
    m.accuracy = y_test.empty() ? 0.0 : 100.0 * hits / y_test.size();
    m.n_train = s.train.size();
    m.n_val = s.val.size();
    m.n_test = s.test.size();
    return m;
}

RegressMetrics probe_regress(const Matrix& features, const std::vector<double>& targets,
                             const std::vector<std::vector<std::size_t>>* neighbors, const ProbeOptions& opts) {
    const std::size_t n = targets.size();
    if (static_cast<std::size_t>(features.rows()) != n) throw ShapeError("features and targets differ in length");
    if (n < 10) throw ValidationError("regression probe needs at least 10 labeled rows");
    if (neighbors && neighbors->size() != n) throw ShapeError("neighbor lists do not match the rows");

    const Split s = split_rows(n, 0.6, 0.2, opts.split_seed);
    Matrix x = features;
    if (neighbors) {
        std::vector<bool> in_train(n, false);
        double train_mean = 0;
        for (auto r : s.train) {
            in_train[r] = true;
            train_mean += targets[r];
        }
        train_mean /= static_cast<double>(s.train.size());
        x.conservativeResize(Eigen::NoChange, x.cols() + 1);
        for (std::size_t r = 0; r < n; ++r) {
            double sum = 0;
            int count = 0;
            for (auto q : (*neighbors)[r]) {
                if (q != r && in_train[q]) {
                    sum += targets[q];
                    ++count;
                }
            }
            x(static_cast<Index>(r), x.cols() - 1) = count ? sum / count : train_mean;
        }
    }

    const Standardizer z(take_rows(x, s.train));
    const Matrix x_train = z.apply(take_rows(x, s.train));
    const Matrix x_val = z.apply(take_rows(x, s.val));
    const Matrix x_test = z.apply(take_rows(x, s.test));
    const auto column = [&](const std::vector<std::size_t>& rows) {
        Matrix c(static_cast<Index>(rows.size()), 1);
        for (std::size_t k = 0; k < rows.size(); ++k) c(static_cast<Index>(k), 0) = targets[rows[k]];
        return c;
    };
    const Matrix y_train_raw = column(s.train);
    // targets are standardized as well so a few hundred small steps suffice
    const double y_mean = y_train_raw.mean();
    double y_scale = std::sqrt((y_train_raw.array() - y_mean).square().mean());
    if (!(y_scale > 1e-12)) y_scale = 1.0;
    const Tensor y_train = Tensor::constant(((y_train_raw.array() - y_mean) / y_scale).matrix());
    const Matrix y_val = column(s.val);

    const auto mse = [&](const Tensor& out) {
        const Tensor e = ad::sub(out, y_train);
        return ad::mean(ad::mul(e, e));
    };
    const auto predict = [&](const Matrix& xs, const Matrix& w, const RowVector& b) -> Matrix {
        return (((xs * w).rowwise() + b).array() * y_scale + y_mean).matrix();
    };
    const auto val_score = [&](const Matrix& w, const RowVector& b) {
        if (y_val.rows() == 0) return 0.0;
        return -(predict(x_val, w, b) - y_val).squaredNorm();
    };
    const auto [w, b] = fit_linear(x_train, 1, opts, mse, val_score);

    const Matrix pred = predict(x_test, w, b);
    const Matrix truth = column(s.test);
    RegressMetrics m;
    const auto nt = static_cast<double>(truth.rows());
    const Matrix err = pred - truth;
    m.rmse = std::sqrt(err.squaredNorm() / nt);
    m.mae = err.cwiseAbs().sum() / nt;
    const double tmean = truth.mean();
    const double ss_tot = (truth.array() - tmean).square().sum();
    m.r2 = ss_tot > 0 ? 1.0 - err.squaredNorm() / ss_tot : (err.squaredNorm() == 0 ? 1.0 : 0.0);
    double ape = 0;
    int counted = 0;
    for (Index r = 0; r < truth.rows(); ++r) {
        if (truth(r, 0) != 0) {
            ape += std::abs(err(r, 0) / truth(r, 0));
            ++counted;
        }
    }
    m.mape = counted ? 100.0 * ape / counted : 0.0;
    m.n_train = s.train.size();
    m.n_val = s.val.size();
    m.n_test = s.test.size();
    return m;
}

RoadTable pool_roads(const Dataset& data, const std::vector<ContextualEmbedding>& segment_embeddings,
                     const std::map<std::int64_t, double>& segment_speed, double neighbor_radius) {
    std::map<std::int64_t, const ContextualEmbedding*> by_id;
    for (const auto& e : segment_embeddings) by_id[e.id] = &e;
    std::map<std::int64_t, std::vector<std::size_t>> segments;  // road -> dataset indices
    for (std::size_t k = 0; k < data.entities.size(); ++k) {
        const auto& e = data.entities[k];
        if (e.geometry.kind == GeometryKind::Polyline && by_id.count(e.id) && segment_speed.count(e.id))
            segments[e.anchor_key()].push_back(k);
    }
    RoadTable t;
    if (segments.empty()) return t;
    const Index d = segment_embeddings.front().h_fused.size();
    t.pooled = Matrix::Zero(static_cast<Index>(segments.size()), d);
    Index row = 0;
    for (const auto& [road, members] : segments) {
        double speed = 0;
        for (auto k : members) {
            const auto id = data.entities[k].id;
            t.pooled.row(row) += by_id.at(id)->h_fused;
            speed += segment_speed.at(id);
        }
        t.pooled.row(row) /= static_cast<double>(members.size());
        t.road_ids.push_back(road);
        t.speed.push_back(speed / static_cast<double>(members.size()));
        ++row;
    }
    std::vector<std::vector<std::size_t>> parts;
    for (const auto& [_, members] : segments) parts.push_back(members);
    t.neighbors.resize(parts.size());
    for (std::size_t a = 0; a < parts.size(); ++a) {
        for (std::size_t b = a + 1; b < parts.size(); ++b) {
            bool near = false;
            for (auto i : parts[a]) {
                for (auto j : parts[b]) {
                    if (within_buffer(data.entities[i].geometry, data.entities[j].geometry, neighbor_radius)) {
                        near = true;
                        break;
                    }
                }
                if (near) break;
            }
            if (near) {
                t.neighbors[a].push_back(b);
                t.neighbors[b].push_back(a);
            }
        }
    }
    return t;
}

}  // namespace nara
