#include "nara/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <unordered_set>

#include "nara/errors.hpp"

namespace nara::ad {

namespace {

using Parents = std::vector<std::shared_ptr<Node>>;

Tensor make_op(Matrix value, Parents parents, const char* op, std::function<void(Node&)> bw) {
    if (!value.allFinite()) throw NumericError(std::string("non-finite value produced by ") + op);
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = op;
    for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
    if (n->requires_grad) {
        n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
        n->parents = std::move(parents);
        n->backward = std::move(bw);
    }
    return Tensor(std::move(n));
}

template <class Expr>
void accumulate(const std::shared_ptr<Node>& p, const Expr& g) {
    if (p->requires_grad) p->grad += g;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
    }
}

}  // namespace

Tensor Tensor::constant(Matrix value) {
    if (!value.allFinite()) throw NumericError("non-finite constant");
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Tensor(std::move(n));
}

Tensor Tensor::parameter(Matrix value) {
    if (!value.allFinite()) throw NumericError("non-finite parameter");
    auto n = std::make_shared<Node>();
    n->grad = Matrix::Zero(value.rows(), value.cols());
    n->value = std::move(value);
    n->requires_grad = true;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
}

double Tensor::item() const {
    if (rows() != 1 || cols() != 1) throw ShapeError("item() on non-scalar tensor " + shape_string(*this));
    return node_->value(0, 0);
}

void Tensor::zero_grad() {
    if (node_->requires_grad) node_->grad.setZero();
}

std::string shape_string(const Tensor& t) {
    return "(" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + ")";
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    return make_op(a.value() + b.value(), {a.node(), b.node()}, "add", [](Node& s) {
        accumulate(s.parents[0], s.grad);
        accumulate(s.parents[1], s.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    return make_op(a.value() - b.value(), {a.node(), b.node()}, "sub", [](Node& s) {
        accumulate(s.parents[0], s.grad);
        accumulate(s.parents[1], -s.grad);
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    return make_op(a.value().cwiseProduct(b.value()), {a.node(), b.node()}, "mul", [](Node& s) {
        accumulate(s.parents[0], s.grad.cwiseProduct(s.parents[1]->value));
        accumulate(s.parents[1], s.grad.cwiseProduct(s.parents[0]->value));
    });
}

Tensor scale(const Tensor& a, double k) {
    return make_op(a.value() * k, {a.node()}, "scale", [k](Node& s) { accumulate(s.parents[0], s.grad * k); });
}

Tensor add_scalar(const Tensor& a, double k) {
    return make_op((a.value().array() + k).matrix(), {a.node()}, "add_scalar",
                   [](Node& s) { accumulate(s.parents[0], s.grad); });
}

Tensor sigmoid(const Tensor& a) {
    Matrix y = a.value().unaryExpr([](double x) {
        return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    });
    return make_op(std::move(y), {a.node()}, "sigmoid", [](Node& s) {
        const auto& y = s.value.array();
        accumulate(s.parents[0], (s.grad.array() * y * (1.0 - y)).matrix());
    });
}

Tensor relu(const Tensor& a) {
    return make_op(a.value().cwiseMax(0.0), {a.node()}, "relu", [](Node& s) {
        const Matrix mask = (s.parents[0]->value.array() > 0.0).cast<double>().matrix();
        accumulate(s.parents[0], s.grad.cwiseProduct(mask));
    });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluK = 0.044715;
}  // namespace

Tensor gelu(const Tensor& a) {
    Matrix y = a.value().unaryExpr(
        [](double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluK * x * x * x))); });
    return make_op(std::move(y), {a.node()}, "gelu", [](Node& s) {
        const Matrix d = s.parents[0]->value.unaryExpr([](double x) {
            const double t = std::tanh(kGeluC * (x + kGeluK * x * x * x));
            return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluK * x * x);
        });
        accumulate(s.parents[0], s.grad.cwiseProduct(d));
    });
}

Tensor exp(const Tensor& a) {
    return make_op(a.value().array().exp().matrix(), {a.node()}, "exp",
                   [](Node& s) { accumulate(s.parents[0], s.grad.cwiseProduct(s.value)); });
}

Tensor log(const Tensor& a) {
    return make_op(a.value().array().log().matrix(), {a.node()}, "log", [](Node& s) {
        accumulate(s.parents[0], s.grad.cwiseQuotient(s.parents[0]->value));
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: shape mismatch " + shape_string(a) + " vs " + shape_string(b));
    }
    Matrix y = a.value() * b.value();
    return make_op(std::move(y), {a.node(), b.node()}, "matmul", [](Node& s) {
        if (s.parents[0]->requires_grad) s.parents[0]->grad.noalias() += s.grad * s.parents[1]->value.transpose();
        if (s.parents[1]->requires_grad) s.parents[1]->grad.noalias() += s.parents[0]->value.transpose() * s.grad;
    });
}

Tensor transpose(const Tensor& a) {
    return make_op(a.value().transpose(), {a.node()}, "transpose",
                   [](Node& s) { accumulate(s.parents[0], s.grad.transpose()); });
}

Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    Index rows = 0;
    const Index cols = parts[0].cols();
    Parents ps;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw ShapeError("concat_rows: shape mismatch " + shape_string(parts[0]) + " vs " + shape_string(p));
        rows += p.rows();
        ps.push_back(p.node());
    }
    Matrix y(rows, cols);
    Index at = 0;
    for (const auto& p : parts) {
        y.middleRows(at, p.rows()) = p.value();
        at += p.rows();
    }
    return make_op(std::move(y), std::move(ps), "concat_rows", [](Node& s) {
        Index off = 0;
        for (const auto& p : s.parents) {
            accumulate(p, s.grad.middleRows(off, p->value.rows()));
            off += p->value.rows();
        }
    });
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    Index cols = 0;
    const Index rows = parts[0].rows();
    Parents ps;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw ShapeError("concat_cols: shape mismatch " + shape_string(parts[0]) + " vs " + shape_string(p));
        cols += p.cols();
        ps.push_back(p.node());
    }
    Matrix y(rows, cols);
    Index at = 0;
    for (const auto& p : parts) {
        y.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }
    return make_op(std::move(y), std::move(ps), "concat_cols", [](Node& s) {
        Index off = 0;
        for (const auto& p : s.parents) {
            accumulate(p, s.grad.middleCols(off, p->value.cols()));
            off += p->value.cols();
        }
    });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    const Tensor parts[] = {a, b};
    return concat_rows(parts);
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    const Tensor parts[] = {a, b};
    return concat_cols(parts);
}

Tensor slice_rows(const Tensor& a, Index begin, Index count) {
    if (begin < 0 || count < 0 || begin + count > a.rows()) {
        throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", +" + std::to_string(count) +
                         ") outside " + shape_string(a));
    }
    return make_op(a.value().middleRows(begin, count), {a.node()}, "slice_rows", [begin, count](Node& s) {
        if (s.parents[0]->requires_grad) s.parents[0]->grad.middleRows(begin, count) += s.grad;
    });
}

Tensor slice_cols(const Tensor& a, Index begin, Index count) {
    if (begin < 0 || count < 0 || begin + count > a.cols()) {
        throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", +" + std::to_string(count) +
                         ") outside " + shape_string(a));
    }
    return make_op(a.value().middleCols(begin, count), {a.node()}, "slice_cols", [begin, count](Node& s) {
        if (s.parents[0]->requires_grad) s.parents[0]->grad.middleCols(begin, count) += s.grad;
    });
}

Tensor gather_rows(const Tensor& a, std::span<const Index> rows) {
    Matrix y(static_cast<Index>(rows.size()), a.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] < 0 || rows[k] >= a.rows()) throw ShapeError("gather_rows: index out of range for " + shape_string(a));
        y.row(static_cast<Index>(k)) = a.value().row(rows[k]);
    }
    std::vector<Index> idx(rows.begin(), rows.end());
    return make_op(std::move(y), {a.node()}, "gather_rows", [idx = std::move(idx)](Node& s) {
        if (!s.parents[0]->requires_grad) return;
        for (std::size_t k = 0; k < idx.size(); ++k) s.parents[0]->grad.row(idx[k]) += s.grad.row(static_cast<Index>(k));
    });
}

Tensor segment_sum(const Tensor& a, std::span<const Index> segment, Index n_segments) {
    if (static_cast<Index>(segment.size()) != a.rows())
        throw ShapeError("segment_sum: " + std::to_string(segment.size()) + " segment ids for " + shape_string(a));
    Matrix y = Matrix::Zero(n_segments, a.cols());
    for (std::size_t k = 0; k < segment.size(); ++k) {
        if (segment[k] < 0 || segment[k] >= n_segments) throw ShapeError("segment_sum: segment id out of range");
        y.row(segment[k]) += a.value().row(static_cast<Index>(k));
    }
    std::vector<Index> seg(segment.begin(), segment.end());
    return make_op(std::move(y), {a.node()}, "segment_sum", [seg = std::move(seg)](Node& s) {
        if (!s.parents[0]->requires_grad) return;
        for (std::size_t k = 0; k < seg.size(); ++k) s.parents[0]->grad.row(static_cast<Index>(k)) += s.grad.row(seg[k]);
    });
}

Tensor pick(const Tensor& a, std::span<const Index> r, std::span<const Index> c) {
    if (r.size() != c.size()) throw ShapeError("pick: index lists differ in length");
    Matrix y(static_cast<Index>(r.size()), 1);
    for (std::size_t k = 0; k < r.size(); ++k) {
        if (r[k] < 0 || r[k] >= a.rows() || c[k] < 0 || c[k] >= a.cols()) {
            throw ShapeError("pick: index out of range for " + shape_string(a));
        }
        y(static_cast<Index>(k), 0) = a.value()(r[k], c[k]);
    }
    std::vector<Index> ri(r.begin(), r.end());
    std::vector<Index> ci(c.begin(), c.end());
    return make_op(std::move(y), {a.node()}, "pick", [ri = std::move(ri), ci = std::move(ci)](Node& s) {
        if (!s.parents[0]->requires_grad) return;
        for (std::size_t k = 0; k < ri.size(); ++k) s.parents[0]->grad(ri[k], ci[k]) += s.grad(static_cast<Index>(k), 0);
    });
}

Tensor add_row_bias(const Tensor& a, const Tensor& bias) {
    if (bias.rows() != 1 || bias.cols() != a.cols()) {
        throw ShapeError("add_row_bias: shape mismatch " + shape_string(a) + " vs " + shape_string(bias));
    }
    Matrix y = a.value().rowwise() + bias.value().row(0);
    return make_op(std::move(y), {a.node(), bias.node()}, "add_row_bias", [](Node& s) {
        accumulate(s.parents[0], s.grad);
        accumulate(s.parents[1], s.grad.colwise().sum());
    });
}

Tensor scale_rows(const Tensor& a, const Tensor& col) {
    if (col.cols() != 1 || col.rows() != a.rows()) {
        throw ShapeError("scale_rows: shape mismatch " + shape_string(a) + " vs " + shape_string(col));
    }
    Matrix y = a.value().array().colwise() * col.value().col(0).array();
    return make_op(std::move(y), {a.node(), col.node()}, "scale_rows", [](Node& s) {
        const auto& av = s.parents[0]->value;
        const auto& cv = s.parents[1]->value;
        if (s.parents[0]->requires_grad) s.parents[0]->grad.array() += s.grad.array().colwise() * cv.col(0).array();
        if (s.parents[1]->requires_grad) s.parents[1]->grad += s.grad.cwiseProduct(av).rowwise().sum();
    });
}

Tensor sum(const Tensor& a) {
    Matrix y(1, 1);
    y(0, 0) = a.value().sum();
    return make_op(std::move(y), {a.node()}, "sum", [](Node& s) {
        if (s.parents[0]->requires_grad) s.parents[0]->grad.array() += s.grad(0, 0);
    });
}

Tensor mean(const Tensor& a) {
    const double n = static_cast<double>(a.value().size());
    if (n == 0) throw ShapeError("mean of empty tensor");
    Matrix y(1, 1);
    y(0, 0) = a.value().sum() / n;
    return make_op(std::move(y), {a.node()}, "mean", [n](Node& s) {
        if (s.parents[0]->requires_grad) s.parents[0]->grad.array() += s.grad(0, 0) / n;
    });
}

Tensor softmax_rows(const Tensor& a) {
    Matrix y = a.value();
    for (Index i = 0; i < y.rows(); ++i) {
        const double m = y.row(i).maxCoeff();
        y.row(i) = (y.row(i).array() - m).exp().matrix();
        y.row(i) /= y.row(i).sum();
    }
    return make_op(std::move(y), {a.node()}, "softmax_rows", [](Node& s) {
        if (!s.parents[0]->requires_grad) return;
        const Eigen::VectorXd dots = s.grad.cwiseProduct(s.value).rowwise().sum();
        s.parents[0]->grad += (s.value.array() * (s.grad.colwise() - dots).array()).matrix();
    });
}

Tensor normalize_rows(const Tensor& a) {
    const Eigen::VectorXd norms = a.value().rowwise().norm();
    if ((norms.array() == 0.0).any()) throw NumericError("normalize_rows: zero-norm row");
    Matrix y = a.value().array().colwise() / norms.array();
    return make_op(std::move(y), {a.node()}, "normalize_rows", [norms](Node& s) {
        if (!s.parents[0]->requires_grad) return;
        const Eigen::VectorXd dots = s.grad.cwiseProduct(s.value).rowwise().sum();
        Matrix g = s.grad - (s.value.array().colwise() * dots.array()).matrix();
        g.array().colwise() /= norms.array();
        s.parents[0]->grad += g;
    });
}

Tensor masked_logsumexp_rows(const Tensor& a, const Matrix& mask) {
    if (mask.rows() != a.rows() || mask.cols() != a.cols()) {
        throw ShapeError("masked_logsumexp_rows: mask shape differs from " + shape_string(a));
    }
    const Index n = a.rows();
    Matrix y = Matrix::Zero(n, 1);
    Matrix weights = Matrix::Zero(a.rows(), a.cols());  // softmax over active entries
    for (Index i = 0; i < n; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (Index j = 0; j < a.cols(); ++j)
            if (mask(i, j) != 0.0) m = std::max(m, a.value()(i, j));
        if (!std::isfinite(m)) continue;
        double acc = 0.0;
        for (Index j = 0; j < a.cols(); ++j) {
            if (mask(i, j) == 0.0) continue;
            weights(i, j) = std::exp(a.value()(i, j) - m);
            acc += weights(i, j);
        }
        weights.row(i) /= acc;
        y(i, 0) = m + std::log(acc);
    }
    return make_op(std::move(y), {a.node()}, "masked_logsumexp_rows", [weights](Node& s) {
        if (!s.parents[0]->requires_grad) return;
        s.parents[0]->grad.array() += weights.array().colwise() * s.grad.col(0).array();
    });
}

Tensor layer_norm_rows(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
    const Index c = a.cols();
    if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 || bias.cols() != c) {
        throw ShapeError("layer_norm_rows: gain/bias must be 1x" + std::to_string(c) + ", got " +
                         shape_string(gain) + " and " + shape_string(bias));
    }
    const Eigen::VectorXd mu = a.value().rowwise().mean();
    Matrix xhat = a.value().colwise() - mu;
    const Eigen::VectorXd inv_sigma =
        ((xhat.array().square().rowwise().sum() / static_cast<double>(c)) + eps).rsqrt().matrix();
    xhat.array().colwise() *= inv_sigma.array();
    Matrix y = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
    return make_op(std::move(y), {a.node(), gain.node(), bias.node()}, "layer_norm_rows",
                   [xhat, inv_sigma](Node& s) {
                       const double cn = static_cast<double>(xhat.cols());
                       if (s.parents[1]->requires_grad) s.parents[1]->grad += s.grad.cwiseProduct(xhat).colwise().sum();
                       if (s.parents[2]->requires_grad) s.parents[2]->grad += s.grad.colwise().sum();
                       if (!s.parents[0]->requires_grad) return;
                       const Matrix gx = s.grad.array().rowwise() * s.parents[1]->value.row(0).array();
                       const Eigen::VectorXd m1 = gx.rowwise().sum() / cn;
                       const Eigen::VectorXd m2 = gx.cwiseProduct(xhat).rowwise().sum() / cn;
                       Matrix g = (gx.colwise() - m1) - (xhat.array().colwise() * m2.array()).matrix();
                       g.array().colwise() *= inv_sigma.array();
                       s.parents[0]->grad += g;
                   });
}

Tensor dropout(const Tensor& a, double rate, Rng& rng) {
    if (rate <= 0.0) return a;
    if (rate >= 1.0) throw ShapeError("dropout rate must be < 1");
    Matrix mask(a.rows(), a.cols());
    const double keep_scale = 1.0 / (1.0 - rate);
    for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = uniform01(rng) < rate ? 0.0 : keep_scale;
    return make_op(a.value().cwiseProduct(mask), {a.node()}, "dropout",
                   [mask](Node& s) { accumulate(s.parents[0], s.grad.cwiseProduct(mask)); });
}

std::vector<const Node*> tape_of(const Tensor& root) {
    std::vector<const Node*> order;
    if (!root.defined() || !root.requires_grad()) return order;
    std::unordered_set<const Node*> visited;
    // iterative post-order DFS
    std::vector<std::pair<const Node*, std::size_t>> stack{{root.node().get(), 0}};
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            const Node* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    std::reverse(order.begin(), order.end());
    return order;
}

void backward(const Tensor& root) {
    if (root.rows() != 1 || root.cols() != 1) throw ShapeError("backward needs a 1x1 root, got " + shape_string(root));
    if (!root.requires_grad()) return;
    const auto order = tape_of(root);
    root.node()->grad(0, 0) += 1.0;
    for (const Node* cn : order) {
        auto* n = const_cast<Node*>(cn);
        if (n->backward) n->backward(*n);
    }
}

double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradCheckResult grad_check(const std::function<Tensor(std::span<const Tensor>)>& f,
                           const std::vector<Matrix>& inputs, double eps) {
    std::vector<Tensor> params;
    for (const auto& m : inputs) params.push_back(Tensor::parameter(m));
    const Tensor out = f(params);
    if (out.rows() != 1 || out.cols() != 1) throw ShapeError("grad_check: function output must be scalar, got " + shape_string(out));
    backward(out);

    GradCheckResult res;
    std::vector<Tensor> probe;
    for (const auto& m : inputs) probe.push_back(Tensor::constant(m));
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (Index i = 0; i < inputs[k].size(); ++i) {
            Matrix plus = inputs[k];
            Matrix minus = inputs[k];
            plus.data()[i] += eps;
            minus.data()[i] -= eps;
            probe[k] = Tensor::constant(plus);
            const double fp = f(probe).item();
            probe[k] = Tensor::constant(minus);
            const double fm = f(probe).item();
            probe[k] = Tensor::constant(inputs[k]);
            const double numeric = (fp - fm) / (2.0 * eps);
            res.max_rel_error = std::max(res.max_rel_error, relative_error(params[k].grad().data()[i], numeric));
            ++res.coordinates;
        }
    }
    return res;
}

ParamCheckReport check_param_gradients(const std::function<Tensor()>& f, std::span<Tensor> params,
                                       const ParamCheckOptions& opt) {
    for (auto& p : params) p.zero_grad();
    const Tensor out = f();
    if (out.rows() != 1 || out.cols() != 1) throw ShapeError("check_param_gradients: output must be scalar, got " + shape_string(out));
    const double f0 = out.item();
    backward(out);

    ParamCheckReport rep;
    Rng rng = make_rng(opt.seed, "param-check");
    const auto eval = [&]() { return f().item(); };
    for (auto& p : params) {
        Matrix& value = p.node()->value;
        const auto n = static_cast<std::size_t>(value.size());
        std::vector<std::size_t> coords(n);
        for (std::size_t k = 0; k < n; ++k) coords[k] = k;
        if (opt.per_tensor < n) {
            for (std::size_t t = 0; t < opt.per_tensor; ++t) std::swap(coords[t], coords[t + uniform_index(rng, n - t)]);
            coords.resize(opt.per_tensor);
        }
        for (std::size_t c : coords) {
            const double orig = value.data()[c];
            value.data()[c] = orig + opt.eps;
            const double fp = eval();
            value.data()[c] = orig - opt.eps;
            const double fm = eval();
            value.data()[c] = orig;
            const double fwd = (fp - f0) / opt.eps;
            const double bwd = (f0 - fm) / opt.eps;
            if (std::abs(fwd - bwd) > opt.kink_ratio * (std::abs(fwd) + std::abs(bwd)) + 1e-5) {
                ++rep.skipped_nonsmooth;
                continue;
            }
            const double numeric = (fp - fm) / (2.0 * opt.eps);
            const double analytic = p.grad().data()[c];
            ++rep.checked;
            if (std::abs(analytic) + std::abs(numeric) < opt.rel_floor)
                rep.max_abs_error = std::max(rep.max_abs_error, std::abs(analytic - numeric));
            else
                rep.max_rel_error = std::max(rep.max_rel_error, relative_error(analytic, numeric));
        }
    }
    return rep;
}

}  // namespace nara::ad
