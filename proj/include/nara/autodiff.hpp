#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nara/seeding.hpp"

// Minimal reverse-mode autodiff over dense row-major float64 matrices.
//
// Every op allocates a node holding its value, its parents and a closure
// that pushes the node's gradient to the parents. `backward(root)` orders
// the reachable nodes topologically (the tape) and runs the closures in
// reverse, each exactly once; gradients accumulate additively so shared
// subexpressions receive the sum of all downstream paths.
namespace nara::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct Node {
    Matrix value;
    Matrix grad;  // allocated iff requires_grad
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
    const char* op = "leaf";
};

class Tensor {
public:
    Tensor() = default;

    /// Leaf that never receives gradient.
    static Tensor constant(Matrix value);
    /// Leaf with a gradient accumulator.
    static Tensor parameter(Matrix value);
    static Tensor scalar(double v);

    bool defined() const { return node_ != nullptr; }
    const Matrix& value() const { return node_->value; }
    const Matrix& grad() const { return node_->grad; }
    Matrix& mutable_grad() { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    Index rows() const { return node_->value.rows(); }
    Index cols() const { return node_->value.cols(); }
    double item() const;
    void zero_grad();

    const std::shared_ptr<Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<Node> node_;
};

std::string shape_string(const Tensor& t);

// elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);  // tanh approximation
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

// linear algebra and layout
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& a, Index begin, Index count);
Tensor slice_cols(const Tensor& a, Index begin, Index count);
/// Rows picked by index (repeats allowed); backward scatters with accumulation.
Tensor gather_rows(const Tensor& a, std::span<const Index> rows);
/// Row k of `a` is added to output row segment[k].
Tensor segment_sum(const Tensor& a, std::span<const Index> segment, Index n_segments);
/// Elements a(r_k, c_k) as a K x 1 column.
Tensor pick(const Tensor& a, std::span<const Index> r, std::span<const Index> c);

// broadcasting (bias-style only)
Tensor add_row_bias(const Tensor& a, const Tensor& bias);  // bias: 1 x cols
Tensor scale_rows(const Tensor& a, const Tensor& col);     // col: rows x 1

// reductions and normalizations
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor normalize_rows(const Tensor& a);  // row-wise L2
/// Row-wise log-sum-exp over entries where mask(i,j) != 0. Rows without any
/// active entry produce 0 and no gradient.
Tensor masked_logsumexp_rows(const Tensor& a, const Matrix& mask);
Tensor layer_norm_rows(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
/// Inverted dropout with a fixed keep mask drawn from `rng`.
Tensor dropout(const Tensor& a, double rate, Rng& rng);

/// Runs the tape from a 1x1 root; seeds d(root)=1.
void backward(const Tensor& root);

/// Number of nodes reachable from root, in the order backward would visit them.
std::vector<const Node*> tape_of(const Tensor& root);

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t coordinates = 0;
};

/// Central-difference gradient check of a scalar function over every
/// coordinate of every input. Relative error per coordinate is
/// |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
GradCheckResult grad_check(const std::function<Tensor(std::span<const Tensor>)>& f,
                           const std::vector<Matrix>& inputs, double eps = 1e-5);

double relative_error(double analytic, double numeric);

struct ParamCheckOptions {
    double eps = 1e-5;
    /// Coordinates sampled per tensor (all when the tensor is smaller).
    std::size_t per_tensor = std::numeric_limits<std::size_t>::max();
    std::uint64_t seed = 0;
    /// Below this magnitude (|g_ad| + |g_fd|) only the absolute error is checked.
    double rel_floor = 1e-6;
    /// Coordinates whose one-sided slopes disagree by more than this fraction
    /// sit on a kink (relu, hinge) and are skipped.
    double kink_ratio = 0.05;
};

struct ParamCheckReport {
    double max_rel_error = 0.0;  // over coordinates above rel_floor
    double max_abs_error = 0.0;  // over coordinates below rel_floor
    std::size_t checked = 0;
    std::size_t skipped_nonsmooth = 0;
};

/// Finite-difference check of d f / d params where `f` rebuilds its graph
/// from the given parameter tensors on every call. Values are perturbed in
/// place and restored.
ParamCheckReport check_param_gradients(const std::function<Tensor()>& f, std::span<Tensor> params,
                                       const ParamCheckOptions& opt = {});

}  // namespace nara::ad
