//
//  tensor.hpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//
//  Minimal reverse-mode autodiff over dense double tensors. Values are stored
//  row-major, so a [C x T] tensor maps onto a row-major Eigen matrix with one
//  channel per row. Operators never mutate their inputs; each result records
//  its parents and a closure that pushes its gradient back to them.
//

#pragma once

#include <Eigen/Core>

#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace bicilab::nn {

using Shape = std::vector<Eigen::Index>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

Eigen::Index numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor {
public:
    struct Node {
        Shape shape;
        Eigen::VectorXd value;
        Eigen::VectorXd grad;
        bool requires_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(const Node&)> backward;
    };

    Tensor() = default;

    static Tensor constant(Shape shape, Eigen::VectorXd values);
    static Tensor zeros(Shape shape) { return constant(shape, Eigen::VectorXd::Zero(nn::numel(shape))); }
    static Tensor scalar(double v) { return constant({1}, Eigen::VectorXd::Constant(1, v)); }
    /// Trainable leaf.
    static Tensor parameter(Shape shape, Eigen::VectorXd values);
    /// [rows x cols] tensor from an Eigen matrix.
    static Tensor from_matrix(const Eigen::MatrixXd& m, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    Eigen::Index dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t rank() const { return node_->shape.size(); }
    Eigen::Index numel() const { return node_->value.size(); }
    bool requires_grad() const { return node_->requires_grad; }

    const Eigen::VectorXd& value() const { return node_->value; }
    /// Gradient after backward(); zeros if nothing flowed into this tensor.
    Eigen::VectorXd grad() const;
    bool has_grad() const { return node_->grad.size() == node_->value.size(); }

    /// Rank-2 view (dim 0 rows, remaining dims flattened into columns).
    ConstMatrixMap matrix() const;
    Eigen::MatrixXd to_matrix() const { return matrix(); }
    double item() const;

    /// Parameter updates; only valid on leaves.
    Eigen::VectorXd& mutable_value();
    void zero_grad() { node_->grad.resize(0); }

    const std::shared_ptr<Node>& node() const { return node_; }

    /// Builds an operator result. `inputs` that do not require gradients are
    /// not retained; the closure receives the result node (value and grad).
    static Tensor make(Shape shape, Eigen::VectorXd value, std::initializer_list<Tensor> inputs,
                       std::function<void(const Node&)> backward);

private:
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
    std::shared_ptr<Node> node_;
};

/// Accumulates `g` into `t`'s gradient if `t` requires one.
void accumulate_grad(const std::shared_ptr<Tensor::Node>& t, const Eigen::Ref<const Eigen::VectorXd>& g);

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

/// Reverse pass from a scalar loss. Populates leaf gradients (accumulating)
/// and releases the interior graph.
void backward(const Tensor& loss);

struct Conv1dOptions {
    Eigen::Index stride = 1;
    Eigen::Index dilation = 1;
    Eigen::Index padding = 0;
    Eigen::Index groups = 1;
};

Eigen::Index conv1d_output_length(Eigen::Index length, Eigen::Index kernel, const Conv1dOptions& opt);

/// Cross-correlation. input [C_in x T], kernels [C_out x C_in/groups x K], bias [C_out] or undefined.
Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias = {}, const Conv1dOptions& opt = {});

/// Adjoint of conv1d (padding 0, dilation 1). input [C_in x T], kernels
/// [C_in x C_out x K], bias [C_out] or undefined. Output length (T-1)*stride + K.
Tensor conv1d_transposed(const Tensor& input, const Tensor& kernels, const Tensor& bias = {}, Eigen::Index stride = 1);

/// Elementwise ops. `b` may match `a` or broadcast along a's trailing
/// dimensions (b.shape a suffix of a.shape, or a single element).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// x for x > 0, a * x otherwise; `a` holds a single learned slope.
Tensor prelu(const Tensor& x, const Tensor& a);

inline constexpr double kLayerNormEpsilon = 1e-8;

/// Global layer norm over all of [C x T] with per-channel gamma, beta [C].
Tensor global_layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = kLayerNormEpsilon);

/// Per-channel mean removal and L2 normalization over time, followed by
/// [relu(u); relu(-u)] stacked along channels: [C x T] -> [2C x T].
Tensor antirectifier(const Tensor& x, double eps = 1e-12);

/// First `count` columns of a [C x T] tensor.
Tensor slice_columns(const Tensor& x, Eigen::Index count);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Mean squared error against a constant target.
Tensor mse(const Tensor& pred, const Eigen::VectorXd& target);
/// Mean binary cross-entropy of logits against 0/1 targets.
Tensor bce_with_logits(const Tensor& logits, const Eigen::VectorXd& target);

} // namespace bicilab::nn
