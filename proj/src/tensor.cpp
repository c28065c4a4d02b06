//
//  tensor.cpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#include "bicilab/tensor.hpp"
#include "bicilab/error.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace bicilab::nn {

using NodePtr = std::shared_ptr<Tensor::Node>;

namespace {

thread_local bool g_grad_enabled = true;

[[noreturn]] void shape_error(const std::string& op, const std::string& detail)
{
    throw std::invalid_argument(op + ": " + detail);
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* name)
{
    if (!t.defined())
        shape_error(op, std::string(name) + " is undefined");
    if (t.rank() != rank)
        shape_error(op, std::string(name) + " must have rank " + std::to_string(rank) + ", got " +
                            shape_string(t.shape()));
}

MatrixMap as_matrix(Eigen::VectorXd& v, Eigen::Index rows, Eigen::Index cols) { return {v.data(), rows, cols}; }
ConstMatrixMap as_matrix(const Eigen::VectorXd& v, Eigen::Index rows, Eigen::Index cols)
{
    return {v.data(), rows, cols};
}
ConstMatrixMap view(const Eigen::VectorXd& v, Eigen::Index rows, Eigen::Index cols) { return as_matrix(v, rows, cols); }

} // namespace

Eigen::Index numel(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), Eigen::Index{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape)
{
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i)
            s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor Tensor::constant(Shape shape, Eigen::VectorXd values)
{
    if (values.size() != nn::numel(shape))
        shape_error("Tensor", "value count " + std::to_string(values.size()) + " does not match shape " +
                                  shape_string(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    return Tensor(std::move(n));
}

Tensor Tensor::parameter(Shape shape, Eigen::VectorXd values)
{
    Tensor t = constant(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    return t;
}

Tensor Tensor::from_matrix(const Eigen::MatrixXd& m, bool requires_grad)
{
    RowMatrix rm = m;
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(rm.data(), rm.size());
    return requires_grad ? parameter({m.rows(), m.cols()}, std::move(v)) : constant({m.rows(), m.cols()}, std::move(v));
}

Eigen::VectorXd Tensor::grad() const
{
    if (has_grad())
        return node_->grad;
    return Eigen::VectorXd::Zero(node_->value.size());
}

ConstMatrixMap Tensor::matrix() const
{
    const Eigen::Index rows = node_->shape.empty() ? 1 : node_->shape[0];
    return view(node_->value, rows, rows ? node_->value.size() / rows : 0);
}

double Tensor::item() const
{
    if (numel() != 1)
        shape_error("item", "tensor has shape " + shape_string(shape()));
    return node_->value(0);
}

Eigen::VectorXd& Tensor::mutable_value()
{
    if (node_->backward)
        throw std::logic_error("mutable_value: only leaf tensors may be updated in place");
    return node_->value;
}

Tensor Tensor::make(Shape shape, Eigen::VectorXd value, std::initializer_list<Tensor> inputs,
                    std::function<void(const Node&)> backward)
{
    if (!value.allFinite())
        throw NumericalError("tensor op produced non-finite values (shape " + shape_string(shape) + ")");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    if (g_grad_enabled) {
        for (const Tensor& in : inputs)
            if (in.defined() && in.requires_grad())
                n->parents.push_back(in.node_);
        if (!n->parents.empty()) {
            n->requires_grad = true;
            n->backward = std::move(backward);
        }
    }
    return Tensor(std::move(n));
}

void accumulate_grad(const NodePtr& t, const Eigen::Ref<const Eigen::VectorXd>& g)
{
    if (!t || !t->requires_grad)
        return;
    if (t->grad.size() != t->value.size())
        t->grad = g;
    else
        t->grad += g;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void backward(const Tensor& loss)
{
    if (!loss.defined() || loss.numel() != 1)
        throw std::invalid_argument("backward: loss must be a scalar tensor");
    if (!loss.requires_grad())
        return;

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<NodePtr> order;
    std::unordered_set<const Tensor::Node*> visited;
    std::vector<std::pair<NodePtr, std::size_t>> stack{{loss.node(), 0}};
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            const NodePtr parent = node->parents[next++];
            if (visited.insert(parent.get()).second)
                stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    accumulate_grad(loss.node(), Eigen::VectorXd::Ones(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const Tensor::Node& node = **it;
        if (node.backward && node.grad.size() == node.value.size())
            node.backward(node);
    }
    for (const NodePtr& node : order) {
        if (node->backward) {
            node->backward = nullptr;
            node->parents.clear();
            node->grad.resize(0);
        }
    }
}

// ---------------------------------------------------------------------------
// Convolution

Eigen::Index conv1d_output_length(Eigen::Index length, Eigen::Index kernel, const Conv1dOptions& opt)
{
    const Eigen::Index span = opt.dilation * (kernel - 1) + 1;
    const Eigen::Index padded = length + 2 * opt.padding;
    if (padded < span)
        return 0;
    return (padded - span) / opt.stride + 1;
}

namespace {

// cols[(c*K + k), t] = x[c, t*stride + k*dilation - padding], zero outside.
RowMatrix im2col(const double* x, Eigen::Index channels, Eigen::Index length, Eigen::Index kernel, Eigen::Index t_out,
                 Eigen::Index stride, Eigen::Index dilation, Eigen::Index padding)
{
    RowMatrix cols = RowMatrix::Zero(channels * kernel, t_out);
    for (Eigen::Index c = 0; c < channels; ++c) {
        const double* row = x + c * length;
        for (Eigen::Index k = 0; k < kernel; ++k) {
            double* dst = cols.data() + (c * kernel + k) * t_out;
            const Eigen::Index offset = k * dilation - padding;
            for (Eigen::Index t = 0; t < t_out; ++t) {
                const Eigen::Index src = t * stride + offset;
                if (src >= 0 && src < length)
                    dst[t] = row[src];
            }
        }
    }
    return cols;
}

// Adjoint of im2col: x[c, t*stride + k*dilation - padding] += cols[(c*K + k), t].
void col2im(const RowMatrix& cols, double* x, Eigen::Index channels, Eigen::Index length, Eigen::Index kernel,
            Eigen::Index t_out, Eigen::Index stride, Eigen::Index dilation, Eigen::Index padding)
{
    for (Eigen::Index c = 0; c < channels; ++c) {
        double* row = x + c * length;
        for (Eigen::Index k = 0; k < kernel; ++k) {
            const double* src = cols.data() + (c * kernel + k) * t_out;
            const Eigen::Index offset = k * dilation - padding;
            for (Eigen::Index t = 0; t < t_out; ++t) {
                const Eigen::Index dst = t * stride + offset;
                if (dst >= 0 && dst < length)
                    row[dst] += src[t];
            }
        }
    }
}

void check_bias(const Tensor& bias, Eigen::Index channels, const char* op)
{
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != channels))
        shape_error(op, "bias must have shape [" + std::to_string(channels) + "], got " + shape_string(bias.shape()));
}

} // namespace

Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias, const Conv1dOptions& opt)
{
    require_rank(input, 2, "conv1d", "input");
    require_rank(kernels, 3, "conv1d", "kernels");
    if (opt.stride < 1 || opt.dilation < 1 || opt.padding < 0 || opt.groups < 1)
        shape_error("conv1d", "stride, dilation and groups must be >= 1 and padding >= 0");

    const Eigen::Index c_in = input.dim(0);
    const Eigen::Index length = input.dim(1);
    const Eigen::Index c_out = kernels.dim(0);
    const Eigen::Index k = kernels.dim(2);
    const Eigen::Index groups = opt.groups;
    if (c_in % groups != 0 || c_out % groups != 0)
        shape_error("conv1d", "channels (in " + std::to_string(c_in) + ", out " + std::to_string(c_out) +
                                  ") not divisible by groups " + std::to_string(groups));
    const Eigen::Index cin_g = c_in / groups;
    const Eigen::Index cout_g = c_out / groups;
    if (kernels.dim(1) != cin_g)
        shape_error("conv1d", "kernels " + shape_string(kernels.shape()) + " expect " + std::to_string(kernels.dim(1)) +
                                  " input channels per group, input " + shape_string(input.shape()) + " provides " +
                                  std::to_string(cin_g));
    check_bias(bias, c_out, "conv1d");
    const Eigen::Index t_out = conv1d_output_length(length, k, opt);
    if (t_out < 1)
        shape_error("conv1d", "input length " + std::to_string(length) + " too short for kernel " + std::to_string(k) +
                                  " with dilation " + std::to_string(opt.dilation));

    const ConstMatrixMap w = as_matrix(kernels.value(), c_out, cin_g * k);
    Eigen::VectorXd out_v(c_out * t_out);
    MatrixMap out = as_matrix(out_v, c_out, t_out);
    for (Eigen::Index g = 0; g < groups; ++g) {
        const RowMatrix cols = im2col(input.value().data() + g * cin_g * length, cin_g, length, k, t_out, opt.stride,
                                      opt.dilation, opt.padding);
        out.middleRows(g * cout_g, cout_g).noalias() = w.middleRows(g * cout_g, cout_g) * cols;
    }
    if (bias.defined())
        out.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.value().data(), c_out);

    const NodePtr xn = input.node(), wn = kernels.node(), bn = bias.defined() ? bias.node() : nullptr;
    return Tensor::make({c_out, t_out}, std::move(out_v), {input, kernels, bias}, [=](const Tensor::Node& self) {
        const ConstMatrixMap dout = as_matrix(self.grad, c_out, t_out);
        const ConstMatrixMap wm = view(wn->value, c_out, cin_g * k);
        Eigen::VectorXd dx_v = Eigen::VectorXd::Zero(xn->requires_grad ? c_in * length : 0);
        Eigen::VectorXd dw_v = Eigen::VectorXd::Zero(wn->requires_grad ? c_out * cin_g * k : 0);
        for (Eigen::Index g = 0; g < groups; ++g) {
            const auto dout_g = dout.middleRows(g * cout_g, cout_g);
            if (wn->requires_grad) {
                const RowMatrix cols = im2col(xn->value.data() + g * cin_g * length, cin_g, length, k, t_out,
                                              opt.stride, opt.dilation, opt.padding);
                as_matrix(dw_v, c_out, cin_g * k).middleRows(g * cout_g, cout_g).noalias() = dout_g * cols.transpose();
            }
            if (xn->requires_grad) {
                const RowMatrix dcols = wm.middleRows(g * cout_g, cout_g).transpose() * dout_g;
                col2im(dcols, dx_v.data() + g * cin_g * length, cin_g, length, k, t_out, opt.stride, opt.dilation,
                       opt.padding);
            }
        }
        if (xn->requires_grad)
            accumulate_grad(xn, dx_v);
        if (wn->requires_grad)
            accumulate_grad(wn, dw_v);
        if (bn && bn->requires_grad)
            accumulate_grad(bn, dout.rowwise().sum());
    });
}

Tensor conv1d_transposed(const Tensor& input, const Tensor& kernels, const Tensor& bias, Eigen::Index stride)
{
    require_rank(input, 2, "conv1d_transposed", "input");
    require_rank(kernels, 3, "conv1d_transposed", "kernels");
    if (stride < 1)
        shape_error("conv1d_transposed", "stride must be >= 1");
    const Eigen::Index c_in = input.dim(0);
    const Eigen::Index length = input.dim(1);
    if (kernels.dim(0) != c_in)
        shape_error("conv1d_transposed", "kernels " + shape_string(kernels.shape()) + " expect " +
                                             std::to_string(kernels.dim(0)) + " input channels, input " +
                                             shape_string(input.shape()) + " provides " + std::to_string(c_in));
    const Eigen::Index c_out = kernels.dim(1);
    const Eigen::Index k = kernels.dim(2);
    check_bias(bias, c_out, "conv1d_transposed");
    const Eigen::Index t_out = (length - 1) * stride + k;

    const ConstMatrixMap w = as_matrix(kernels.value(), c_in, c_out * k);
    const ConstMatrixMap x = as_matrix(input.value(), c_in, length);
    const RowMatrix cols = w.transpose() * x;
    Eigen::VectorXd out_v = Eigen::VectorXd::Zero(c_out * t_out);
    col2im(cols, out_v.data(), c_out, t_out, k, length, stride, 1, 0);
    if (bias.defined())
        as_matrix(out_v, c_out, t_out).colwise() += Eigen::Map<const Eigen::VectorXd>(bias.value().data(), c_out);

    const NodePtr xn = input.node(), wn = kernels.node(), bn = bias.defined() ? bias.node() : nullptr;
    return Tensor::make({c_out, t_out}, std::move(out_v), {input, kernels, bias}, [=](const Tensor::Node& self) {
        const RowMatrix dcols = im2col(self.grad.data(), c_out, t_out, k, length, stride, 1, 0);
        if (xn->requires_grad) {
            const RowMatrix dx = as_matrix(wn->value, c_in, c_out * k) * dcols;
            accumulate_grad(xn, Eigen::Map<const Eigen::VectorXd>(dx.data(), dx.size()));
        }
        if (wn->requires_grad) {
            const RowMatrix dw = as_matrix(xn->value, c_in, length) * dcols.transpose();
            accumulate_grad(wn, Eigen::Map<const Eigen::VectorXd>(dw.data(), dw.size()));
        }
        if (bn && bn->requires_grad)
            accumulate_grad(bn, as_matrix(self.grad, c_out, t_out).rowwise().sum());
    });
}

// ---------------------------------------------------------------------------
// Elementwise

namespace {

// Number of times b tiles a under trailing-dimension broadcast.
Eigen::Index broadcast_repeats(const Tensor& a, const Tensor& b, const char* op)
{
    if (!a.defined() || !b.defined())
        shape_error(op, "undefined operand");
    if (a.shape() == b.shape())
        return 1;
    if (b.numel() == 1)
        return a.numel();
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (bs.size() <= as.size() && std::equal(bs.rbegin(), bs.rend(), as.rbegin()))
        return a.numel() / b.numel();
    shape_error(op, "shapes " + shape_string(as) + " and " + shape_string(bs) + " are not broadcast-compatible");
}

Eigen::VectorXd tile(const Eigen::VectorXd& b, Eigen::Index repeats) { return b.replicate(repeats, 1); }

Eigen::VectorXd fold(const Eigen::VectorXd& g, Eigen::Index repeats, Eigen::Index n)
{
    return as_matrix(g, repeats, n).colwise().sum().transpose();
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b)
{
    const Eigen::Index r = broadcast_repeats(a, b, "add");
    const Eigen::Index bn_size = b.numel();
    const NodePtr an = a.node(), bn = b.node();
    return Tensor::make(a.shape(), a.value() + tile(b.value(), r), {a, b}, [=](const Tensor::Node& self) {
        accumulate_grad(an, self.grad);
        if (bn->requires_grad)
            accumulate_grad(bn, fold(self.grad, r, bn_size));
    });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b)
{
    const Eigen::Index r = broadcast_repeats(a, b, "mul");
    const Eigen::Index bn_size = b.numel();
    const NodePtr an = a.node(), bn = b.node();
    return Tensor::make(a.shape(), a.value().cwiseProduct(tile(b.value(), r)), {a, b}, [=](const Tensor::Node& self) {
        if (an->requires_grad)
            accumulate_grad(an, self.grad.cwiseProduct(tile(bn->value, r)));
        if (bn->requires_grad)
            accumulate_grad(bn, fold(self.grad.cwiseProduct(an->value), r, bn_size));
    });
}

Tensor scale(const Tensor& x, double s)
{
    const NodePtr xn = x.node();
    return Tensor::make(x.shape(), x.value() * s, {x}, [=](const Tensor::Node& self) {
        accumulate_grad(xn, self.grad * s);
    });
}

Tensor relu(const Tensor& x)
{
    const NodePtr xn = x.node();
    return Tensor::make(x.shape(), x.value().cwiseMax(0.0), {x}, [=](const Tensor::Node& self) {
        accumulate_grad(xn, (xn->value.array() > 0.0).select(self.grad, 0.0));
    });
}

Tensor sigmoid(const Tensor& x)
{
    Eigen::VectorXd y = x.value().unaryExpr([](double v) {
        if (v >= 0.0)
            return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
    });
    const NodePtr xn = x.node();
    return Tensor::make(x.shape(), std::move(y), {x}, [=](const Tensor::Node& self) {
        accumulate_grad(xn, self.grad.cwiseProduct(self.value.cwiseProduct((1.0 - self.value.array()).matrix())));
    });
}

Tensor prelu(const Tensor& x, const Tensor& a)
{
    if (!a.defined() || a.numel() != 1)
        shape_error("prelu", "slope must hold a single element");
    const double slope = a.item();
    const Eigen::ArrayXd xv = x.value().array();
    Eigen::VectorXd y = (xv > 0.0).select(xv, slope * xv).matrix();
    const NodePtr xn = x.node(), an = a.node();
    return Tensor::make(x.shape(), std::move(y), {x, a}, [=](const Tensor::Node& self) {
        const Eigen::ArrayXd v = xn->value.array();
        const Eigen::ArrayXd g = self.grad.array();
        if (xn->requires_grad)
            accumulate_grad(xn, (v > 0.0).select(g, an->value(0) * g).matrix());
        if (an->requires_grad)
            accumulate_grad(an, Eigen::VectorXd::Constant(1, (v > 0.0).select(0.0, g * v).sum()));
    });
}

Tensor global_layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps)
{
    require_rank(x, 2, "global_layer_norm", "input");
    const Eigen::Index c = x.dim(0), t = x.dim(1);
    if (gamma.numel() != c || beta.numel() != c)
        shape_error("global_layer_norm", "gamma/beta must have " + std::to_string(c) + " entries");

    const auto n = static_cast<double>(x.numel());
    const double mu = x.value().sum() / n;
    const Eigen::ArrayXd centered = x.value().array() - mu;
    const double var = centered.square().sum() / n;
    const double inv = 1.0 / std::sqrt(var + eps);
    Eigen::VectorXd xhat_v = (centered * inv).matrix();

    Eigen::VectorXd y_v(x.numel());
    const ConstMatrixMap xhat = view(xhat_v, c, t);
    const Eigen::Map<const Eigen::VectorXd> gm(gamma.value().data(), c), bm(beta.value().data(), c);
    as_matrix(y_v, c, t) = (xhat.array().colwise() * gm.array()).colwise() + bm.array();

    const NodePtr xn = x.node(), gn = gamma.node(), bn = beta.node();
    return Tensor::make(x.shape(), std::move(y_v), {x, gamma, beta},
                        [=, xhat_v = std::move(xhat_v)](const Tensor::Node& self) {
                            const ConstMatrixMap dy = as_matrix(self.grad, c, t);
                            const ConstMatrixMap xh = as_matrix(xhat_v, c, t);
                            if (gn->requires_grad)
                                accumulate_grad(gn, dy.cwiseProduct(xh).rowwise().sum());
                            if (bn->requires_grad)
                                accumulate_grad(bn, dy.rowwise().sum());
                            if (xn->requires_grad) {
                                const Eigen::Map<const Eigen::VectorXd> g(gn->value.data(), c);
                                const RowMatrix dxhat = dy.array().colwise() * g.array();
                                const double m1 = dxhat.mean();
                                const double m2 = dxhat.cwiseProduct(xh).mean();
                                const RowMatrix dx = inv * (dxhat.array() - m1 - xh.array() * m2);
                                accumulate_grad(xn, Eigen::Map<const Eigen::VectorXd>(dx.data(), dx.size()));
                            }
                        });
}

Tensor antirectifier(const Tensor& x, double eps)
{
    require_rank(x, 2, "antirectifier", "input");
    const Eigen::Index c = x.dim(0), t = x.dim(1);
    const ConstMatrixMap xm = x.matrix();
    RowMatrix d = xm.colwise() - xm.rowwise().mean();
    const Eigen::VectorXd norms = (d.rowwise().squaredNorm().array() + eps).sqrt().matrix();
    RowMatrix u = d.array().colwise() / norms.array();

    Eigen::VectorXd y_v(2 * c * t);
    MatrixMap y = as_matrix(y_v, 2 * c, t);
    y.topRows(c) = u.cwiseMax(0.0);
    y.bottomRows(c) = (-u).cwiseMax(0.0);

    const NodePtr xn = x.node();
    return Tensor::make({2 * c, t}, std::move(y_v), {x},
                        [=, d = std::move(d), u = std::move(u)](const Tensor::Node& self) {
                            const ConstMatrixMap g = as_matrix(self.grad, 2 * c, t);
                            const RowMatrix du = (u.array() > 0.0).select(g.topRows(c), 0.0) -
                                                 (u.array() < 0.0).select(g.bottomRows(c), 0.0);
                            const Eigen::VectorXd proj = du.cwiseProduct(d).rowwise().sum();
                            RowMatrix dd = du.array().colwise() / norms.array();
                            dd -= (d.array().colwise() * (proj.array() / norms.array().cube())).matrix();
                            const RowMatrix dx = dd.colwise() - dd.rowwise().mean();
                            accumulate_grad(xn, Eigen::Map<const Eigen::VectorXd>(dx.data(), dx.size()));
                        });
}

Tensor slice_columns(const Tensor& x, Eigen::Index count)
{
    require_rank(x, 2, "slice_columns", "input");
    const Eigen::Index c = x.dim(0), t = x.dim(1);
    if (count < 0 || count > t)
        shape_error("slice_columns", "cannot take " + std::to_string(count) + " of " + std::to_string(t) + " columns");
    if (count == t)
        return x;
    RowMatrix out = x.matrix().leftCols(count);
    const NodePtr xn = x.node();
    return Tensor::make({c, count}, Eigen::Map<const Eigen::VectorXd>(out.data(), out.size()), {x},
                        [=](const Tensor::Node& self) {
                            Eigen::VectorXd g = Eigen::VectorXd::Zero(c * t);
                            as_matrix(g, c, t).leftCols(count) = as_matrix(self.grad, c, count);
                            accumulate_grad(xn, g);
                        });
}

Tensor sum(const Tensor& x)
{
    const NodePtr xn = x.node();
    const Eigen::Index n = x.numel();
    return Tensor::make({1}, Eigen::VectorXd::Constant(1, x.value().sum()), {x}, [=](const Tensor::Node& self) {
        accumulate_grad(xn, Eigen::VectorXd::Constant(n, self.grad(0)));
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mse(const Tensor& pred, const Eigen::VectorXd& target)
{
    if (target.size() != pred.numel())
        shape_error("mse", "target has " + std::to_string(target.size()) + " values, prediction " +
                               shape_string(pred.shape()));
    const Eigen::VectorXd diff = pred.value() - target;
    const auto n = static_cast<double>(diff.size());
    const NodePtr pn = pred.node();
    return Tensor::make({1}, Eigen::VectorXd::Constant(1, diff.squaredNorm() / n), {pred},
                        [=](const Tensor::Node& self) { accumulate_grad(pn, diff * (2.0 * self.grad(0) / n)); });
}

Tensor bce_with_logits(const Tensor& logits, const Eigen::VectorXd& target)
{
    if (target.size() != logits.numel())
        shape_error("bce_with_logits", "target has " + std::to_string(target.size()) + " values, logits " +
                                           shape_string(logits.shape()));
    const Eigen::ArrayXd z = logits.value().array();
    const Eigen::ArrayXd y = target.array();
    const double loss = (z.max(0.0) - z * y + (-z.abs()).exp().log1p()).mean();
    const auto n = static_cast<double>(z.size());
    const NodePtr ln = logits.node();
    return Tensor::make({1}, Eigen::VectorXd::Constant(1, loss), {logits}, [=](const Tensor::Node& self) {
        const Eigen::ArrayXd s = z.unaryExpr([](double v) {
            if (v >= 0.0)
                return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        });
        accumulate_grad(ln, ((s - y) * (self.grad(0) / n)).matrix());
    });
}

} // namespace bicilab::nn
