//
//  test_tensor.cpp
//  bicilab tests
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#include "oracles.hpp"

#include "bicilab/optim.hpp"
#include "bicilab/random.hpp"
#include "bicilab/tensor.hpp"

#include <doctest.h>

#include <filesystem>

using namespace bicilab;
using namespace bicilab::nn;

namespace {

Tensor random_param(Rng& rng, Shape shape, double sigma = 1.0)
{
    const Eigen::Index n = numel(shape);
    return Tensor::parameter(std::move(shape), rng.normal_vector(n, sigma));
}

// Kernel tensor [C_out x C_in/g x K] unpacked into the oracle's per-output layout.
std::vector<Eigen::MatrixXd> unpack_kernels(const Tensor& w)
{
    const Eigen::Index co = w.dim(0), ci = w.dim(1), k = w.dim(2);
    std::vector<Eigen::MatrixXd> out;
    for (Eigen::Index o = 0; o < co; ++o) {
        Eigen::MatrixXd m(ci, k);
        for (Eigen::Index i = 0; i < ci; ++i)
            for (Eigen::Index j = 0; j < k; ++j)
                m(i, j) = w.value()((o * ci + i) * k + j);
        out.push_back(m);
    }
    return out;
}

} // namespace

TEST_SUITE("tensor")
{
    TEST_CASE("conv1d identity kernel")
    {
        Rng rng(1);
        const Tensor x = Tensor::constant({3, 10}, rng.normal_vector(30));
        Eigen::VectorXd eye = Eigen::VectorXd::Zero(9);
        eye(0) = eye(4) = eye(8) = 1.0;
        const Tensor y = conv1d(x, Tensor::constant({3, 3, 1}, eye));
        CHECK(y.value() == x.value());
    }

    TEST_CASE("conv1d window sum")
    {
        const Tensor y = conv1d(Tensor::constant({1, 8}, Eigen::VectorXd::Ones(8)),
                                Tensor::constant({1, 1, 3}, Eigen::VectorXd::Ones(3)));
        CHECK(y.shape() == Shape{1, 6});
        CHECK(y.value() == Eigen::VectorXd::Constant(6, 3.0));
    }

    TEST_CASE("conv1d matches the direct loop")
    {
        Rng rng(2);
        struct Case {
            Eigen::Index cin, cout, k, t;
            Conv1dOptions opt;
        };
        const Case cases[] = {
            {2, 3, 3, 11, {}},
            {4, 6, 3, 20, {2, 1, 1, 2}},
            {4, 4, 3, 25, {1, 4, 4, 4}},
            {3, 2, 5, 31, {3, 2, 2, 1}},
        };
        for (const Case& c : cases) {
            const Tensor x = Tensor::constant({c.cin, c.t}, rng.normal_vector(c.cin * c.t));
            const Tensor w = Tensor::constant({c.cout, c.cin / c.opt.groups, c.k},
                                              rng.normal_vector(c.cout * c.cin / c.opt.groups * c.k));
            const Tensor b = Tensor::constant({c.cout}, rng.normal_vector(c.cout));
            const Tensor y = conv1d(x, w, b, c.opt);
            const Eigen::MatrixXd want = oracle::conv1d(x.to_matrix(), unpack_kernels(w), b.value(), c.opt.stride,
                                                        c.opt.dilation, c.opt.padding, c.opt.groups);
            REQUIRE(y.dim(1) == want.cols());
            CHECK((y.to_matrix() - want).cwiseAbs().maxCoeff() < 1e-12);
        }
    }

    TEST_CASE("transposed conv is the adjoint")
    {
        Rng rng(3);
        for (const Eigen::Index stride : {Eigen::Index{1}, Eigen::Index{2}, Eigen::Index{4}}) {
            const Eigen::Index cin = 3, cout = 5, k = 8, t = 40;
            const Tensor w = Tensor::constant({cout, cin, k}, rng.normal_vector(cout * cin * k));
            const Tensor x = Tensor::constant({cin, t}, rng.normal_vector(cin * t));
            const Conv1dOptions opt{stride, 1, 0, 1};
            const Tensor y = conv1d(x, w, {}, opt);
            const Tensor r = Tensor::constant(y.shape(), rng.normal_vector(y.numel()));
            // conv1d kernels [cout x cin x K] read as [C_in x C_out x K] for the transpose.
            const Tensor xt = conv1d_transposed(r, w, {}, stride);
            REQUIRE(xt.dim(1) >= t);
            const double lhs = y.value().dot(r.value());
            const double rhs = x.to_matrix().cwiseProduct(xt.to_matrix().leftCols(t)).sum();
            CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
        }
    }

    TEST_CASE("transposed conv shapes and identity")
    {
        const Tensor y = conv1d_transposed(Tensor::constant({1, 3}, Eigen::VectorXd::Ones(3)),
                                           Tensor::constant({1, 1, 2}, Eigen::VectorXd::Ones(2)), {}, 2);
        CHECK(y.shape() == Shape{1, 6});
        CHECK(y.value() == Eigen::VectorXd::Ones(6));

        Rng rng(4);
        const Tensor x = Tensor::constant({2, 7}, rng.normal_vector(14));
        Eigen::VectorXd eye = Eigen::VectorXd::Zero(4);
        eye(0) = eye(3) = 1.0;
        CHECK(conv1d_transposed(x, Tensor::constant({2, 2, 1}, eye)).value() == x.value());
    }

    TEST_CASE("activation definitions")
    {
        CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
        const Tensor a = Tensor::scalar(0.25);
        CHECK(prelu(Tensor::scalar(-2.0), a).item() == -0.5);
        CHECK(prelu(Tensor::scalar(3.0), a).item() == 3.0);
        CHECK(relu(Tensor::constant({2}, Eigen::Vector2d(-1.0, 2.0))).value() == Eigen::Vector2d(0.0, 2.0));
    }

    TEST_CASE("layer norm of a constant returns beta")
    {
        const Tensor x = Tensor::constant({3, 5}, Eigen::VectorXd::Constant(15, 7.5));
        const Tensor gamma = Tensor::constant({3}, Eigen::Vector3d(2.0, 3.0, 4.0));
        const Tensor beta = Tensor::constant({3}, Eigen::Vector3d(0.1, -0.2, 0.3));
        const Eigen::MatrixXd y = global_layer_norm(x, gamma, beta).to_matrix();
        for (Eigen::Index c = 0; c < 3; ++c)
            for (Eigen::Index t = 0; t < 5; ++t)
                CHECK(y(c, t) == beta.value()(c));
    }

    TEST_CASE("antirectifier splits lobes")
    {
        const Tensor x = Tensor::constant({1, 4}, Eigen::Vector4d(1.0, -1.0, 1.0, -1.0));
        const Eigen::MatrixXd y = antirectifier(x).to_matrix();
        REQUIRE(y.rows() == 2);
        CHECK(y(0, 0) == doctest::Approx(0.5));
        CHECK(y(0, 1) == 0.0);
        CHECK(y(1, 1) == doctest::Approx(0.5));
        CHECK(antirectifier(Tensor::zeros({3, 6})).value().isZero(0.0));
    }

    TEST_CASE("sum and product gradients")
    {
        Rng rng(5);
        Tensor x = random_param(rng, {3, 4});
        backward(sum(x));
        CHECK(x.grad() == Eigen::VectorXd::Ones(12));
        x.zero_grad();

        const Tensor y = Tensor::constant({3, 4}, rng.normal_vector(12));
        backward(sum(mul(x, y)));
        CHECK(x.grad() == y.value());
    }

    TEST_CASE("finite differences: elementwise and reductions")
    {
        Rng rng(6);
        Tensor a = random_param(rng, {3, 5});
        Tensor b = random_param(rng, {3, 5});
        Tensor row = random_param(rng, {5});
        Tensor slope = Tensor::parameter({1}, Eigen::VectorXd::Constant(1, 0.3));

        CHECK(oracle::gradient_error({a, b}, [&] { return add(a, b); }) < 1e-4);
        CHECK(oracle::gradient_error({a, row}, [&] { return add(a, row); }) < 1e-4);
        CHECK(oracle::gradient_error({a, b}, [&] { return sub(a, b); }) < 1e-4);
        CHECK(oracle::gradient_error({a, b}, [&] { return mul(a, b); }) < 1e-4);
        CHECK(oracle::gradient_error({a, row}, [&] { return mul(a, row); }) < 1e-4);
        CHECK(oracle::gradient_error({a}, [&] { return scale(a, -1.7); }) < 1e-4);
        CHECK(oracle::gradient_error({a}, [&] { return relu(a); }) < 1e-4);
        CHECK(oracle::gradient_error({a}, [&] { return sigmoid(a); }) < 1e-4);
        CHECK(oracle::gradient_error({a, slope}, [&] { return prelu(a, slope); }) < 1e-4);
        CHECK(oracle::gradient_error({a}, [&] { return slice_columns(a, 3); }) < 1e-4);
        CHECK(oracle::gradient_error({a}, [&] { return sum(a); }) < 1e-4);
        CHECK(oracle::gradient_error({a}, [&] { return mean(a); }) < 1e-4);
    }

    TEST_CASE("finite differences: normalisation")
    {
        Rng rng(7);
        Tensor x = random_param(rng, {4, 9});
        Tensor gamma = random_param(rng, {4});
        Tensor beta = random_param(rng, {4});
        CHECK(oracle::gradient_error({x, gamma, beta}, [&] { return global_layer_norm(x, gamma, beta); }) < 1e-4);
        CHECK(oracle::gradient_error({x}, [&] { return antirectifier(x); }) < 1e-4);
    }

    TEST_CASE("finite differences: losses")
    {
        Rng rng(8);
        Tensor p = Tensor::parameter({2, 6}, rng.uniform_vector(12, 0.1, 0.9));
        const Eigen::VectorXd target = rng.uniform_vector(12, 0.0, 1.0);
        Eigen::VectorXd mask(12);
        for (Eigen::Index i = 0; i < 12; ++i)
            mask(i) = i % 3 == 0 ? 1.0 : 0.0;
        CHECK(oracle::gradient_error({p}, [&] { return mse(p, target); }) < 1e-4);
        CHECK(oracle::gradient_error({p}, [&] { return bce_with_logits(p, mask); }) < 1e-4);

        // Definitions against plain loops.
        double m = 0.0, b = 0.0;
        for (Eigen::Index i = 0; i < 12; ++i) {
            const double z = p.value()(i);
            m += (z - target(i)) * (z - target(i));
            const double s = 1.0 / (1.0 + std::exp(-z));
            b -= mask(i) * std::log(s) + (1.0 - mask(i)) * std::log(1.0 - s);
        }
        CHECK(mse(p, target).item() == doctest::Approx(m / 12.0).epsilon(1e-12));
        CHECK(bce_with_logits(p, mask).item() == doctest::Approx(b / 12.0).epsilon(1e-12));
        // Saturated logits stay finite.
        CHECK(std::isfinite(bce_with_logits(Tensor::constant({2}, Eigen::Vector2d(-800.0, 800.0)),
                                            Eigen::Vector2d(1.0, 0.0))
                                .item()));
    }

    TEST_CASE("finite differences: convolutions")
    {
        Rng rng(9);
        Tensor x = random_param(rng, {4, 17});
        Tensor w = random_param(rng, {4, 2, 3});
        Tensor b = random_param(rng, {4});
        Tensor wd = random_param(rng, {4, 1, 3});
        Tensor wt = random_param(rng, {4, 2, 4});
        Tensor bt = random_param(rng, {2});
        CHECK(oracle::gradient_error({x, w, b}, [&] { return conv1d(x, w, b, {2, 1, 1, 2}); }) < 1e-4);
        CHECK(oracle::gradient_error({x, wd}, [&] { return conv1d(x, wd, {}, {1, 4, 4, 4}); }) < 1e-4);
        CHECK(oracle::gradient_error({x, wt, bt}, [&] { return conv1d_transposed(x, wt, bt, 2); }) < 1e-4);
    }

    TEST_CASE("finite differences: composed graph")
    {
        Rng rng(10);
        Tensor x = random_param(rng, {2, 24});
        Tensor w1 = random_param(rng, {6, 2, 4}, 0.5);
        Tensor g = random_param(rng, {6});
        Tensor beta = random_param(rng, {6});
        Tensor a = Tensor::parameter({1}, Eigen::VectorXd::Constant(1, 0.25));
        Tensor w2 = random_param(rng, {12, 2, 4}, 0.5);
        const auto build = [&] {
            Tensor h = conv1d(x, w1, {}, {2, 1, 0, 1});
            h = prelu(global_layer_norm(h, g, beta), a);
            h = antirectifier(mul(sigmoid(h), h));
            return conv1d_transposed(h, w2, {}, 2);
        };
        CHECK(oracle::gradient_error({x, w1, g, beta, a, w2}, build) < 1e-4);
    }

    TEST_CASE("shape errors are rejected")
    {
        const Tensor x = Tensor::zeros({2, 5});
        CHECK_THROWS_AS(conv1d(x, Tensor::zeros({3, 3, 2})), std::invalid_argument);
        CHECK_THROWS_AS(add(x, Tensor::zeros({4})), std::invalid_argument);
        CHECK_THROWS_AS(backward(x), std::invalid_argument);
    }

    TEST_CASE("adam")
    {
        std::vector<Tensor> params{Tensor::parameter({1}, Eigen::VectorXd::Constant(1, 2.0))};
        AdamState state;
        state.lr = 0.1;
        adam_step(params, std::vector<Eigen::VectorXd>{Eigen::VectorXd::Zero(1)}, state);
        CHECK(params[0].value()(0) == 2.0);
        CHECK(state.step_count == 1);

        AdamState fresh;
        fresh.lr = 0.1;
        adam_step(params, std::vector<Eigen::VectorXd>{Eigen::VectorXd::Ones(1)}, fresh);
        CHECK(params[0].value()(0) == doctest::Approx(1.9).epsilon(1e-6));

        // Two identical runs give identical trajectories.
        const auto run = [] {
            Rng rng(11);
            std::vector<Tensor> ps{Tensor::parameter({5}, rng.normal_vector(5))};
            AdamState s;
            for (int i = 0; i < 20; ++i) {
                ps[0].zero_grad();
                backward(sum(mul(ps[0], ps[0])));
                adam_step(ps, s);
            }
            return Eigen::VectorXd(ps[0].value());
        };
        CHECK(run() == run());
    }

    TEST_CASE("dwt round trip")
    {
        const auto path = std::filesystem::temp_directory_path() / "bicilab_test.dwt";
        Rng rng(12);
        const std::vector<NamedArray> arrays{
            {"enc/w", {4, 1, 8}, rng.normal_vector(32)},
            {"scalar", {1}, Eigen::VectorXd::Constant(1, -0.0)},
            {"tiny", {2}, Eigen::Vector2d(5e-324, 1.7976931348623157e308)},
        };
        write_dwt(path, arrays);
        const auto back = read_dwt(path);
        REQUIRE(back.size() == arrays.size());
        for (std::size_t i = 0; i < arrays.size(); ++i) {
            CHECK(back[i].name == arrays[i].name);
            CHECK(back[i].shape == arrays[i].shape);
            CHECK(back[i].values == arrays[i].values);
        }
        CHECK(std::signbit(back[1].values(0)));
        std::filesystem::remove(path);
        CHECK_THROWS(read_dwt(path));
    }
}
