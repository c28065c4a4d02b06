//
//  test_deep_ace.cpp
//  bicilab tests
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#include "oracles.hpp"

#include "bicilab/deep_ace.hpp"
#include "bicilab/error.hpp"
#include "bicilab/random.hpp"
#include "bicilab/signals.hpp"

#include <doctest.h>

#include <filesystem>

using namespace bicilab;
using nn::Tensor;

namespace {

void zero_biases(ModelParams& p)
{
    for (std::size_t i = 0; i < p.names().size(); ++i)
        if (p.names()[i].ends_with(".bias") || p.names()[i].ends_with(".beta"))
            p.tensors()[i].mutable_value().setZero();
}

Eigen::MatrixXd uniform_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo, double hi)
{
    return rng.uniform_vector(rows * cols, lo, hi).reshaped(rows, cols);
}

LossTargets random_targets(Rng& rng, Eigen::Index m, Eigen::Index t)
{
    LossTargets tg;
    tg.p_left = uniform_matrix(rng, m, t, 0.0, 1.0);
    tg.p_right = uniform_matrix(rng, m, t, 0.0, 1.0);
    tg.mask_left = (tg.p_left.array() > 0.5).cast<double>().matrix();
    tg.mask_right = (tg.p_right.array() > 0.4).cast<double>().matrix();
    return tg;
}

} // namespace

TEST_SUITE("deep_ace")
{
    TEST_CASE("configuration")
    {
        const ModelConfig c;
        CHECK(c.latent_frames(64000) == 3999);
        CHECK(c.frame_rate(16000.0) == 1000.0);
        CHECK(c.receptive_field() == 1531);
        ModelConfig bad;
        bad.kernel_size = 4;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = ModelConfig::reduced();
        bad.ded_channels[2] = 3;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        CHECK(variant_from_name(variant_name(Variant::bilateral)) == Variant::bilateral);
        CHECK_THROWS(variant_from_name("stereo"));
    }

    TEST_CASE("stage shapes at the default configuration")
    {
        const ModelParams p(Variant::monaural, ModelConfig::standard(), 1);
        nn::NoGradGuard guard;
        Rng rng(2);
        const Tensor x = Tensor::constant({1, 1600}, rng.normal_vector(1600, 0.1));
        const Tensor latent = encode(x, p, "mono");
        CHECK(latent.shape() == nn::Shape{64, 99});
        CHECK(deep_envelope_detector(latent, p, "mono").shape() == nn::Shape{22, 99});
        const Tensor sep = separate(latent, p, "mono");
        CHECK(sep.shape() == nn::Shape{32, 99});
        const MaskerOutput m = mask_and_decode(sep, deep_envelope_detector(latent, p, "mono"), p, "mono");
        CHECK(m.p.shape() == nn::Shape{22, 99});
        CHECK(m.logits.shape() == nn::Shape{22, 99});
        CHECK_THROWS_AS(encode(Tensor::constant({1, 16}, Eigen::VectorXd::Zero(16)), p, "mono"),
                        std::invalid_argument);
        CHECK_THROWS_AS(encode(x, p, "left"), std::invalid_argument);
    }

    TEST_CASE("four seconds at the default configuration give 22 x 3999 in (0,1)")
    {
        const ModelParams p(Variant::fused, ModelConfig::standard(), 3);
        const SampleBuffer s = synthetic_speech(4, 4.0);
        REQUIRE(s.frames() == 64000);
        const auto [l, r] = denoise(p, s.samples.col(0), s.samples.col(0));
        CHECK(l.rows() == 22);
        CHECK(l.cols() == 3999);
        CHECK(r.cols() == 3999);
        CHECK((l.array() > 0.0).all());
        CHECK((l.array() < 1.0).all());
    }

    TEST_CASE("zero input with zero biases gives zero envelopes and separator output")
    {
        ModelParams p(Variant::monaural, ModelConfig::reduced(), 5);
        zero_biases(p);
        nn::NoGradGuard guard;
        const Tensor latent = encode(Tensor::zeros({1, 64}), p, "mono");
        CHECK(latent.value().isZero(0.0));
        CHECK(deep_envelope_detector(latent, p, "mono").value().isZero(0.0));
        CHECK(separate(latent, p, "mono").value().isZero(0.0));
    }

    TEST_CASE("fusion")
    {
        Rng rng(6);
        const Tensor b = Tensor::constant({2, 3}, rng.normal_vector(6));
        const Tensor a = Tensor::constant({2, 3}, rng.normal_vector(6));
        CHECK(fuse(Tensor::constant({2, 3}, Eigen::VectorXd::Ones(6)), b).value() == b.value());
        CHECK(fuse(a, b).value() == fuse(b, a).value());
        CHECK(fuse(Tensor::constant({2}, Eigen::Vector2d(1, 2)), Tensor::constant({2}, Eigen::Vector2d(3, 4))).value() ==
              Eigen::Vector2d(3, 8));
        const Tensor binary = Tensor::constant({4}, Eigen::Vector4d(0, 1, 1, 0));
        CHECK(fuse(binary, binary).value() == binary.value());
        CHECK(fuse(a, a).value() != a.value());
        CHECK_THROWS_AS(fuse(a, Tensor::zeros({3, 2})), std::invalid_argument);
    }

    TEST_CASE("closed mask leaves only the output bias")
    {
        ModelParams p(Variant::monaural, ModelConfig::reduced(), 7);
        Tensor w = p.at("mono.masker.weight");
        Tensor b = p.at("mono.masker.bias");
        Tensor db = p.at("mono.decoder.bias");
        w.mutable_value().setZero();
        b.mutable_value().setConstant(-40.0);
        db.mutable_value().setZero();
        Rng rng(8);
        nn::NoGradGuard guard;
        const Tensor sep = Tensor::constant({8, 20}, rng.normal_vector(160));
        const Tensor env = Tensor::constant({4, 20}, rng.uniform_vector(80, 0.0, 1.0));
        const MaskerOutput out = mask_and_decode(sep, env, p, "mono");
        CHECK(out.p.shape() == nn::Shape{4, 20});
        CHECK((out.p.value().array() - 0.5).abs().maxCoeff() < 1e-15);
        db.mutable_value().setConstant(-3.0);
        const double want = 1.0 / (1.0 + std::exp(3.0));
        CHECK((mask_and_decode(sep, env, p, "mono").p.value().array() - want).abs().maxCoeff() < 1e-12);
    }

    TEST_CASE("bilateral sides are independent")
    {
        const ModelParams p(Variant::bilateral, ModelConfig::reduced(), 9);
        Rng rng(10);
        const Eigen::VectorXd l = rng.normal_vector(400, 0.1), r = rng.normal_vector(400, 0.1);
        Eigen::VectorXd r2 = r;
        r2.segment(100, 50) += rng.normal_vector(50, 0.5);
        const auto a = denoise(p, l, r);
        const auto b = denoise(p, l, r2);
        CHECK(a.first == b.first);
        CHECK(a.second != b.second);
    }

    TEST_CASE("fused left output depends on the right input")
    {
        const ModelParams p(Variant::fused, ModelConfig::reduced(), 11);
        Rng rng(12);
        const Eigen::VectorXd l = rng.normal_vector(400, 0.1), r = rng.normal_vector(400, 0.1);
        Eigen::VectorXd r2 = r;
        r2.segment(100, 50) += rng.normal_vector(50, 0.5);
        CHECK(denoise(p, l, r).first != denoise(p, l, r2).first);
    }

    TEST_CASE("mirrored fused model on identical inputs is symmetric")
    {
        ModelParams p(Variant::fused, ModelConfig::reduced(), 13);
        Rng rng(14);
        const Eigen::VectorXd x = rng.normal_vector(400, 0.1);
        CHECK(denoise(p, x, x).first != denoise(p, x, x).second);
        mirror_left_to_right(p);
        const auto [l, r] = denoise(p, x, x);
        CHECK(l == r);
        ModelParams mono(Variant::monaural, ModelConfig::reduced(), 1);
        CHECK_THROWS_AS(mirror_left_to_right(mono), std::invalid_argument);
    }

    TEST_CASE("loss definitions")
    {
        Rng rng(15);
        const LossTargets tg = random_targets(rng, 4, 12);
        const auto output = [](const Eigen::MatrixXd& p, const Eigen::MatrixXd& logits) {
            return MaskerOutput{Tensor::from_matrix(p), Tensor::from_matrix(logits)};
        };

        // Perfect prediction with saturated logits.
        ForwardResult perfect{output(tg.p_left, (tg.mask_left.array() * 80.0 - 40.0).matrix()),
                              output(tg.p_right, (tg.mask_right.array() * 80.0 - 40.0).matrix())};
        LossBreakdown b = compute_loss(perfect, tg).breakdown;
        CHECK(b.mse_left == 0.0);
        CHECK(b.mse_right == 0.0);
        CHECK(b.bce_left < 1e-15);
        CHECK(b.bce_right < 1e-15);

        ForwardResult offset{output((tg.p_left.array() + 0.1).matrix(), Eigen::MatrixXd::Zero(4, 12)),
                             output((tg.p_right.array() + 0.1).matrix(), Eigen::MatrixXd::Zero(4, 12))};
        b = compute_loss(offset, tg).breakdown;
        CHECK(b.mse_left == doctest::Approx(0.01).epsilon(1e-12));
        CHECK(b.mse_right == doctest::Approx(0.01).epsilon(1e-12));
        CHECK(b.bce_left == doctest::Approx(std::log(2.0)).epsilon(1e-12));

        // Random case against two loops; the prediction has one extra frame.
        const Eigen::MatrixXd pl = uniform_matrix(rng, 4, 13, 0.0, 1.0);
        const Eigen::MatrixXd pr = uniform_matrix(rng, 4, 13, 0.0, 1.0);
        const Eigen::MatrixXd gl = uniform_matrix(rng, 4, 13, -3.0, 3.0);
        const Eigen::MatrixXd gr = uniform_matrix(rng, 4, 13, -3.0, 3.0);
        const ForwardResult rnd{output(pl, gl), output(pr, gr)};
        const double alpha = 0.7;
        b = compute_loss(rnd, tg, alpha).breakdown;
        double want = 0.0;
        for (int side = 0; side < 2; ++side) {
            const Eigen::MatrixXd& p = side ? pr : pl;
            const Eigen::MatrixXd& g = side ? gr : gl;
            const Eigen::MatrixXd& c = side ? tg.p_right : tg.p_left;
            const Eigen::MatrixXd& m = side ? tg.mask_right : tg.mask_left;
            double mse = 0.0, bce = 0.0;
            for (Eigen::Index k = 0; k < 4; ++k)
                for (Eigen::Index t = 0; t < 12; ++t) {
                    mse += (p(k, t) - c(k, t)) * (p(k, t) - c(k, t));
                    const double s = 1.0 / (1.0 + std::exp(-g(k, t)));
                    bce -= m(k, t) * std::log(s) + (1.0 - m(k, t)) * std::log(1.0 - s);
                }
            want += mse / 48.0 + alpha * bce / 48.0;
        }
        CHECK(std::abs(b.total - want) < 1e-12);

        LossTargets wrong = tg;
        wrong.p_left = Eigen::MatrixXd::Zero(3, 12);
        CHECK_THROWS_AS(compute_loss(rnd, wrong), std::invalid_argument);
    }

    TEST_CASE("end-to-end gradient of the reduced fused model")
    {
        ModelParams p(Variant::fused, ModelConfig::reduced(), 16);
        Rng rng(17);
        const Eigen::VectorXd l = rng.normal_vector(64, 0.3), r = rng.normal_vector(64, 0.3);
        const Eigen::Index frames = ModelConfig::reduced().latent_frames(64);
        const LossTargets tg = random_targets(rng, 4, frames);
        const auto loss = [&] { return compute_loss(forward(p, l, r), tg).total; };

        p.zero_grad();
        nn::backward(loss());
        double worst = 0.0;
        for (auto& t : p.tensors()) {
            const Eigen::VectorXd analytic = t.grad();
            worst = std::max(worst, oracle::kink_tolerant_error(t, analytic, [&] {
                nn::NoGradGuard guard;
                return loss().item();
            }));
        }
        CHECK(worst < 1e-3);
    }

    TEST_CASE("plateau schedule on scripted traces")
    {
        PlateauSchedule s(1e-3);
        for (int epoch = 1; epoch <= 4; ++epoch) {
            const auto ev = s.observe(5.0);
            CHECK(ev.improved == (epoch == 1));
            CHECK(ev.lr_reduced == (epoch == 4));
            CHECK_FALSE(ev.stop);
        }
        CHECK(s.lr() == 5e-4);

        PlateauSchedule flat(1e-3);
        flat.observe(1.0);
        bool stopped = false;
        int epoch = 1;
        while (!stopped) {
            stopped = flat.observe(1.0).stop;
            ++epoch;
        }
        CHECK(epoch == 6);
        CHECK(flat.best_epoch() == 1);
    }

    TEST_CASE("model save and load")
    {
        const auto dir = std::filesystem::temp_directory_path() / "bicilab_test_model";
        std::filesystem::create_directories(dir);
        const ModelParams p(Variant::bilateral, ModelConfig::reduced(), 18);
        save_model(dir / "m.dwt", p);
        const ModelParams q = load_model(dir / "m.dwt");
        CHECK(q.variant() == Variant::bilateral);
        CHECK(q.config().m_channels == 4);
        REQUIRE(q.names() == p.names());
        for (std::size_t i = 0; i < p.names().size(); ++i)
            CHECK(q.tensors()[i].value() == p.tensors()[i].value());

        ModelParams other(Variant::fused, ModelConfig::standard(), 1);
        CHECK_THROWS_AS(other.load_arrays(p.to_arrays()), DataError);
        std::filesystem::remove_all(dir);
    }

    TEST_CASE("checkpoint round trip")
    {
        const auto dir = std::filesystem::temp_directory_path() / "bicilab_test_ckpt";
        std::filesystem::create_directories(dir);
        TrainingState st;
        st.params = ModelParams(Variant::fused, ModelConfig::reduced(), 19);
        st.best_params = ModelParams(Variant::fused, ModelConfig::reduced(), 20);
        st.schedule = PlateauSchedule(1e-3);
        st.schedule.observe(2.0);
        st.schedule.observe(2.5);
        Rng rng(21);
        for (const auto& t : st.params.tensors()) {
            st.adam.first_moment.push_back(rng.normal_vector(t.numel()));
            st.adam.second_moment.push_back(rng.uniform_vector(t.numel(), 0.0, 1.0));
        }
        st.adam.step_count = 7;
        st.adam.lr = 1e-3 / 3.0;
        st.history = {{1, 2.5, 2.0, 1e-3, true, false}, {2, 2.25, 2.5, 1e-3, false, false}};
        st.steps = 7;
        save_checkpoint(dir, st);

        const TrainingState back = load_checkpoint(dir);
        CHECK(back.steps == 7);
        CHECK(back.adam.step_count == 7);
        CHECK(back.adam.lr == st.adam.lr);
        CHECK(back.schedule.epochs_seen() == 2);
        CHECK(back.schedule.best() == 2.0);
        CHECK(back.schedule.lr() == 1e-3);
        REQUIRE(back.history.size() == 2);
        CHECK(back.history[1].train_loss == 2.25);
        CHECK_FALSE(back.history[1].improved);
        for (std::size_t i = 0; i < st.params.tensors().size(); ++i) {
            CHECK(back.params.tensors()[i].value() == st.params.tensors()[i].value());
            CHECK(back.best_params.tensors()[i].value() == st.best_params.tensors()[i].value());
            CHECK(back.adam.first_moment[i] == st.adam.first_moment[i]);
            CHECK(back.adam.second_moment[i] == st.adam.second_moment[i]);
        }
        std::filesystem::remove_all(dir);
        CHECK_THROWS(load_checkpoint(dir));
    }

    TEST_CASE("fit rejects empty sets")
    {
        CHECK_THROWS_AS(fit(Variant::fused, ModelConfig::reduced(), {}, {}, {}, 1), std::invalid_argument);
    }
}
