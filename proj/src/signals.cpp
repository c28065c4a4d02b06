//
//  signals.cpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#include "bicilab/signals.hpp"
#include "bicilab/random.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bicilab {

namespace {

Eigen::Index sample_count(double seconds, double rate)
{
    if (!(seconds > 0.0) || !(rate > 0.0))
        throw std::invalid_argument("signal duration and rate must be positive");
    return static_cast<Eigen::Index>(std::llround(seconds * rate));
}

} // namespace

SampleBuffer synthetic_speech(std::uint64_t seed, double seconds, double rate)
{
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const Eigen::Index n = sample_count(seconds, rate);
    Rng rng(seed);
    const double f0 = rng.uniform(100.0, 220.0);
    const double glide = rng.uniform(-0.25, 0.25);
    const double syllable_rate = rng.uniform(3.0, 5.0);
    const double syllable_phase = rng.uniform(0.0, two_pi);
    const double formant1 = rng.uniform(400.0, 900.0);
    const double formant2 = rng.uniform(1100.0, 2400.0);

    const int harmonics = static_cast<int>(std::floor(0.45 * rate / f0));
    Eigen::VectorXd phase0 = rng.uniform_vector(harmonics, 0.0, two_pi);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    double phase = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate;
        const double f = f0 * (1.0 + glide * std::sin(two_pi * 0.7 * t));
        phase += two_pi * f / rate;
        double v = 0.0;
        for (int h = 1; h <= harmonics; ++h) {
            const double fh = h * f;
            if (fh >= 0.45 * rate)
                break;
            // Two resonances on a -6 dB/octave slope.
            const double r1 = 1.0 / (1.0 + std::pow((fh - formant1) / 150.0, 2));
            const double r2 = 0.5 / (1.0 + std::pow((fh - formant2) / 250.0, 2));
            v += (1.0 / h + r1 + r2) * std::sin(h * phase + phase0(h - 1));
        }
        const double env = 0.5 * (1.0 - std::cos(two_pi * syllable_rate * t + syllable_phase));
        x(i) = env * v;
    }
    const double peak = x.cwiseAbs().maxCoeff();
    if (peak > 0.0)
        x *= 0.5 / peak;
    return SampleBuffer::mono(x, rate);
}

SampleBuffer synthetic_noise(std::uint64_t seed, double seconds, double rate)
{
    const Eigen::Index n = sample_count(seconds, rate);
    Rng rng(seed);
    Eigen::VectorXd x(n);
    const double a = std::exp(-2.0 * std::numbers::pi * 1000.0 / rate);
    double y = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        y = a * y + (1.0 - a) * rng.normal();
        x(i) = y;
    }
    const double rms = std::sqrt(power(x));
    if (rms > 0.0)
        x *= 0.1 / rms;
    return SampleBuffer::mono(x, rate);
}

SampleBuffer tone(double freq_hz, double amplitude, double seconds, double rate)
{
    const Eigen::Index n = sample_count(seconds, rate);
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i)
        x(i) = amplitude * std::sin(2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / rate);
    return SampleBuffer::mono(x, rate);
}

} // namespace bicilab
