//
//  dsp.hpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace bicilab {

/// Sampled audio. Rows are sample instants, columns are channels (1 or 2).
struct SampleBuffer {
    Eigen::MatrixXd samples;
    double rate = 16000.0;

    SampleBuffer() = default;
    SampleBuffer(Eigen::MatrixXd s, double r) : samples(std::move(s)), rate(r) {}

    static SampleBuffer mono(const Eigen::VectorXd& x, double rate) { return {Eigen::MatrixXd(x), rate}; }
    static SampleBuffer stereo(const Eigen::VectorXd& left, const Eigen::VectorXd& right, double rate);

    Eigen::Index frames() const { return samples.rows(); }
    Eigen::Index channels() const { return samples.cols(); }
    double duration() const { return static_cast<double>(frames()) / rate; }

    Eigen::VectorXd channel(Eigen::Index c) const { return samples.col(c); }

    /// Throws std::invalid_argument unless rate > 0, 1 or 2 channels and all samples finite.
    void validate() const;
};

enum class Window { hann, rect };

struct FrameSpec {
    Eigen::Index frame_len = 128;
    Eigen::Index hop = 16;
    Window window = Window::hann;
};

/// Window coefficients of length n. Hann is the periodic form, which has
/// exactly three nonzero DFT bins and sums to n/2.
Eigen::VectorXd make_window(Window w, Eigen::Index n);

SampleBuffer resample(const SampleBuffer& buf, double target_rate);

/// Frames of a mono buffer, one frame per column (frame_len x count).
/// A buffer shorter than one frame yields an empty matrix and a logged warning.
Eigen::MatrixXd frame_signal(const SampleBuffer& buf, const FrameSpec& spec);

Eigen::Index frame_count(Eigen::Index len, Eigen::Index frame_len, Eigen::Index hop);

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// In-place iterative radix-2 FFT. `inverse` applies the conjugate kernel
/// and the 1/n scale.
template <typename Scalar>
void fft_inplace(std::vector<std::complex<Scalar>>& a, bool inverse = false)
{
    const std::size_t n = a.size();
    if (!is_power_of_two(n))
        throw std::invalid_argument("fft: length " + std::to_string(n) + " is not a power of two");

    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1)
            j ^= bit;
        j ^= bit;
        if (i < j)
            std::swap(a[i], a[j]);
    }

    const Scalar sign = inverse ? Scalar(1) : Scalar(-1);
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        for (std::size_t k = 0; k < half; ++k) {
            const Scalar ang = sign * Scalar(2) * std::numbers::pi_v<Scalar> * Scalar(k) / Scalar(len);
            const std::complex<Scalar> w(std::cos(ang), std::sin(ang));
            for (std::size_t i = 0; i < n; i += len) {
                const std::complex<Scalar> u = a[i + k];
                const std::complex<Scalar> v = a[i + k + half] * w;
                a[i + k] = u + v;
                a[i + k + half] = u - v;
            }
        }
    }
    if (inverse)
        for (auto& z : a)
            z /= Scalar(n);
}

/// |DFT_b| for b = 0 .. n/2 of a real frame whose length is a power of two.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> fft_magnitude(const Eigen::MatrixBase<Derived>& frame)
{
    using Scalar = typename Derived::Scalar;
    const auto n = static_cast<std::size_t>(frame.size());
    if (!is_power_of_two(n))
        throw std::invalid_argument("fft_magnitude: frame length " + std::to_string(n) + " is not a power of two");

    std::vector<std::complex<Scalar>> buf(n);
    for (std::size_t i = 0; i < n; ++i)
        buf[i] = {frame(static_cast<Eigen::Index>(i)), Scalar(0)};
    fft_inplace(buf);

    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mag(static_cast<Eigen::Index>(n / 2 + 1));
    for (Eigen::Index b = 0; b < mag.size(); ++b)
        mag(b) = std::abs(buf[static_cast<std::size_t>(b)]);
    return mag;
}

/// Linear convolution truncated to the signal length, kernel origin at index 0.
/// Direct form below `kDirectConvolutionLimit` taps, FFT overlap-add otherwise.
Eigen::VectorXd convolve_same(const Eigen::VectorXd& signal, const Eigen::VectorXd& kernel);

/// Applies convolve_same to every channel of `signal`.
SampleBuffer convolve(const SampleBuffer& signal, const Eigen::VectorXd& kernel);

inline constexpr Eigen::Index kDirectConvolutionLimit = 256;

inline double power(const Eigen::VectorXd& x) { return x.size() ? x.squaredNorm() / static_cast<double>(x.size()) : 0.0; }
inline double db_to_gain(double db) { return std::pow(10.0, db / 20.0); }

} // namespace bicilab
