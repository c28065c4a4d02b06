//
//  dsp.cpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#include "bicilab/dsp.hpp"
#include "bicilab/log.hpp"

#include <algorithm>
#include <cmath>

namespace bicilab {

SampleBuffer SampleBuffer::stereo(const Eigen::VectorXd& left, const Eigen::VectorXd& right, double rate)
{
    if (left.size() != right.size())
        throw std::invalid_argument("SampleBuffer::stereo: channel lengths differ (" + std::to_string(left.size()) +
                                    " vs " + std::to_string(right.size()) + ")");
    Eigen::MatrixXd s(left.size(), 2);
    s.col(0) = left;
    s.col(1) = right;
    return {std::move(s), rate};
}

void SampleBuffer::validate() const
{
    if (!(rate > 0.0) || !std::isfinite(rate))
        throw std::invalid_argument("SampleBuffer: rate must be positive, got " + std::to_string(rate));
    if (channels() != 1 && channels() != 2)
        throw std::invalid_argument("SampleBuffer: expected 1 or 2 channels, got " + std::to_string(channels()));
    for (Eigen::Index c = 0; c < channels(); ++c)
        for (Eigen::Index i = 0; i < frames(); ++i)
            if (!std::isfinite(samples(i, c)))
                throw std::invalid_argument("SampleBuffer: non-finite sample at index " + std::to_string(i) +
                                            " channel " + std::to_string(c));
}

Eigen::VectorXd make_window(Window w, Eigen::Index n)
{
    if (w == Window::rect)
        return Eigen::VectorXd::Ones(n);
    Eigen::VectorXd h(n);
    for (Eigen::Index i = 0; i < n; ++i)
        h(i) = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    return h;
}

namespace {

double bessel_i0(double x)
{
    double sum = 1.0;
    double term = 1.0;
    const double q = x * x / 4.0;
    for (int k = 1; k < 64; ++k) {
        term *= q / (static_cast<double>(k) * static_cast<double>(k));
        sum += term;
        if (term < sum * 1e-17)
            break;
    }
    return sum;
}

// Kaiser-windowed sinc low-pass, tabulated for linear interpolation.
class ResamplingKernel {
public:
    ResamplingKernel(double cutoff, double zero_crossings, double beta)
        : cutoff_(cutoff), half_width_(zero_crossings / cutoff)
    {
        const auto n = static_cast<Eigen::Index>(std::ceil(half_width_ * kDensity)) + 2;
        table_.resize(n);
        const double i0b = bessel_i0(beta);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double x = static_cast<double>(i) / kDensity;
            const double r = x / half_width_;
            if (r >= 1.0) {
                table_(i) = 0.0;
                continue;
            }
            const double arg = std::numbers::pi * cutoff_ * x;
            const double sinc = x == 0.0 ? 1.0 : std::sin(arg) / arg;
            table_(i) = cutoff_ * sinc * bessel_i0(beta * std::sqrt(1.0 - r * r)) / i0b;
        }
    }

    double half_width() const { return half_width_; }

    double operator()(double x) const
    {
        const double pos = std::abs(x) * kDensity;
        const auto i = static_cast<Eigen::Index>(pos);
        if (i + 1 >= table_.size())
            return 0.0;
        const double frac = pos - static_cast<double>(i);
        return table_(i) + frac * (table_(i + 1) - table_(i));
    }

private:
    static constexpr double kDensity = 1024.0;
    double cutoff_;
    double half_width_;
    Eigen::VectorXd table_;
};

} // namespace

SampleBuffer resample(const SampleBuffer& buf, double target_rate)
{
    buf.validate();
    if (!(target_rate > 0.0) || !std::isfinite(target_rate))
        throw std::invalid_argument("resample: target rate must be positive, got " + std::to_string(target_rate));
    if (target_rate == buf.rate)
        return buf;

    const double ratio = target_rate / buf.rate;
    const auto out_len = static_cast<Eigen::Index>(std::llround(static_cast<double>(buf.frames()) * ratio));
    // Pass band ends at 90% of the lower Nyquist; Kaiser beta 8.6 gives ~86 dB stop band.
    const ResamplingKernel kernel(0.9 * std::min(1.0, ratio), 32.0, 8.6);
    const double hw = kernel.half_width();
    const Eigen::Index in_len = buf.frames();

    Eigen::MatrixXd out(out_len, buf.channels());
    for (Eigen::Index n = 0; n < out_len; ++n) {
        const double t = static_cast<double>(n) / ratio;
        const auto lo = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::ceil(t - hw)));
        const auto hi = std::min<Eigen::Index>(in_len - 1, static_cast<Eigen::Index>(std::floor(t + hw)));
        for (Eigen::Index c = 0; c < buf.channels(); ++c) {
            double acc = 0.0;
            for (Eigen::Index k = lo; k <= hi; ++k)
                acc += buf.samples(k, c) * kernel(t - static_cast<double>(k));
            out(n, c) = acc;
        }
    }
    return {std::move(out), target_rate};
}

Eigen::Index frame_count(Eigen::Index len, Eigen::Index frame_len, Eigen::Index hop)
{
    if (len < frame_len)
        return 0;
    return (len - frame_len) / hop + 1;
}

Eigen::MatrixXd frame_signal(const SampleBuffer& buf, const FrameSpec& spec)
{
    if (buf.channels() != 1)
        throw std::invalid_argument("frame_signal: expected a mono buffer, got " + std::to_string(buf.channels()) +
                                    " channels");
    if (spec.frame_len <= 0 || spec.hop <= 0 || spec.hop > spec.frame_len)
        throw std::invalid_argument("frame_signal: require 0 < hop <= frame_len");

    const Eigen::Index count = frame_count(buf.frames(), spec.frame_len, spec.hop);
    if (count == 0) {
        log().warn("frame_signal: buffer of {} samples is shorter than one {}-sample frame", buf.frames(),
                   spec.frame_len);
        return {};
    }
    const Eigen::VectorXd w = make_window(spec.window, spec.frame_len);
    Eigen::MatrixXd frames(spec.frame_len, count);
    for (Eigen::Index t = 0; t < count; ++t)
        frames.col(t) = buf.samples.col(0).segment(t * spec.hop, spec.frame_len).cwiseProduct(w);
    return frames;
}

namespace {

Eigen::VectorXd convolve_direct(const Eigen::VectorXd& x, const Eigen::VectorXd& h)
{
    const Eigen::Index n = x.size();
    const Eigen::Index k = h.size();
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double acc = 0.0;
        const Eigen::Index taps = std::min(k, i + 1);
        for (Eigen::Index j = 0; j < taps; ++j)
            acc += h(j) * x(i - j);
        y(i) = acc;
    }
    return y;
}

Eigen::VectorXd convolve_overlap_add(const Eigen::VectorXd& x, const Eigen::VectorXd& h)
{
    const Eigen::Index n = x.size();
    const Eigen::Index k = h.size();
    const Eigen::Index block = std::max<Eigen::Index>(k, 1024);
    std::size_t nfft = 1;
    while (nfft < static_cast<std::size_t>(block + k - 1))
        nfft <<= 1;

    std::vector<std::complex<double>> kernel_spec(nfft);
    for (Eigen::Index j = 0; j < k; ++j)
        kernel_spec[static_cast<std::size_t>(j)] = h(j);
    fft_inplace(kernel_spec);

    Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
    std::vector<std::complex<double>> seg(nfft);
    for (Eigen::Index start = 0; start < n; start += block) {
        const Eigen::Index len = std::min(block, n - start);
        std::fill(seg.begin(), seg.end(), std::complex<double>{});
        for (Eigen::Index j = 0; j < len; ++j)
            seg[static_cast<std::size_t>(j)] = x(start + j);
        fft_inplace(seg);
        for (std::size_t j = 0; j < nfft; ++j)
            seg[j] *= kernel_spec[j];
        fft_inplace(seg, true);
        const Eigen::Index stop = std::min<Eigen::Index>(n, start + len + k - 1);
        for (Eigen::Index j = start; j < stop; ++j)
            y(j) += seg[static_cast<std::size_t>(j - start)].real();
    }
    return y;
}

} // namespace

Eigen::VectorXd convolve_same(const Eigen::VectorXd& signal, const Eigen::VectorXd& kernel)
{
    if (kernel.size() == 0)
        throw std::invalid_argument("convolve: kernel is empty");
    if (!signal.allFinite() || !kernel.allFinite())
        throw std::invalid_argument("convolve: non-finite signal or kernel values");
    if (kernel.size() < kDirectConvolutionLimit)
        return convolve_direct(signal, kernel);
    return convolve_overlap_add(signal, kernel);
}

SampleBuffer convolve(const SampleBuffer& signal, const Eigen::VectorXd& kernel)
{
    signal.validate();
    Eigen::MatrixXd out(signal.frames(), signal.channels());
    for (Eigen::Index c = 0; c < signal.channels(); ++c)
        out.col(c) = convolve_same(signal.samples.col(c), kernel);
    return {std::move(out), signal.rate};
}

} // namespace bicilab
