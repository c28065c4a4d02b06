//
//  scene.cpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#include "bicilab/scene.hpp"
#include "bicilab/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bicilab {

namespace {

constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

void check_azimuth(double azimuth_deg, const char* what)
{
    if (!(azimuth_deg >= -90.0 && azimuth_deg <= 90.0))
        throw std::invalid_argument(std::string(what) + ": azimuth " + std::to_string(azimuth_deg) +
                                    " deg outside [-90, 90]");
}

// Half-width (in taps) of the windowed-sinc fractional delay.
constexpr int kDelayHalfWidth = 16;

Eigen::VectorXd fractional_delay(const Eigen::VectorXd& x, double delay)
{
    const Eigen::Index n = x.size();
    const auto whole = static_cast<Eigen::Index>(std::floor(delay));
    const double frac = delay - static_cast<double>(whole);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n);

    if (frac == 0.0) {
        if (whole < n)
            y.tail(n - whole) = x.head(n - whole);
        return y;
    }

    Eigen::VectorXd taps(2 * kDelayHalfWidth);
    for (int j = -kDelayHalfWidth + 1; j <= kDelayHalfWidth; ++j) {
        const double u = static_cast<double>(j) - frac;
        const double sinc = std::sin(std::numbers::pi * u) / (std::numbers::pi * u);
        const double win = 0.5 + 0.5 * std::cos(std::numbers::pi * u / kDelayHalfWidth);
        taps(j + kDelayHalfWidth - 1) = sinc * win;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = -kDelayHalfWidth + 1; j <= kDelayHalfWidth; ++j) {
            const Eigen::Index m = i - whole - j;
            if (m >= 0 && m < n)
                acc += x(m) * taps(j + kDelayHalfWidth - 1);
        }
        y(i) = acc;
    }
    return y;
}

Eigen::VectorXd padded(const SampleBuffer& b, Eigen::Index len)
{
    Eigen::VectorXd v = Eigen::VectorXd::Zero(len);
    v.head(b.frames()) = b.samples.col(0);
    return v;
}

} // namespace

double woodworth_itd(double azimuth_deg)
{
    const double theta = deg_to_rad(std::abs(azimuth_deg));
    return kHeadRadius / kSpeedOfSound * (theta + std::sin(theta));
}

double parametric_ild_db(double azimuth_deg) { return 6.0 * std::sin(deg_to_rad(std::abs(azimuth_deg))); }

EarPair render_parametric(const SampleBuffer& src, double azimuth_deg)
{
    src.validate();
    check_azimuth(azimuth_deg, "render_parametric");
    if (src.channels() != 1)
        throw std::invalid_argument("render_parametric: expected a mono source");

    if (azimuth_deg == 0.0)
        return {src, src};

    const Eigen::VectorXd near = src.samples.col(0);
    const Eigen::VectorXd far = fractional_delay(near, woodworth_itd(azimuth_deg) * src.rate) *
                                db_to_gain(-parametric_ild_db(azimuth_deg));
    if (azimuth_deg > 0.0)
        return {SampleBuffer::mono(far, src.rate), SampleBuffer::mono(near, src.rate)};
    return {SampleBuffer::mono(near, src.rate), SampleBuffer::mono(far, src.rate)};
}

EarPair render_brir(const SampleBuffer& src, const SampleBuffer& brir)
{
    src.validate();
    brir.validate();
    if (src.channels() != 1)
        throw std::invalid_argument("render_brir: expected a mono source");
    if (brir.channels() != 2)
        throw std::invalid_argument("render_brir: impulse response must be stereo");
    if (brir.rate != src.rate)
        throw std::invalid_argument("render_brir: impulse response rate " + std::to_string(brir.rate) +
                                    " Hz differs from source rate " + std::to_string(src.rate) + " Hz");
    return {convolve(src, brir.samples.col(0)), convolve(src, brir.samples.col(1))};
}

BinauralPair mix_at_snr(const EarPair& target, const EarPair& noise, double snr_db)
{
    if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity())
        throw std::invalid_argument("mix_at_snr: SNR must be finite or +inf");
    const double rate = target.left.rate;
    if (target.right.rate != rate || noise.left.rate != rate || noise.right.rate != rate)
        throw std::invalid_argument("mix_at_snr: all renders must share one sample rate");

    const Eigen::Index len = std::max({target.left.frames(), target.right.frames(), noise.left.frames(),
                                       noise.right.frames()});
    const Eigen::VectorXd tl = padded(target.left, len);
    const Eigen::VectorXd tr = padded(target.right, len);
    const Eigen::VectorXd nl = padded(noise.left, len);
    const Eigen::VectorXd nr = padded(noise.right, len);

    const double ptl = power(tl), ptr = power(tr), pnl = power(nl), pnr = power(nr);
    if (ptl == 0.0 || ptr == 0.0)
        throw std::invalid_argument("mix_at_snr: target has zero power in at least one ear");
    if (pnl == 0.0 || pnr == 0.0)
        throw std::invalid_argument("mix_at_snr: noise has zero power in at least one ear");

    BinauralPair out;
    out.noise_gain = std::isinf(snr_db) ? 0.0 : std::sqrt(std::max(ptl / pnl, ptr / pnr) * std::pow(10.0, -snr_db / 10.0));
    const Eigen::VectorXd gl = nl * out.noise_gain;
    const Eigen::VectorXd gr = nr * out.noise_gain;
    out.clean_left = SampleBuffer::mono(tl, rate);
    out.clean_right = SampleBuffer::mono(tr, rate);
    out.noise_left = SampleBuffer::mono(gl, rate);
    out.noise_right = SampleBuffer::mono(gr, rate);
    out.left = SampleBuffer::mono(tl + gl, rate);
    out.right = SampleBuffer::mono(tr + gr, rate);
    return out;
}

std::pair<double, double> ear_snrs_db(const BinauralPair& pair)
{
    const auto snr = [](const SampleBuffer& t, const SampleBuffer& n) {
        return 10.0 * std::log10(power(t.samples.col(0)) / power(n.samples.col(0)));
    };
    return {snr(pair.clean_left, pair.noise_left), snr(pair.clean_right, pair.noise_right)};
}

double better_ear_snr_db(const BinauralPair& pair)
{
    const auto [l, r] = ear_snrs_db(pair);
    return std::max(l, r);
}

void SceneSpec::validate() const
{
    target.validate();
    noise.validate();
    if (target.channels() != 1 || noise.channels() != 1)
        throw std::invalid_argument("SceneSpec: target and noise must be mono");
    if (target.rate != kAceSampleRate || noise.rate != kAceSampleRate)
        throw std::invalid_argument("SceneSpec: sources must be sampled at 16 kHz");
    check_azimuth(target_azimuth, "SceneSpec target");
    check_azimuth(noise_azimuth, "SceneSpec noise");
    if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity())
        throw std::invalid_argument("SceneSpec: SNR must be finite or +inf");
}

Scene build_scene(const SceneSpec& spec, const PatientMap& map, const LgfParams& lgf)
{
    spec.validate();
    const bool parametric = spec.renderer.kind == Renderer::Kind::parametric;
    const EarPair target = parametric ? render_parametric(spec.target, spec.target_azimuth)
                                      : render_brir(spec.target, spec.renderer.target_brir);
    const EarPair noise = parametric ? render_parametric(spec.noise, spec.noise_azimuth)
                                     : render_brir(spec.noise, spec.renderer.noise_brir);

    Scene scene;
    scene.audio = mix_at_snr(target, noise, spec.snr_db);
    scene.clean_left = ace_encode(scene.audio.clean_left, map, lgf, Side::left);
    scene.clean_right = ace_encode(scene.audio.clean_right, map, lgf, Side::right);
    return scene;
}

std::vector<double> azimuth_grid(double step_deg)
{
    if (!(step_deg > 0.0))
        throw std::invalid_argument("azimuth_grid: step must be positive");
    std::vector<double> grid;
    for (int i = 0;; ++i) {
        const double az = -90.0 + step_deg * i;
        if (az > 90.0 + 1e-9)
            break;
        grid.push_back(az);
    }
    return grid;
}

std::vector<double> draw_snrs(std::uint64_t seed, std::size_t count, double lo, double hi)
{
    Rng rng(seed);
    std::vector<double> out(count);
    for (auto& v : out)
        v = rng.uniform(lo, hi);
    return out;
}

} // namespace bicilab
