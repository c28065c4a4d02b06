//
//  scene.hpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#pragma once

#include "bicilab/ace.hpp"
#include "bicilab/dsp.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace bicilab {

/// Spherical-head constants for the parametric renderer.
inline constexpr double kHeadRadius = 0.0875;
inline constexpr double kSpeedOfSound = 343.0;

/// Interaural time difference in seconds for an azimuth in degrees
/// (positive azimuth = source on the right, right ear leads).
double woodworth_itd(double azimuth_deg);
/// Attenuation of the far ear in dB.
double parametric_ild_db(double azimuth_deg);

struct EarPair {
    SampleBuffer left;
    SampleBuffer right;
};

/// Parametric head model: the far ear gets a windowed-sinc fractional delay
/// of woodworth_itd() and a broadband attenuation of parametric_ild_db().
EarPair render_parametric(const SampleBuffer& src, double azimuth_deg);

/// Convolves a mono source with a stereo impulse response (column 0 = left).
EarPair render_brir(const SampleBuffer& src, const SampleBuffer& brir);

struct BinauralPair {
    SampleBuffer left;
    SampleBuffer right;
    SampleBuffer clean_left;
    SampleBuffer clean_right;
    /// Scaled noise renders, so that left == clean_left + noise_left.
    SampleBuffer noise_left;
    SampleBuffer noise_right;
    double noise_gain = 0.0;
};

/// Scales the noise by a single gain so the better-ear SNR equals `snr_db`.
/// `snr_db = +inf` yields a noise gain of exactly zero. Shorter inputs are
/// zero-padded to the longest length.
BinauralPair mix_at_snr(const EarPair& target, const EarPair& noise, double snr_db);

/// Per-ear SNR in dB of a mixed pair.
std::pair<double, double> ear_snrs_db(const BinauralPair& pair);
double better_ear_snr_db(const BinauralPair& pair);

struct Renderer {
    enum class Kind { parametric, brir };
    Kind kind = Kind::parametric;
    /// Stereo impulse responses for the target and noise sources (brir only).
    SampleBuffer target_brir;
    SampleBuffer noise_brir;

    static Renderer parametric() { return {}; }
    static Renderer brir(SampleBuffer target, SampleBuffer noise)
    {
        return {Kind::brir, std::move(target), std::move(noise)};
    }
};

struct SceneSpec {
    SampleBuffer target;
    SampleBuffer noise;
    double target_azimuth = 0.0;
    double noise_azimuth = 0.0;
    double snr_db = 0.0;
    Renderer renderer;

    void validate() const;
};

struct Scene {
    BinauralPair audio;
    AceResult clean_left;
    AceResult clean_right;
};

Scene build_scene(const SceneSpec& spec, const PatientMap& map, const LgfParams& lgf = {});

/// Azimuths from -90 to 90 degrees inclusive.
std::vector<double> azimuth_grid(double step_deg = 5.0);

/// Uniform SNR draws in [lo, hi] from a seeded generator.
std::vector<double> draw_snrs(std::uint64_t seed, std::size_t count, double lo = -5.0, double hi = 10.0);

} // namespace bicilab
