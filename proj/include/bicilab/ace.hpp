//
//  ace.hpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//
//  Advanced Combination Encoder: FFT filterbank envelopes, N-of-M maxima
//  selection, loudness growth compression and current-level mapping.
//

#pragma once

#include "bicilab/dsp.hpp"

#include <filesystem>
#include <iosfwd>
#include <vector>

namespace bicilab {

enum class Side { left, right, mono };

char side_code(Side s);
Side side_from_code(char c);

/// Normalized stimulation amplitudes, one row per electrode (row 0 = most
/// apical, lowest frequency), one column per stimulation frame.
struct Electrodogram {
    Eigen::MatrixXd amplitudes;
    double csr = 1000.0;
    Side side = Side::mono;

    Eigen::Index channels() const { return amplitudes.rows(); }
    Eigen::Index frames() const { return amplitudes.cols(); }
};

struct CurrentFrame {
    Eigen::VectorXi levels;
    /// Selected electrodes in stimulation order, base (high index) to apex.
    std::vector<int> active_set;
};

struct PatientMap {
    Eigen::VectorXd thresholds;
    Eigen::VectorXd comforts;
    int n_select = 8;
    int m_channels = 22;
    double csr = 1000.0;

    /// Uniform map with the given N-of-M, CSR and current limits.
    static PatientMap uniform(int n, int m, double csr = 1000.0, double threshold = 100.0, double comfort = 200.0);
    /// 8-of-22 at 1000 pps, thresholds 100, comforts 200.
    static PatientMap standard() { return uniform(8, 22); }

    void validate() const;
};

struct LgfParams {
    double base_level = 4.0 / 256.0;
    double saturation_level = 150.0 / 256.0;
    double rho = 416.2;

    void validate() const;
};

/// FFT bin grouping for one electrode count.
struct BandTable {
    std::vector<int> first_bin;
    std::vector<int> bin_count;

    int channels() const { return static_cast<int>(first_bin.size()); }
    /// Channel whose bins contain `bin`, or -1.
    int channel_of_bin(int bin) const;
};

inline constexpr int kAceFftSize = 128;
inline constexpr double kAceSampleRate = 16000.0;

/// Fixed tables for 4, 20 and 22 channels over FFT bins 2..59.
const BandTable& band_table(int m_channels);
std::vector<int> supported_channel_counts();

/// Root-sum-square of bin magnitudes per band. `frames` holds windowed
/// 128-sample frames as columns. Magnitudes are scaled by 2/sum(window) so
/// a full-scale sinusoid centred in a single-bin band has envelope 1.
Eigen::MatrixXd band_envelopes(const Eigen::MatrixXd& frames, int m_channels, Window window = Window::hann);

/// 0/1 mask of the n largest strictly positive entries; ties go to the lower index.
Eigen::VectorXi select_n_of_m(const Eigen::VectorXd& envelope, int n);

double lgf_compress(double envelope, const LgfParams& params);

CurrentFrame map_to_current(const Eigen::VectorXd& p, const Eigen::VectorXi& mask, const PatientMap& map);

struct AceResult {
    Electrodogram electrodogram;
    /// Per-frame selection masks (M x T, 0/1).
    Eigen::MatrixXd selection;
    Eigen::MatrixXd envelopes;
    std::vector<CurrentFrame> currents;
};

/// Full chain on a mono 16 kHz buffer. Hop = rate / csr; the signal is
/// front-padded by (128 - hop) zeros so that T = floor(len / hop) and frame t
/// ends at sample (t + 1) * hop.
AceResult ace_encode(const SampleBuffer& buf, const PatientMap& map, const LgfParams& lgf = {}, Side side = Side::mono);

// EGF v1 text format.
void write_egf(std::ostream& os, const Electrodogram& e);
Electrodogram read_egf(std::istream& is);
void write_egf(const std::filesystem::path& path, const Electrodogram& e);
Electrodogram read_egf(const std::filesystem::path& path);

} // namespace bicilab
