//
//  metrics.hpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//
//  Electrodogram-domain evaluation: SNR improvement, clean/denoised linear
//  correlation and electric interaural coherence. Electrodograms are M x T
//  matrices (rows = channels); every metric pools over time.
//

#pragma once

#include <Eigen/Core>

#include <optional>
#include <vector>

namespace bicilab {

inline constexpr double kSnriCapDb = 60.0;
inline constexpr double kSnriFloor = 1e-12;

struct SnriResult {
    enum class Cap { none, upper, lower };
    double db = 0.0;
    Cap cap = Cap::none;

    bool capped() const { return cap != Cap::none; }
};

/// 10 log10(sum ||noisy - clean||^2 / sum ||denoised - clean||^2), capped at
/// +/-60 dB when the denominator (or numerator) falls below 1e-12.
SnriResult snri(const Eigen::MatrixXd& noisy, const Eigen::MatrixXd& clean, const Eigen::MatrixXd& denoised);

/// Pearson correlation; empty when either operand is constant.
std::optional<double> pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

struct ChannelCorrelations {
    std::vector<std::optional<double>> values;

    /// Mean over defined channels; empty if none is defined.
    std::optional<double> mean() const;
    int undefined_count() const;
};

/// Row-wise Pearson correlation between clean and denoised electrodograms.
ChannelCorrelations lcc_channels(const Eigen::MatrixXd& clean, const Eigen::MatrixXd& denoised);
/// Row-wise Pearson correlation between right and left electrodograms.
ChannelCorrelations eic_channels(const Eigen::MatrixXd& right, const Eigen::MatrixXd& left);

/// One azimuth of a sweep: an electrodogram pair to correlate channel-wise
/// ((clean, denoised) for LCC, (right, left) for EIC).
struct SweepPoint {
    double azimuth = 0.0;
    Eigen::MatrixXd first;
    Eigen::MatrixXd second;
};

/// Per-azimuth mean of the defined channel coefficients.
std::vector<std::optional<double>> lcc_azimuth(const std::vector<SweepPoint>& sweep);
std::vector<std::optional<double>> eic_azimuth(const std::vector<SweepPoint>& sweep);

} // namespace bicilab
