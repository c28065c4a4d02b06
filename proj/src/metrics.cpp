//
//  metrics.cpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#include "bicilab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace bicilab {

namespace {

void check_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* what)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()) + ")");
}

ChannelCorrelations rowwise(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* what)
{
    check_same_shape(a, b, what);
    ChannelCorrelations out;
    out.values.reserve(static_cast<std::size_t>(a.rows()));
    for (Eigen::Index k = 0; k < a.rows(); ++k)
        out.values.push_back(pearson(a.row(k).transpose(), b.row(k).transpose()));
    return out;
}

std::vector<std::optional<double>> sweep_means(const std::vector<SweepPoint>& sweep, const char* what)
{
    std::vector<std::optional<double>> out;
    out.reserve(sweep.size());
    for (const auto& point : sweep)
        out.push_back(rowwise(point.first, point.second, what).mean());
    return out;
}

} // namespace

SnriResult snri(const Eigen::MatrixXd& noisy, const Eigen::MatrixXd& clean, const Eigen::MatrixXd& denoised)
{
    check_same_shape(noisy, clean, "snri");
    check_same_shape(denoised, clean, "snri");
    const double num = (noisy - clean).squaredNorm();
    const double den = (denoised - clean).squaredNorm();
    if (den < kSnriFloor)
        return {kSnriCapDb, SnriResult::Cap::upper};
    if (num < kSnriFloor)
        return {-kSnriCapDb, SnriResult::Cap::lower};
    return {10.0 * std::log10(num / den), SnriResult::Cap::none};
}

std::optional<double> pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y)
{
    if (x.size() != y.size())
        throw std::invalid_argument("pearson: length mismatch");
    if (x.size() < 2)
        throw std::invalid_argument("pearson: need at least two samples");
    if (x.minCoeff() == x.maxCoeff() || y.minCoeff() == y.maxCoeff())
        return std::nullopt;

    const Eigen::ArrayXd dx = x.array() - x.mean();
    const Eigen::ArrayXd dy = y.array() - y.mean();
    const double r = (dx * dy).sum() / std::sqrt(dx.square().sum() * dy.square().sum());
    return std::clamp(r, -1.0, 1.0);
}

std::optional<double> ChannelCorrelations::mean() const
{
    double sum = 0.0;
    int count = 0;
    for (const auto& v : values) {
        if (v) {
            sum += *v;
            ++count;
        }
    }
    if (count == 0)
        return std::nullopt;
    return sum / count;
}

int ChannelCorrelations::undefined_count() const
{
    int n = 0;
    for (const auto& v : values)
        n += v ? 0 : 1;
    return n;
}

ChannelCorrelations lcc_channels(const Eigen::MatrixXd& clean, const Eigen::MatrixXd& denoised)
{
    return rowwise(clean, denoised, "lcc_channels");
}

ChannelCorrelations eic_channels(const Eigen::MatrixXd& right, const Eigen::MatrixXd& left)
{
    return rowwise(right, left, "eic_channels");
}

std::vector<std::optional<double>> lcc_azimuth(const std::vector<SweepPoint>& sweep)
{
    return sweep_means(sweep, "lcc_azimuth");
}

std::vector<std::optional<double>> eic_azimuth(const std::vector<SweepPoint>& sweep)
{
    return sweep_means(sweep, "eic_azimuth");
}

} // namespace bicilab
