//
//  ace.cpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#include "bicilab/ace.hpp"
#include "bicilab/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace bicilab {

char side_code(Side s)
{
    switch (s) {
    case Side::left:
        return 'l';
    case Side::right:
        return 'r';
    case Side::mono:
        return 'm';
    }
    return 'm';
}

Side side_from_code(char c)
{
    switch (c) {
    case 'l':
        return Side::left;
    case 'r':
        return Side::right;
    case 'm':
        return Side::mono;
    default:
        throw DataError(std::string("unknown side code '") + c + "'");
    }
}

PatientMap PatientMap::uniform(int n, int m, double csr, double threshold, double comfort)
{
    PatientMap map;
    map.n_select = n;
    map.m_channels = m;
    map.csr = csr;
    map.thresholds = Eigen::VectorXd::Constant(m, threshold);
    map.comforts = Eigen::VectorXd::Constant(m, comfort);
    map.validate();
    return map;
}

void PatientMap::validate() const
{
    if (m_channels < 1 || n_select < 1 || n_select > m_channels)
        throw std::invalid_argument("PatientMap: require 1 <= N <= M (N=" + std::to_string(n_select) +
                                    ", M=" + std::to_string(m_channels) + ")");
    if (thresholds.size() != m_channels || comforts.size() != m_channels)
        throw std::invalid_argument("PatientMap: threshold/comfort vectors must have M entries");
    if ((comforts.array() < thresholds.array()).any())
        throw std::invalid_argument("PatientMap: comfort level below threshold");
    if (!(csr > 0.0))
        throw std::invalid_argument("PatientMap: csr must be positive");
}

void LgfParams::validate() const
{
    if (!(base_level > 0.0) || !(saturation_level > base_level) || !(rho > 0.0) || !std::isfinite(saturation_level) ||
        !std::isfinite(rho))
        throw std::invalid_argument("LgfParams: require saturation > base > 0 and rho > 0");
}

int BandTable::channel_of_bin(int bin) const
{
    for (int k = 0; k < channels(); ++k)
        if (bin >= first_bin[static_cast<std::size_t>(k)] &&
            bin < first_bin[static_cast<std::size_t>(k)] + bin_count[static_cast<std::size_t>(k)])
            return k;
    return -1;
}

namespace {

BandTable table_from_widths(std::vector<int> widths)
{
    BandTable t;
    int bin = 2;
    for (int w : widths) {
        t.first_bin.push_back(bin);
        t.bin_count.push_back(w);
        bin += w;
    }
    return t;
}

} // namespace

const BandTable& band_table(int m_channels)
{
    static const BandTable t22 = table_from_widths({1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 4, 4, 5, 6, 7, 8});
    static const BandTable t20 = table_from_widths({1, 1, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 4, 4, 5, 6, 8, 9});
    static const BandTable t4 = table_from_widths({4, 8, 16, 30});
    switch (m_channels) {
    case 22:
        return t22;
    case 20:
        return t20;
    case 4:
        return t4;
    default:
        throw std::invalid_argument("band_envelopes: no band table for M=" + std::to_string(m_channels) +
                                    "; supported values are {4, 20, 22}");
    }
}

std::vector<int> supported_channel_counts() { return {4, 20, 22}; }

Eigen::MatrixXd band_envelopes(const Eigen::MatrixXd& frames, int m_channels, Window window)
{
    const BandTable& table = band_table(m_channels);
    if (frames.cols() > 0 && frames.rows() != kAceFftSize)
        throw std::invalid_argument("band_envelopes: expected 128-sample frames, got " + std::to_string(frames.rows()));

    const double scale = 2.0 / make_window(window, kAceFftSize).sum();
    Eigen::MatrixXd env(m_channels, frames.cols());
    for (Eigen::Index t = 0; t < frames.cols(); ++t) {
        const Eigen::VectorXd mag = fft_magnitude(frames.col(t)) * scale;
        for (int k = 0; k < m_channels; ++k) {
            const auto first = table.first_bin[static_cast<std::size_t>(k)];
            const auto count = table.bin_count[static_cast<std::size_t>(k)];
            env(k, t) = mag.segment(first, count).norm();
        }
    }
    return env;
}

Eigen::VectorXi select_n_of_m(const Eigen::VectorXd& envelope, int n)
{
    const auto m = static_cast<int>(envelope.size());
    if (n < 0 || n > m)
        throw std::invalid_argument("select_n_of_m: n=" + std::to_string(n) + " exceeds M=" + std::to_string(m));

    std::vector<int> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return envelope(a) > envelope(b); });

    Eigen::VectorXi mask = Eigen::VectorXi::Zero(m);
    for (int i = 0; i < n; ++i) {
        const int k = order[static_cast<std::size_t>(i)];
        if (!(envelope(k) > 0.0))
            break;
        mask(k) = 1;
    }
    return mask;
}

double lgf_compress(double envelope, const LgfParams& params)
{
    params.validate();
    if (!(envelope >= 0.0))
        throw std::invalid_argument("lgf_compress: envelope must be non-negative");
    if (envelope <= params.base_level)
        return 0.0;
    if (envelope >= params.saturation_level)
        return 1.0;
    const double x = (envelope - params.base_level) / (params.saturation_level - params.base_level);
    return std::log1p(params.rho * x) / std::log1p(params.rho);
}

CurrentFrame map_to_current(const Eigen::VectorXd& p, const Eigen::VectorXi& mask, const PatientMap& map)
{
    if (p.size() != map.m_channels || mask.size() != map.m_channels)
        throw std::invalid_argument("map_to_current: frame has " + std::to_string(p.size()) +
                                    " channels but the map has M=" + std::to_string(map.m_channels));
    CurrentFrame out;
    out.levels = Eigen::VectorXi::Zero(map.m_channels);
    for (int k = map.m_channels - 1; k >= 0; --k) {
        if (mask(k) == 0)
            continue;
        const double level = map.thresholds(k) + p(k) * (map.comforts(k) - map.thresholds(k));
        out.levels(k) = static_cast<int>(std::lround(level));
        out.active_set.push_back(k);
    }
    return out;
}

AceResult ace_encode(const SampleBuffer& buf, const PatientMap& map, const LgfParams& lgf, Side side)
{
    buf.validate();
    map.validate();
    lgf.validate();
    if (buf.channels() != 1)
        throw std::invalid_argument("ace_encode: expected a mono buffer");
    if (buf.rate != kAceSampleRate)
        throw std::invalid_argument("ace_encode: expected a 16 kHz buffer, got " + std::to_string(buf.rate) +
                                    " Hz; resample first");
    const double hop_exact = buf.rate / map.csr;
    const auto hop = static_cast<Eigen::Index>(std::llround(hop_exact));
    if (hop < 1 || static_cast<double>(hop) != hop_exact || hop > kAceFftSize)
        throw std::invalid_argument("ace_encode: csr " + std::to_string(map.csr) +
                                    " does not divide the sample rate into a hop of 1..128 samples");

    const Eigen::Index pad = kAceFftSize - hop;
    Eigen::VectorXd padded = Eigen::VectorXd::Zero(buf.frames() + pad);
    padded.tail(buf.frames()) = buf.samples.col(0);
    const Eigen::MatrixXd frames = frame_signal(SampleBuffer::mono(padded, buf.rate), {kAceFftSize, hop, Window::hann});

    AceResult out;
    out.envelopes = band_envelopes(frames, map.m_channels);
    const Eigen::Index count = out.envelopes.cols();
    out.electrodogram.amplitudes = Eigen::MatrixXd::Zero(map.m_channels, count);
    out.electrodogram.csr = map.csr;
    out.electrodogram.side = side;
    out.selection = Eigen::MatrixXd::Zero(map.m_channels, count);
    out.currents.reserve(static_cast<std::size_t>(count));

    for (Eigen::Index t = 0; t < count; ++t) {
        const Eigen::VectorXi mask = select_n_of_m(out.envelopes.col(t), map.n_select);
        Eigen::VectorXd p = Eigen::VectorXd::Zero(map.m_channels);
        for (int k = 0; k < map.m_channels; ++k)
            if (mask(k))
                p(k) = lgf_compress(out.envelopes(k, t), lgf);
        out.electrodogram.amplitudes.col(t) = p;
        out.selection.col(t) = mask.cast<double>();
        out.currents.push_back(map_to_current(p, mask, map));
    }
    return out;
}

namespace {

std::string format_value(double v)
{
    char buf[32];
    const int n = std::snprintf(buf, sizeof buf, "%.9g", v);
    return {buf, static_cast<std::size_t>(n)};
}

double parse_value(std::string_view s, std::size_t line)
{
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw DataError("EGF line " + std::to_string(line) + ": bad value '" + std::string(s) + "'");
    return v;
}

} // namespace

void write_egf(std::ostream& os, const Electrodogram& e)
{
    os << "EGF1 m=" << e.channels() << " csr=" << format_value(e.csr) << " side=" << side_code(e.side)
       << " frames=" << e.frames() << '\n';
    std::string line;
    for (Eigen::Index t = 0; t < e.frames(); ++t) {
        line.clear();
        for (Eigen::Index k = 0; k < e.channels(); ++k) {
            if (k)
                line += ',';
            line += format_value(e.amplitudes(k, t));
        }
        line += '\n';
        os << line;
    }
}

Electrodogram read_egf(std::istream& is)
{
    std::string header;
    if (!std::getline(is, header))
        throw DataError("EGF: empty input");
    std::istringstream hs(header);
    std::string magic, m_field, csr_field, side_field, frames_field;
    hs >> magic >> m_field >> csr_field >> side_field >> frames_field;
    if (magic != "EGF1" || m_field.rfind("m=", 0) != 0 || csr_field.rfind("csr=", 0) != 0 ||
        side_field.rfind("side=", 0) != 0 || side_field.size() != 6 || frames_field.rfind("frames=", 0) != 0)
        throw DataError("EGF: malformed header '" + header + "'");

    Electrodogram e;
    const auto m = static_cast<Eigen::Index>(parse_value(std::string_view(m_field).substr(2), 1));
    e.csr = parse_value(std::string_view(csr_field).substr(4), 1);
    e.side = side_from_code(side_field[5]);
    const auto frames = static_cast<Eigen::Index>(parse_value(std::string_view(frames_field).substr(7), 1));
    if (m < 1 || frames < 0)
        throw DataError("EGF: invalid dimensions in header");

    e.amplitudes.resize(m, frames);
    std::string line;
    for (Eigen::Index t = 0; t < frames; ++t) {
        if (!std::getline(is, line))
            throw DataError("EGF: expected " + std::to_string(frames) + " frames, found " + std::to_string(t));
        std::string_view rest(line);
        for (Eigen::Index k = 0; k < m; ++k) {
            const auto comma = rest.find(',');
            if ((comma == std::string_view::npos) != (k == m - 1))
                throw DataError("EGF line " + std::to_string(t + 2) + ": expected " + std::to_string(m) + " values");
            e.amplitudes(k, t) = parse_value(rest.substr(0, comma), static_cast<std::size_t>(t + 2));
            if (comma != std::string_view::npos)
                rest.remove_prefix(comma + 1);
        }
    }
    return e;
}

void write_egf(const std::filesystem::path& path, const Electrodogram& e)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw DataError("cannot write EGF file " + path.string());
    write_egf(os, e);
}

Electrodogram read_egf(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw DataError("cannot open EGF file " + path.string());
    return read_egf(is);
}

} // namespace bicilab
