//
//  report.cpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#include "bicilab/report.hpp"
#include "bicilab/error.hpp"
#include "bicilab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

namespace bicilab {

namespace fs = std::filesystem;

namespace {

struct SideMetrics {
    SnriResult snri;
    std::optional<double> lcc;
};

SideMetrics side_metrics(const Eigen::MatrixXd& noisy, const Eigen::MatrixXd& clean, const Eigen::MatrixXd& denoised)
{
    const Eigen::Index t = std::min({noisy.cols(), clean.cols(), denoised.cols()});
    return {snri(noisy.leftCols(t), clean.leftCols(t), denoised.leftCols(t)),
            lcc_channels(clean.leftCols(t), denoised.leftCols(t)).mean()};
}

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::optional<double> parse_optional(const std::string& s)
{
    if (s.empty())
        return std::nullopt;
    return std::stod(s);
}

} // namespace

std::vector<MetricRow> evaluate_scene(const std::string& scene_name, double snr_db, double azimuth, const Scene& scene,
                                      const std::vector<NamedModel>& models, const PatientMap& map,
                                      const LgfParams& lgf)
{
    const Eigen::MatrixXd noisy_l = ace_encode(scene.audio.left, map, lgf, Side::left).electrodogram.amplitudes;
    const Eigen::MatrixXd noisy_r = ace_encode(scene.audio.right, map, lgf, Side::right).electrodogram.amplitudes;
    const Eigen::MatrixXd& clean_l = scene.clean_left.electrodogram.amplitudes;
    const Eigen::MatrixXd& clean_r = scene.clean_right.electrodogram.amplitudes;

    std::vector<MetricRow> rows;
    const auto emit = [&](const std::string& variant, const Eigen::MatrixXd& den_l, const Eigen::MatrixXd& den_r) {
        const Eigen::Index t = std::min(den_l.cols(), den_r.cols());
        const std::optional<double> eic = eic_channels(den_r.leftCols(t), den_l.leftCols(t)).mean();
        for (const bool left : {true, false}) {
            const SideMetrics m = left ? side_metrics(noisy_l, clean_l, den_l) : side_metrics(noisy_r, clean_r, den_r);
            MetricRow row;
            row.scene = scene_name;
            row.snr_db = snr_db;
            row.azimuth = azimuth;
            row.variant = variant;
            row.side = left ? "left" : "right";
            row.snri_db = m.snri.db;
            row.snri_capped = m.snri.capped();
            row.lcc = m.lcc;
            row.eic = eic;
            rows.push_back(std::move(row));
        }
    };

    emit("unprocessed", noisy_l, noisy_r);
    const Eigen::VectorXd in_l = scene.audio.left.samples.col(0);
    const Eigen::VectorXd in_r = scene.audio.right.samples.col(0);
    for (const NamedModel& m : models) {
        if (m.params->config().m_channels != map.m_channels)
            throw UsageError("model '" + m.name + "' emits " + std::to_string(m.params->config().m_channels) +
                             " channels but the patient map has " + std::to_string(map.m_channels));
        if (m.params->variant() == Variant::monaural)
            emit(m.name, denoise(*m.params, in_l, in_l).first, denoise(*m.params, in_r, in_r).first);
        else {
            const auto [l, r] = denoise(*m.params, in_l, in_r);
            emit(m.name, l, r);
        }
    }
    return rows;
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricRow>& rows)
{
    os << "scene,snr_db,azimuth,variant,side,snri_db,snri_capped,lcc,eic\n";
    for (const MetricRow& r : rows)
        os << r.scene << ',' << fmt(r.snr_db) << ',' << fmt(r.azimuth) << ',' << r.variant << ',' << r.side << ','
           << fmt(r.snri_db) << ',' << (r.snri_capped ? 1 : 0) << ',' << fmt(r.lcc) << ',' << fmt(r.eic) << '\n';
}

void write_metrics_csv(const fs::path& path, const std::vector<MetricRow>& rows)
{
    std::ofstream os(path, std::ios::trunc);
    if (!os)
        throw DataError("cannot write " + path.string());
    write_metrics_csv(os, rows);
}

std::vector<MetricRow> read_metrics_csv(const fs::path& path)
{
    std::ifstream is(path);
    if (!is)
        throw DataError("cannot open metrics file " + path.string());
    std::string line;
    std::getline(is, line);
    if (line.rfind("scene,snr_db,azimuth,variant,side", 0) != 0)
        throw DataError(path.string() + ": not a metrics CSV");
    std::vector<MetricRow> rows;
    for (int line_no = 2; std::getline(is, line); ++line_no) {
        if (line.empty())
            continue;
        std::vector<std::string> f;
        std::istringstream ls(line);
        for (std::string cell; std::getline(ls, cell, ',');)
            f.push_back(cell);
        if (f.size() == 8)
            f.emplace_back();
        if (f.size() != 9)
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 9 fields");
        try {
            rows.push_back({f[0], std::stod(f[1]), std::stod(f[2]), f[3], f[4], std::stod(f[5]), f[6] == "1",
                            parse_optional(f[7]), parse_optional(f[8])});
        } catch (const std::logic_error&) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed number");
        }
    }
    return rows;
}

Summary summarize(std::vector<double> values)
{
    Summary s;
    s.count = values.size();
    if (values.empty())
        return s;
    std::sort(values.begin(), values.end());
    double total = 0.0;
    for (double v : values)
        total += v;
    s.mean = total / static_cast<double>(values.size());
    const auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, values.size() - 1);
        return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
    };
    s.q1 = quantile(0.25);
    s.q3 = quantile(0.75);
    return s;
}

std::vector<fs::path> write_report(const fs::path& dir, const std::vector<MetricRow>& rows)
{
    fs::create_directories(dir);
    std::vector<fs::path> written;

    // file -> x -> values
    std::map<std::string, std::map<double, std::vector<double>>> series;
    // (variant, side, metric) -> values
    std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> totals;
    for (const MetricRow& r : rows) {
        series["snri_vs_snr." + r.variant + ".tsv"][r.snr_db].push_back(r.snri_db);
        totals[{r.variant, r.side, "snri_db"}].push_back(r.snri_db);
        if (r.lcc) {
            series["lcc_vs_azimuth." + r.variant + "." + r.side + ".tsv"][r.azimuth].push_back(*r.lcc);
            totals[{r.variant, r.side, "lcc"}].push_back(*r.lcc);
        }
        if (r.eic && r.side == "left") {
            series["eic_vs_azimuth." + r.variant + ".tsv"][r.azimuth].push_back(*r.eic);
            totals[{r.variant, "both", "eic"}].push_back(*r.eic);
        }
    }

    for (const auto& [name, points] : series) {
        const fs::path path = dir / name;
        std::ofstream os(path, std::ios::trunc);
        if (!os)
            throw DataError("cannot write " + path.string());
        os << "x\tmean\tq1\tq3\n";
        for (const auto& [x, values] : points) {
            const Summary s = summarize(values);
            os << fmt(x) << '\t' << fmt(s.mean) << '\t' << fmt(s.q1) << '\t' << fmt(s.q3) << '\n';
        }
        written.push_back(path);
    }

    const fs::path summary_path = dir / "summary.csv";
    std::ofstream os(summary_path, std::ios::trunc);
    if (!os)
        throw DataError("cannot write " + summary_path.string());
    os << "variant,side,metric,mean,q1,q3,count\n";
    for (const auto& [key, values] : totals) {
        const Summary s = summarize(values);
        os << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ',' << fmt(s.mean) << ','
           << fmt(s.q1) << ',' << fmt(s.q3) << ',' << s.count << '\n';
    }
    written.push_back(summary_path);
    return written;
}

} // namespace bicilab
