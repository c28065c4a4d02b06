//
//  report.hpp
//  bicilab
//
//  Per-scene metric rows, their CSV form, and the tab-separated
//  (x, mean, q1, q3) summaries emitted for plotting.
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#pragma once

#include "bicilab/deep_ace.hpp"
#include "bicilab/scene.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace bicilab {

struct MetricRow {
    std::string scene;
    double snr_db = 0.0;
    double azimuth = 0.0;
    std::string variant;
    /// "left" or "right".
    std::string side;
    double snri_db = 0.0;
    bool snri_capped = false;
    std::optional<double> lcc;
    /// Interaural, identical on both side rows of a scene.
    std::optional<double> eic;
};

/// A trained model evaluated under a display name ("bilateral", "fused", ...).
struct NamedModel {
    std::string name;
    const ModelParams* params = nullptr;
};

/// Rows for the unprocessed condition (denoised := noisy ACE) and for every
/// model, two rows (left, right) each. Monaural models run once per ear.
std::vector<MetricRow> evaluate_scene(const std::string& scene_name, double snr_db, double azimuth, const Scene& scene,
                                      const std::vector<NamedModel>& models, const PatientMap& map,
                                      const LgfParams& lgf = {});

void write_metrics_csv(std::ostream& os, const std::vector<MetricRow>& rows);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);

struct Summary {
    double mean = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    std::size_t count = 0;
};

/// Mean and quartiles (linear interpolation between order statistics).
Summary summarize(std::vector<double> values);

/// Writes summary.csv and the plot-data TSVs into `dir`; returns the files
/// written.
std::vector<std::filesystem::path> write_report(const std::filesystem::path& dir, const std::vector<MetricRow>& rows);

} // namespace bicilab
