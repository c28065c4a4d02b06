//
//  experiment.hpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//
//  Declarative experiment description shared by the command-line verbs,
//  and the scene-source plumbing behind it. Sources are either WAV files or
//  seeded synthetic tokens ("speech:SEED", "noise:SEED").
//

#pragma once

#include "bicilab/ace.hpp"
#include "bicilab/config.hpp"
#include "bicilab/deep_ace.hpp"
#include "bicilab/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace bicilab {

struct ExperimentConfig {
    /// Source tokens: WAV paths (expanded from directories) or synthetic tokens.
    std::vector<std::string> targets;
    std::vector<std::string> noises;
    /// Length of synthetic sources and cap on loaded files, in seconds.
    double seconds = 1.0;

    Renderer renderer;
    std::vector<double> snrs{0.0};
    std::vector<double> azimuths;
    double target_azimuth = 0.0;

    PatientMap map = PatientMap::standard();
    LgfParams lgf;
    ModelConfig model;
    Variant variant = Variant::fused;
    TrainOptions train;
    std::filesystem::path train_dir;
    std::filesystem::path validation_dir;
    double validation_fraction = 0.25;
    /// Number of random scenes `synth` draws when no manifest is given.
    int synth_count = 8;

    /// Weights evaluated by `eval`, keyed by variant name.
    std::vector<std::pair<std::string, std::filesystem::path>> eval_weights;

    std::uint64_t seed = 0;
    std::filesystem::path out_dir = "out";

    /// Checks the invariants that do not need the file system: grids
    /// non-empty, maps and model consistent. Throws UsageError.
    void validate() const;
};

/// Reads an experiment file. Relative paths resolve against the file's
/// directory; directories listed as sources expand to their *.wav files.
/// Missing paths and empty grids are rejected with UsageError.
ExperimentConfig load_experiment(const std::filesystem::path& path);
ExperimentConfig experiment_from(const KeyValueConfig& kv, const std::filesystem::path& base_dir);

/// Loads a source token at 16 kHz mono, truncated to `seconds` when > 0.
/// `salt` perturbs synthetic seeds so that one token can yield several
/// independent draws.
SampleBuffer load_source(const std::string& token, double seconds, std::uint64_t salt = 0);

/// One scene as written by `synth` and read back by `train`.
struct SceneFiles {
    std::string name;
    std::filesystem::path mix;
    std::filesystem::path clean;
    std::filesystem::path egf_left;
    std::filesystem::path egf_right;
    std::filesystem::path mask_left;
    std::filesystem::path mask_right;
};

void write_scene(const std::filesystem::path& dir, const std::string& name, const Scene& scene);
/// Scenes in a directory, sorted by name.
std::vector<SceneFiles> list_scenes(const std::filesystem::path& dir);
/// Loads a stored scene as a training example; the stored electrodograms must
/// have `m_channels` rows.
TrainingExample load_training_example(const SceneFiles& files, int m_channels);

/// A scene-manifest line:
///   scene TARGET NOISE az_t=DEG az_n=DEG snr=DB [renderer=parametric|brir:T.wav[,N.wav]] [name=ID]
/// az_t defaults to 0; an empty renderer means the experiment's default.
/// `snr=inf` renders the noise with zero gain.
struct ManifestEntry {
    std::string name;
    std::string target;
    std::string noise;
    double target_azimuth = 0.0;
    double noise_azimuth = 0.0;
    double snr_db = 0.0;
    std::string renderer;
    int line = 0;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
Renderer make_renderer(const std::string& spec, const std::filesystem::path& base_dir = {});

} // namespace bicilab
