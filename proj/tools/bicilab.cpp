//
//  bicilab.cpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//
//  Batch front end: encode, synth, train, eval, report.
//  Exit codes: 0 ok, 1 usage/config, 2 data, 3 numerical failure.
//

#include "bicilab/ace.hpp"
#include "bicilab/deep_ace.hpp"
#include "bicilab/error.hpp"
#include "bicilab/experiment.hpp"
#include "bicilab/log.hpp"
#include "bicilab/random.hpp"
#include "bicilab/report.hpp"
#include "bicilab/wav.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

using namespace bicilab;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    int jobs = 1;
    std::string out;
};

ExperimentConfig experiment(const Common& c, bool required)
{
    ExperimentConfig e;
    if (!c.config.empty())
        e = load_experiment(c.config);
    else if (required)
        throw UsageError("--config is required for this command");
    else
        e = experiment_from(KeyValueConfig{}, fs::current_path());
    if (c.seed)
        e.seed = *c.seed;
    if (!c.out.empty())
        e.out_dir = c.out;
    return e;
}

// Runs fn(i) for i in [0, n) on `jobs` threads; the first exception wins.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn fn)
{
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    const auto worker = [&] {
        for (std::size_t i; (i = next++) < n;) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error)
                    error = std::current_exception();
                next = n;
            }
        }
    };
    const int count = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
    std::vector<std::thread> pool;
    for (int t = 1; t < count; ++t)
        pool.emplace_back(worker);
    worker();
    for (auto& t : pool)
        t.join();
    if (error)
        std::rethrow_exception(error);
}

std::string scene_name(std::size_t i)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "scene_%04zu", i);
    return buf;
}

// Synthetic tokens pass through; file tokens resolve against the manifest.
std::string resolve_token(const std::string& token, const fs::path& base)
{
    if (token.rfind("speech:", 0) == 0 || token.rfind("noise:", 0) == 0 || base.empty() ||
        fs::path(token).is_absolute())
        return token;
    return (base / token).string();
}

// ---------------------------------------------------------------------------

int cmd_encode(const Common& c, const std::string& input, const std::string& side_text)
{
    if (side_text != "l" && side_text != "r" && side_text != "m")
        throw UsageError("--side must be l, r or m");
    const ExperimentConfig e = experiment(c, false);
    SampleBuffer buf = read_wav(input);
    if (buf.channels() != 1)
        throw DataError(input + ": encode expects a mono file, got " + std::to_string(buf.channels()) + " channels");
    if (buf.rate != 16000.0)
        buf = resample(buf, 16000.0);
    const Side side = side_from_code(side_text[0]);
    const AceResult r = ace_encode(buf, e.map, e.lgf, side);

    fs::path out = c.out.empty() ? fs::path(input).replace_extension(".egf") : fs::path(c.out);
    write_egf(out, r.electrodogram);

    const Eigen::VectorXd histogram = r.selection.rowwise().sum();
    std::cout << "frames " << r.electrodogram.amplitudes.cols() << "\nchannels " << e.map.m_channels
              << "\nactive-channel histogram (electrode: frames selected)\n";
    for (Eigen::Index k = 0; k < histogram.size(); ++k)
        std::cout << "  " << (k + 1) << ": " << static_cast<long>(histogram(k)) << '\n';
    std::cout << "wrote " << out.string() << '\n';
    return 0;
}

int cmd_synth(const Common& c, const std::string& manifest)
{
    const ExperimentConfig e = experiment(c, manifest.empty());
    std::vector<ManifestEntry> entries;
    fs::path base;
    if (!manifest.empty()) {
        entries = read_manifest(manifest);
        base = fs::path(manifest).parent_path();
        if (entries.empty())
            throw UsageError("scene manifest " + manifest + " lists no scenes");
    } else {
        // Random training scenes: target at the configured azimuth, noise on
        // the grid, SNR uniform in [-5, 10] dB.
        Rng rng(split_seed(e.seed, 0x5ce));
        const auto snrs = draw_snrs(split_seed(e.seed, 0x51), static_cast<std::size_t>(e.synth_count));
        for (int i = 0; i < e.synth_count; ++i) {
            ManifestEntry m;
            m.name = scene_name(static_cast<std::size_t>(i));
            m.target = e.targets[static_cast<std::size_t>(i) % e.targets.size()];
            m.noise = e.noises[rng.below(e.noises.size())];
            m.target_azimuth = e.target_azimuth;
            m.noise_azimuth = e.azimuths[rng.below(e.azimuths.size())];
            m.snr_db = snrs[static_cast<std::size_t>(i)];
            m.renderer = "";
            entries.push_back(m);
        }
    }

    std::vector<std::string> errors(entries.size());
    std::vector<std::optional<Scene>> scenes(entries.size());
    parallel_for(entries.size(), c.jobs, [&](std::size_t i) {
        const ManifestEntry& m = entries[i];
        try {
            SceneSpec spec;
            const std::uint64_t salt = split_seed(e.seed, i + 1);
            spec.target = load_source(resolve_token(m.target, base), e.seconds, salt);
            spec.noise = load_source(resolve_token(m.noise, base), e.seconds, salt ^ 0x9e37);
            spec.target_azimuth = m.target_azimuth;
            spec.noise_azimuth = m.noise_azimuth;
            spec.snr_db = m.snr_db;
            spec.renderer = m.renderer.empty() ? e.renderer : make_renderer(m.renderer, base);
            scenes[i] = build_scene(spec, e.map, e.lgf);
        } catch (const std::exception& ex) {
            errors[i] = ex.what();
        }
    });

    int written = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!scenes[i]) {
            log().error("scene '{}' (line {}) skipped: {}", entries[i].name, entries[i].line, errors[i]);
            continue;
        }
        write_scene(e.out_dir, entries[i].name, *scenes[i]);
        ++written;
    }
    std::cout << "wrote " << written << " of " << entries.size() << " scenes to " << e.out_dir.string() << '\n';
    if (written == 0)
        throw DataError("no scene could be built");
    return 0;
}

void write_history(const fs::path& path, const std::vector<EpochRecord>& history)
{
    std::ofstream os(path, std::ios::trunc);
    if (!os)
        throw DataError("cannot write " + path.string());
    os << "epoch,train_loss,val_loss,lr,improved,lr_reduced\n";
    char buf[160];
    for (const auto& h : history) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%d,%d\n", h.epoch, h.train_loss, h.val_loss, h.lr,
                      h.improved ? 1 : 0, h.lr_reduced ? 1 : 0);
        os << buf;
    }
}

int cmd_train(const Common& c)
{
    const ExperimentConfig e = experiment(c, true);
    if (e.train_dir.empty())
        throw UsageError("train.scenes is not set");
    const auto train_files = list_scenes(e.train_dir);
    if (train_files.empty())
        throw UsageError("training directory " + e.train_dir.string() + " holds no scenes");

    std::vector<TrainingExample> train;
    for (const auto& f : train_files)
        train.push_back(load_training_example(f, e.model.m_channels));
    std::vector<TrainingExample> validation;
    if (!e.validation_dir.empty()) {
        const auto files = list_scenes(e.validation_dir);
        if (files.empty())
            throw UsageError("validation directory " + e.validation_dir.string() + " holds no scenes");
        for (const auto& f : files)
            validation.push_back(load_training_example(f, e.model.m_channels));
    } else {
        if (train.size() < 2)
            throw UsageError("need at least two scenes to hold out a validation split");
        const auto held = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround(e.validation_fraction * static_cast<double>(train.size()))), 1,
            train.size() - 1);
        validation.assign(train.end() - static_cast<std::ptrdiff_t>(held), train.end());
        train.resize(train.size() - held);
    }
    log().info("training {} on {} scenes, validating on {}", variant_name(e.variant), train.size(), validation.size());

    fs::create_directories(e.out_dir);
    const fs::path checkpoint = e.out_dir / "checkpoint";
    TrainingState state;
    if (fs::exists(checkpoint / "checkpoint.state")) {
        state = load_checkpoint(checkpoint);
        if (state.params.variant() != e.variant)
            throw UsageError("checkpoint in " + checkpoint.string() + " belongs to a " +
                             variant_name(state.params.variant()) + " model");
        std::cout << "resuming from epoch " << state.schedule.epochs_seen() << '\n';
    }
    const fs::path history_path = e.out_dir / "history.csv";
    const FitResult r = fit(e.variant, e.model, train, validation, e.train, e.seed, &state,
                            [&](const TrainingState& s) {
                                save_checkpoint(checkpoint, s);
                                write_history(history_path, s.history);
                            });
    write_history(history_path, r.history);
    if (r.diverged) {
        // Weights are not written; the last good epoch survives as the checkpoint, if there was one.
        if (fs::exists(checkpoint / "checkpoint.state"))
            throw NumericalError(r.diagnostic + " (last checkpoint kept in " + checkpoint.string() + ")");
        throw NumericalError(r.diagnostic + " (no epoch completed, nothing saved)");
    }
    const fs::path weights = e.out_dir / "model.dwt";
    save_model(weights, r.params);
    std::cout << "epochs " << r.history.size() << "\nsteps " << r.steps << "\nbest epoch " << r.best_epoch
              << "\nweights " << weights.string() << '\n';
    return 0;
}

int cmd_eval(const Common& c, const std::vector<std::string>& weight_flags)
{
    ExperimentConfig e = experiment(c, true);
    for (const auto& w : weight_flags) {
        const auto colon = w.find(':');
        if (colon == std::string::npos)
            throw UsageError("--weights expects variant:path, got '" + w + "'");
        e.eval_weights.emplace_back(w.substr(0, colon), w.substr(colon + 1));
    }

    std::vector<ModelParams> params;
    params.reserve(e.eval_weights.size());
    std::vector<NamedModel> models;
    for (const auto& [name, path] : e.eval_weights) {
        params.push_back(load_model(path));
        const ModelParams& p = params.back();
        if (variant_name(p.variant()) != name)
            throw UsageError(path.string() + " holds a " + variant_name(p.variant()) + " model, listed as " + name);
        if (p.config().m_channels != e.map.m_channels || p.config().frame_rate(16000.0) != e.map.csr)
            throw UsageError(path.string() + ": model output (" + std::to_string(p.config().m_channels) +
                             " channels at " + std::to_string(p.config().frame_rate(16000.0)) +
                             " frames/s) does not match the patient map");
    }
    for (std::size_t i = 0; i < params.size(); ++i)
        models.push_back({e.eval_weights[i].first, &params[i]});

    struct Job {
        std::size_t target, noise;
        double snr, azimuth;
    };
    std::vector<Job> jobs;
    for (std::size_t t = 0; t < e.targets.size(); ++t)
        for (std::size_t n = 0; n < e.noises.size(); ++n)
            for (double snr : e.snrs)
                for (double az : e.azimuths)
                    jobs.push_back({t, n, snr, az});

    std::vector<SampleBuffer> targets, noises;
    for (const auto& t : e.targets)
        targets.push_back(load_source(t, e.seconds, 0));
    for (const auto& n : e.noises)
        noises.push_back(load_source(n, e.seconds, 0x9e37));

    std::vector<std::vector<MetricRow>> results(jobs.size());
    parallel_for(jobs.size(), c.jobs, [&](std::size_t i) {
        const Job& j = jobs[i];
        SceneSpec spec;
        spec.target = targets[j.target];
        spec.noise = noises[j.noise];
        spec.target_azimuth = e.target_azimuth;
        spec.noise_azimuth = j.azimuth;
        spec.snr_db = j.snr;
        spec.renderer = e.renderer;
        const Scene scene = build_scene(spec, e.map, e.lgf);
        const std::string name = "t" + std::to_string(j.target) + "n" + std::to_string(j.noise);
        results[i] = evaluate_scene(name, j.snr, j.azimuth, scene, models, e.map, e.lgf);
    });

    std::vector<MetricRow> rows;
    for (auto& r : results)
        rows.insert(rows.end(), r.begin(), r.end());
    fs::create_directories(e.out_dir);
    write_metrics_csv(e.out_dir / "metrics.csv", rows);
    const auto files = write_report(e.out_dir, rows);
    std::cout << "scenes " << jobs.size() << "\nrows " << rows.size() << "\nwrote " << (files.size() + 1)
              << " files to " << e.out_dir.string() << '\n';
    return 0;
}

int cmd_report(const Common& c, const std::string& input)
{
    const fs::path out = c.out.empty() ? fs::path(".") : fs::path(c.out);
    const fs::path in = input.empty() ? out / "metrics.csv" : fs::path(input);
    const auto rows = read_metrics_csv(in);
    const auto files = write_report(out, rows);
    for (const auto& f : files)
        std::cout << f.string() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"bicilab: bilateral cochlear-implant sound coding experiments"};
    app.require_subcommand(1);
    Common common;
    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "experiment file (key = value with [sections])");
        sub->add_option("--seed", common.seed, "overrides the configured seed");
        sub->add_option("--jobs", common.jobs, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--out", common.out, "output file or directory");
    };

    std::string encode_input, side = "m";
    auto* encode = app.add_subcommand("encode", "WAV -> EGF electrodogram with the ACE strategy");
    encode->add_option("input", encode_input, "mono WAV file")->required();
    encode->add_option("--side", side, "l, r or m");
    add_common(encode);

    std::string manifest;
    auto* synth = app.add_subcommand("synth", "render scenes from a manifest (or random scenes from --config)");
    synth->add_option("manifest", manifest, "scene manifest");
    add_common(synth);

    auto* train = app.add_subcommand("train", "train a Deep ACE model");
    add_common(train);

    std::vector<std::string> weights;
    auto* eval = app.add_subcommand("eval", "SNRi/LCC/EIC sweep over the configured SNR x azimuth grid");
    eval->add_option("--weights", weights, "variant:path (repeatable)");
    add_common(eval);

    std::string report_input;
    auto* report = app.add_subcommand("report", "summaries and plot data from metrics.csv");
    report->add_option("--in", report_input, "metrics CSV (default OUT/metrics.csv)");
    add_common(report);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*encode)
            return cmd_encode(common, encode_input, side);
        if (*synth)
            return cmd_synth(common, manifest);
        if (*train)
            return cmd_train(common);
        if (*eval)
            return cmd_eval(common, weights);
        return cmd_report(common, report_input);
    } catch (const NumericalError& e) {
        std::cerr << "bicilab: numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const DataError& e) {
        std::cerr << "bicilab: data error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "bicilab: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "bicilab: data error: " << e.what() << '\n';
        return 2;
    }
}
