//
//  experiment.cpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#include "bicilab/experiment.hpp"
#include "bicilab/error.hpp"
#include "bicilab/log.hpp"
#include "bicilab/random.hpp"
#include "bicilab/signals.hpp"
#include "bicilab/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace bicilab {

namespace fs = std::filesystem;

namespace {

constexpr double kRate = 16000.0;

std::vector<std::string> split_list(const std::string& text)
{
    std::vector<std::string> out;
    std::istringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        const auto a = item.find_first_not_of(" \t");
        if (a == std::string::npos)
            continue;
        out.push_back(item.substr(a, item.find_last_not_of(" \t") - a + 1));
    }
    return out;
}

bool is_synthetic(const std::string& token)
{
    return token.rfind("speech:", 0) == 0 || token.rfind("noise:", 0) == 0;
}

fs::path resolve(const fs::path& base, const std::string& p)
{
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

// Expands a source list: directories become their sorted *.wav files.
std::vector<std::string> expand_sources(const std::string& key, const std::string& text, const fs::path& base)
{
    std::vector<std::string> out;
    for (const auto& token : split_list(text)) {
        if (is_synthetic(token)) {
            out.push_back(token);
            continue;
        }
        const fs::path p = resolve(base, token);
        if (!fs::exists(p))
            throw UsageError(key + ": path " + p.string() + " does not exist");
        if (fs::is_directory(p)) {
            std::vector<std::string> files;
            for (const auto& e : fs::directory_iterator(p))
                if (e.is_regular_file() && e.path().extension() == ".wav")
                    files.push_back(e.path().string());
            std::sort(files.begin(), files.end());
            if (files.empty())
                throw UsageError(key + ": directory " + p.string() + " holds no .wav files");
            out.insert(out.end(), files.begin(), files.end());
        } else {
            out.push_back(p.string());
        }
    }
    return out;
}

std::uint64_t parse_seed(const std::string& text)
{
    try {
        std::size_t used = 0;
        const auto v = std::stoull(text, &used);
        if (used == text.size())
            return v;
    } catch (const std::exception&) {
    }
    throw UsageError("seed '" + text + "' is not an unsigned integer");
}

} // namespace

void ExperimentConfig::validate() const
{
    if (targets.empty() || noises.empty())
        throw UsageError("experiment needs at least one target and one noise source");
    if (snrs.empty())
        throw UsageError("SNR grid is empty");
    if (azimuths.empty())
        throw UsageError("azimuth grid is empty");
    for (double a : azimuths)
        if (a < -90.0 || a > 90.0)
            throw UsageError("azimuth " + std::to_string(a) + " outside [-90, 90]");
    if (!(seconds > 0.0))
        throw UsageError("corpus.seconds must be positive");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        throw UsageError("train.validation_fraction must lie in (0, 1)");
    map.validate();
    lgf.validate();
    model.validate();
    if (model.m_channels != map.m_channels)
        throw UsageError("model has " + std::to_string(model.m_channels) + " output channels but the patient map has " +
                         std::to_string(map.m_channels));
    if (std::abs(model.frame_rate(kRate) - map.csr) > 1e-9)
        throw UsageError("model frame rate " + std::to_string(model.frame_rate(kRate)) +
                         " Hz differs from the map's channel stimulation rate " + std::to_string(map.csr));
}

ExperimentConfig experiment_from(const KeyValueConfig& kv, const fs::path& base_dir)
{
    ExperimentConfig c;
    if (const auto s = kv.get("seed"))
        c.seed = parse_seed(*s);
    c.out_dir = resolve(base_dir, kv.get_or("out", "out"));

    c.seconds = kv.get_double("corpus.seconds", c.seconds);
    c.targets = expand_sources("corpus.targets", kv.get_or("corpus.targets", "speech:1,speech:2"), base_dir);
    c.noises = expand_sources("corpus.noises", kv.get_or("corpus.noises", "noise:1"), base_dir);

    c.renderer = make_renderer(kv.get_or("scene.renderer", "parametric"), base_dir);
    c.snrs = kv.get_doubles("scene.snr", c.snrs);
    c.azimuths = kv.get_doubles("scene.azimuth", azimuth_grid(5.0));
    c.target_azimuth = kv.get_double("scene.target_azimuth", 0.0);

    const int m = static_cast<int>(kv.get_long("patient.m", 22));
    c.map = PatientMap::uniform(static_cast<int>(kv.get_long("patient.n", 8)), m, kv.get_double("patient.csr", 1000.0),
                                kv.get_double("patient.threshold", 100.0), kv.get_double("patient.comfort", 200.0));
    c.lgf.base_level = kv.get_double("lgf.base", c.lgf.base_level);
    c.lgf.saturation_level = kv.get_double("lgf.saturation", c.lgf.saturation_level);
    c.lgf.rho = kv.get_double("lgf.rho", c.lgf.rho);

    const std::string preset = kv.get_or("model.preset", "standard");
    if (preset == "standard")
        c.model = ModelConfig::standard();
    else if (preset == "reduced")
        c.model = ModelConfig::reduced();
    else
        throw UsageError("model.preset must be standard or reduced, got '" + preset + "'");
    const auto override_int = [&](const char* key, int& field) {
        field = static_cast<int>(kv.get_long(std::string("model.") + key, field));
    };
    override_int("encoder_filters", c.model.encoder_filters);
    override_int("filter_length", c.model.filter_length);
    override_int("stride", c.model.stride);
    override_int("bottleneck_channels", c.model.bottleneck_channels);
    override_int("hidden_channels", c.model.hidden_channels);
    override_int("skip_channels", c.model.skip_channels);
    override_int("kernel_size", c.model.kernel_size);
    override_int("blocks_per_repeat", c.model.blocks_per_repeat);
    override_int("repeats", c.model.repeats);
    override_int("m_channels", c.model.m_channels);
    if (const auto ded = kv.get("model.ded_channels")) {
        const auto v = parse_number_list(*ded);
        if (v.size() != 3)
            throw UsageError("model.ded_channels must list three widths");
        for (std::size_t i = 0; i < 3; ++i)
            c.model.ded_channels[i] = static_cast<int>(v[i]);
    }
    c.variant = variant_from_name(kv.get_or("model.variant", "fused"));

    c.train.lr = kv.get_double("train.lr", c.train.lr);
    c.train.max_epochs = static_cast<int>(kv.get_long("train.max_epochs", c.train.max_epochs));
    c.train.batch_size = static_cast<int>(kv.get_long("train.batch_size", c.train.batch_size));
    c.train.lr_patience = static_cast<int>(kv.get_long("train.lr_patience", c.train.lr_patience));
    c.train.lr_factor = kv.get_double("train.lr_factor", c.train.lr_factor);
    c.train.stop_patience = static_cast<int>(kv.get_long("train.stop_patience", c.train.stop_patience));
    c.train.alpha = kv.get_double("train.alpha", c.train.alpha);
    if (kv.has("train.max_steps"))
        c.train.max_steps = kv.get_long("train.max_steps", 0);
    if (const auto d = kv.get("train.scenes"))
        c.train_dir = resolve(base_dir, *d);
    if (const auto d = kv.get("train.validation"))
        c.validation_dir = resolve(base_dir, *d);
    c.validation_fraction = kv.get_double("train.validation_fraction", c.validation_fraction);
    c.synth_count = static_cast<int>(kv.get_long("synth.count", c.synth_count));

    for (const auto& entry : kv.get_all("eval.weights")) {
        const auto colon = entry.find(':');
        if (colon == std::string::npos)
            throw UsageError("eval.weights expects 'variant:path', got '" + entry + "'");
        const std::string variant = entry.substr(0, colon);
        variant_from_name(variant);
        c.eval_weights.emplace_back(variant, resolve(base_dir, entry.substr(colon + 1)));
    }

    c.validate();
    return c;
}

ExperimentConfig load_experiment(const fs::path& path)
{
    return experiment_from(KeyValueConfig::load(path), path.parent_path());
}

SampleBuffer load_source(const std::string& token, double seconds, std::uint64_t salt)
{
    if (is_synthetic(token)) {
        const auto colon = token.find(':');
        const std::uint64_t seed = split_seed(parse_seed(token.substr(colon + 1)), salt);
        return token[0] == 's' ? synthetic_speech(seed, seconds, kRate) : synthetic_noise(seed, seconds, kRate);
    }
    SampleBuffer buf = read_wav(token);
    if (buf.channels() == 2)
        buf = SampleBuffer::mono(buf.samples.rowwise().mean(), buf.rate);
    if (buf.rate != kRate)
        buf = resample(buf, kRate);
    if (seconds > 0.0) {
        const auto n = std::min<Eigen::Index>(buf.frames(), std::llround(seconds * kRate));
        buf.samples.conservativeResize(n, 1);
    }
    return buf;
}

void write_scene(const fs::path& dir, const std::string& name, const Scene& scene)
{
    fs::create_directories(dir);
    const BinauralPair& a = scene.audio;
    write_wav(dir / (name + ".mix.wav"),
              SampleBuffer::stereo(a.left.samples.col(0), a.right.samples.col(0), a.left.rate));
    write_wav(dir / (name + ".clean.wav"),
              SampleBuffer::stereo(a.clean_left.samples.col(0), a.clean_right.samples.col(0), a.left.rate));
    write_egf(dir / (name + ".l.egf"), scene.clean_left.electrodogram);
    write_egf(dir / (name + ".r.egf"), scene.clean_right.electrodogram);
    // Selection masks, kept separately because a selected channel may carry p = 0.
    const auto mask = [](const AceResult& r) { return Electrodogram{r.selection, r.electrodogram.csr, r.electrodogram.side}; };
    write_egf(dir / (name + ".l.mask.egf"), mask(scene.clean_left));
    write_egf(dir / (name + ".r.mask.egf"), mask(scene.clean_right));
}

std::vector<SceneFiles> list_scenes(const fs::path& dir)
{
    if (!fs::is_directory(dir))
        throw UsageError("scene directory " + dir.string() + " does not exist");
    std::vector<SceneFiles> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string file = e.path().filename().string();
        const std::string suffix = ".mix.wav";
        if (file.size() <= suffix.size() || file.compare(file.size() - suffix.size(), suffix.size(), suffix) != 0)
            continue;
        SceneFiles s;
        s.name = file.substr(0, file.size() - suffix.size());
        s.mix = e.path();
        s.clean = dir / (s.name + ".clean.wav");
        s.egf_left = dir / (s.name + ".l.egf");
        s.egf_right = dir / (s.name + ".r.egf");
        s.mask_left = dir / (s.name + ".l.mask.egf");
        s.mask_right = dir / (s.name + ".r.mask.egf");
        out.push_back(std::move(s));
    }
    std::sort(out.begin(), out.end(), [](const SceneFiles& a, const SceneFiles& b) { return a.name < b.name; });
    return out;
}

TrainingExample load_training_example(const SceneFiles& files, int m_channels)
{
    const SampleBuffer mix = read_wav(files.mix);
    if (mix.channels() != 2)
        throw DataError(files.mix.string() + ": scene mixture must be stereo");
    const Electrodogram l = read_egf(files.egf_left);
    const Electrodogram r = read_egf(files.egf_right);
    if (l.amplitudes.rows() != m_channels || r.amplitudes.rows() != m_channels)
        throw DataError("scene " + files.name + " has " + std::to_string(l.amplitudes.rows()) +
                        "-channel electrodograms, model expects " + std::to_string(m_channels));
    TrainingExample ex;
    ex.noisy_left = mix.samples.col(0);
    ex.noisy_right = mix.samples.col(1);
    ex.targets.p_left = l.amplitudes;
    ex.targets.p_right = r.amplitudes;
    ex.targets.mask_left = read_egf(files.mask_left).amplitudes;
    ex.targets.mask_right = read_egf(files.mask_right).amplitudes;
    if (ex.targets.mask_left.rows() != l.amplitudes.rows() || ex.targets.mask_left.cols() != l.amplitudes.cols() ||
        ex.targets.mask_right.rows() != r.amplitudes.rows() || ex.targets.mask_right.cols() != r.amplitudes.cols())
        throw DataError("scene " + files.name + ": selection masks do not match the electrodograms");
    return ex;
}

Renderer make_renderer(const std::string& spec, const fs::path& base_dir)
{
    if (spec == "parametric")
        return Renderer::parametric();
    if (spec.rfind("brir:", 0) == 0) {
        const auto files = split_list(spec.substr(5));
        if (files.empty() || files.size() > 2)
            throw UsageError("renderer '" + spec + "': expected brir:TARGET.wav[,NOISE.wav]");
        const auto load = [&](const std::string& f) {
            const fs::path p = resolve(base_dir, f);
            if (!fs::exists(p))
                throw UsageError("impulse response " + p.string() + " does not exist");
            SampleBuffer b = read_wav(p);
            if (b.channels() != 2)
                throw DataError(p.string() + ": impulse response must be stereo");
            return b.rate == kRate ? b : resample(b, kRate);
        };
        SampleBuffer target = load(files[0]);
        SampleBuffer noise = files.size() == 2 ? load(files[1]) : target;
        return Renderer::brir(std::move(target), std::move(noise));
    }
    throw UsageError("unknown renderer '" + spec + "' (expected parametric or brir:...)");
}

std::vector<ManifestEntry> read_manifest(const fs::path& path)
{
    std::ifstream is(path);
    if (!is)
        throw UsageError("cannot open scene manifest " + path.string());
    std::vector<ManifestEntry> out;
    std::string raw;
    for (int line_no = 1; std::getline(is, raw); ++line_no) {
        const std::string where = path.string() + ":" + std::to_string(line_no);
        std::istringstream ls(raw.substr(0, raw.find('#')));
        std::string keyword;
        if (!(ls >> keyword))
            continue;
        ManifestEntry e;
        e.line = line_no;
        if (keyword != "scene" || !(ls >> e.target >> e.noise))
            throw UsageError(where + ": expected 'scene TARGET NOISE az_t=.. az_n=.. snr=.. [renderer=..]'");
        char name[32];
        std::snprintf(name, sizeof name, "scene_%04zu", out.size());
        e.name = name;
        e.renderer.clear();
        bool have_az_n = false, have_snr = false;
        for (std::string field; ls >> field;) {
            const auto eq = field.find('=');
            if (eq == std::string::npos)
                throw UsageError(where + ": expected key=value, got '" + field + "'");
            const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
            const auto number = [&] {
                try {
                    std::size_t used = 0;
                    const double v = std::stod(value, &used);
                    if (used == value.size())
                        return v;
                } catch (const std::exception&) {
                }
                throw UsageError(where + ": " + key + " needs a number, got '" + value + "'");
            };
            if (key == "az_t")
                e.target_azimuth = number();
            else if (key == "az_n") {
                e.noise_azimuth = number();
                have_az_n = true;
            } else if (key == "snr") {
                e.snr_db = value == "inf" ? std::numeric_limits<double>::infinity() : number();
                have_snr = true;
            } else if (key == "renderer")
                e.renderer = value;
            else if (key == "name")
                e.name = value;
            else
                throw UsageError(where + ": unknown field '" + key + "'");
        }
        if (!have_az_n || !have_snr)
            throw UsageError(where + ": az_n and snr are required");
        out.push_back(std::move(e));
    }
    return out;
}

} // namespace bicilab
