//
//  deep_ace.cpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#include "bicilab/deep_ace.hpp"
#include "bicilab/config.hpp"
#include "bicilab/error.hpp"
#include "bicilab/log.hpp"
#include "bicilab/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace bicilab {

using nn::Tensor;

std::string variant_name(Variant v)
{
    switch (v) {
    case Variant::monaural:
        return "monaural";
    case Variant::bilateral:
        return "bilateral";
    case Variant::fused:
        return "fused";
    }
    return "fused";
}

Variant variant_from_name(const std::string& name)
{
    if (name == "monaural")
        return Variant::monaural;
    if (name == "bilateral")
        return Variant::bilateral;
    if (name == "fused")
        return Variant::fused;
    throw std::invalid_argument("unknown model variant '" + name + "' (expected monaural, bilateral or fused)");
}

// ---------------------------------------------------------------------------
// ModelConfig

ModelConfig ModelConfig::reduced()
{
    ModelConfig c;
    c.encoder_filters = 8;
    c.filter_length = 8;
    c.stride = 4;
    c.bottleneck_channels = 8;
    c.hidden_channels = 16;
    c.skip_channels = 8;
    c.kernel_size = 3;
    c.blocks_per_repeat = 2;
    c.repeats = 1;
    c.m_channels = 4;
    c.ded_channels = {16, 8, 4};
    return c;
}

void ModelConfig::validate() const
{
    const int dims[] = {encoder_filters, filter_length, bottleneck_channels, hidden_channels, skip_channels,
                        kernel_size, blocks_per_repeat, repeats, ded_channels[0], ded_channels[1], ded_channels[2],
                        m_channels, stride};
    for (int d : dims)
        if (d <= 0)
            throw std::invalid_argument("ModelConfig: all dimensions must be positive");
    if (stride > filter_length)
        throw std::invalid_argument("ModelConfig: stride " + std::to_string(stride) + " exceeds filter length " +
                                    std::to_string(filter_length));
    if (ded_channels[2] != m_channels)
        throw std::invalid_argument("ModelConfig: last envelope-detector layer must have M=" +
                                    std::to_string(m_channels) + " channels");
    if (kernel_size % 2 == 0)
        throw std::invalid_argument("ModelConfig: kernel size must be odd for length-preserving padding");
}

Eigen::Index ModelConfig::latent_frames(Eigen::Index samples) const
{
    if (samples < filter_length)
        return 0;
    return (samples - filter_length) / stride + 1;
}

Eigen::Index ModelConfig::receptive_field() const
{
    return 1 + static_cast<Eigen::Index>(kernel_size - 1) * ((Eigen::Index{1} << blocks_per_repeat) - 1) * repeats;
}

// ---------------------------------------------------------------------------
// ModelParams

namespace {

std::string block_prefix(const std::string& side, int r, int b)
{
    return side + ".tcn.r" + std::to_string(r) + ".b" + std::to_string(b);
}

} // namespace

ModelParams::ModelParams(Variant variant, const ModelConfig& config, std::uint64_t seed)
    : variant_(variant), config_(config)
{
    config_.validate();
    Rng rng(seed);
    const auto uniform = [&](nn::Shape shape, double fan_in) {
        const double bound = 1.0 / std::sqrt(fan_in);
        return rng.uniform_vector(nn::numel(shape), -bound, bound);
    };

    const int F = config.encoder_filters;
    const int P = config.kernel_size;
    const int B = config.bottleneck_channels;
    const int H = config.hidden_channels;
    const int S = config.skip_channels;
    const int M = config.m_channels;
    for (const std::string& s : sides()) {
        add(s + ".encoder.weight", {F, 1, config.filter_length}, uniform({F, 1, config.filter_length}, config.filter_length));
        add(s + ".encoder.proj.weight", {F, 2 * F, 1}, uniform({F, 2 * F, 1}, 2.0 * F));
        add(s + ".encoder.proj.bias", {F}, uniform({F}, 2.0 * F));

        int in = F;
        for (int i = 0; i < 3; ++i) {
            const int out = config.ded_channels[static_cast<std::size_t>(i)];
            const std::string p = s + ".ded." + std::to_string(i);
            add(p + ".weight", {out, in, P}, uniform({out, in, P}, static_cast<double>(in) * P));
            add(p + ".bias", {out}, uniform({out}, static_cast<double>(in) * P));
            if (i < 2)
                add(p + ".prelu", {1}, Eigen::VectorXd::Constant(1, 0.25));
            in = out;
        }

        add(s + ".bottleneck.weight", {B, F, 1}, uniform({B, F, 1}, F));
        add(s + ".bottleneck.bias", {B}, uniform({B}, F));
        for (int r = 0; r < config.repeats; ++r) {
            for (int b = 0; b < config.blocks_per_repeat; ++b) {
                const std::string p = block_prefix(s, r, b);
                const bool last = r == config.repeats - 1 && b == config.blocks_per_repeat - 1;
                add(p + ".in.weight", {H, B, 1}, uniform({H, B, 1}, B));
                add(p + ".in.bias", {H}, uniform({H}, B));
                add(p + ".prelu1", {1}, Eigen::VectorXd::Constant(1, 0.25));
                add(p + ".norm1.gamma", {H}, Eigen::VectorXd::Ones(H));
                add(p + ".norm1.beta", {H}, Eigen::VectorXd::Zero(H));
                add(p + ".dw.weight", {H, 1, P}, uniform({H, 1, P}, P));
                add(p + ".dw.bias", {H}, uniform({H}, P));
                add(p + ".prelu2", {1}, Eigen::VectorXd::Constant(1, 0.25));
                add(p + ".norm2.gamma", {H}, Eigen::VectorXd::Ones(H));
                add(p + ".norm2.beta", {H}, Eigen::VectorXd::Zero(H));
                if (!last) {
                    add(p + ".res.weight", {B, H, 1}, uniform({B, H, 1}, H));
                    add(p + ".res.bias", {B}, uniform({B}, H));
                }
                add(p + ".skip.weight", {S, H, 1}, uniform({S, H, 1}, H));
                add(p + ".skip.bias", {S}, uniform({S}, H));
            }
        }

        add(s + ".masker.weight", {M, S, 1}, uniform({M, S, 1}, S));
        add(s + ".masker.bias", {M}, uniform({M}, S));
        add(s + ".decoder.weight", {M, M, 1}, uniform({M, M, 1}, M));
        add(s + ".decoder.bias", {M}, uniform({M}, M));
    }
}

void ModelParams::add(const std::string& name, nn::Shape shape, Eigen::VectorXd values)
{
    if (index_.contains(name))
        throw std::logic_error("duplicate parameter name " + name);
    index_[name] = tensors_.size();
    names_.push_back(name);
    tensors_.push_back(Tensor::parameter(std::move(shape), std::move(values)));
}

const Tensor& ModelParams::at(const std::string& name) const
{
    const auto it = index_.find(name);
    if (it == index_.end())
        throw std::invalid_argument("model has no parameter '" + name + "' (variant " + variant_name(variant_) + ")");
    return tensors_[it->second];
}

Eigen::Index ModelParams::count() const
{
    Eigen::Index n = 0;
    for (const auto& t : tensors_)
        n += t.numel();
    return n;
}

ModelParams ModelParams::clone() const
{
    ModelParams out;
    out.variant_ = variant_;
    out.config_ = config_;
    for (std::size_t i = 0; i < tensors_.size(); ++i)
        out.add(names_[i], tensors_[i].shape(), tensors_[i].value());
    return out;
}

void ModelParams::zero_grad()
{
    for (auto& t : tensors_)
        t.zero_grad();
}

std::vector<std::string> ModelParams::sides() const
{
    if (variant_ == Variant::monaural)
        return {"mono"};
    return {"left", "right"};
}

std::vector<nn::NamedArray> ModelParams::to_arrays() const
{
    std::vector<nn::NamedArray> out;
    out.reserve(tensors_.size());
    for (std::size_t i = 0; i < tensors_.size(); ++i)
        out.push_back({names_[i], tensors_[i].shape(), tensors_[i].value()});
    return out;
}

void ModelParams::load_arrays(const std::vector<nn::NamedArray>& arrays)
{
    if (arrays.size() != tensors_.size())
        throw DataError("weights hold " + std::to_string(arrays.size()) + " arrays, model expects " +
                        std::to_string(tensors_.size()));
    for (std::size_t i = 0; i < arrays.size(); ++i) {
        if (arrays[i].name != names_[i] || arrays[i].shape != tensors_[i].shape())
            throw DataError("weight '" + arrays[i].name + "' " + nn::shape_string(arrays[i].shape) +
                            " does not match model parameter '" + names_[i] + "' " +
                            nn::shape_string(tensors_[i].shape()));
        tensors_[i].mutable_value() = arrays[i].values;
    }
}

void mirror_left_to_right(ModelParams& params)
{
    if (params.variant() == Variant::monaural)
        throw std::invalid_argument("mirror_left_to_right: monaural model has a single side");
    for (const std::string& name : params.names()) {
        if (name.rfind("left.", 0) != 0)
            continue;
        Tensor right = params.at("right." + name.substr(5));
        right.mutable_value() = params.at(name).value();
    }
}

// ---------------------------------------------------------------------------
// Forward pass

namespace {

Tensor conv(const Tensor& x, const ModelParams& p, const std::string& prefix, nn::Conv1dOptions opt = {})
{
    const std::string bias = prefix + ".bias";
    return nn::conv1d(x, p.at(prefix + ".weight"), p.contains(bias) ? p.at(bias) : Tensor{}, opt);
}

void check_side(const ModelParams& params, const std::string& side)
{
    const auto sides = params.sides();
    if (std::find(sides.begin(), sides.end(), side) == sides.end())
        throw std::invalid_argument("side '" + side + "' not present in a " + variant_name(params.variant()) + " model");
}

} // namespace

Tensor encode(const Tensor& signal, const ModelParams& params, const std::string& side)
{
    check_side(params, side);
    const ModelConfig& c = params.config();
    if (signal.rank() != 2 || signal.dim(0) != 1)
        throw std::invalid_argument("encode: expected a [1 x samples] signal, got " + nn::shape_string(signal.shape()));
    if (signal.dim(1) < c.filter_length)
        throw std::invalid_argument("encode: segment of " + std::to_string(signal.dim(1)) +
                                    " samples is shorter than the filter length " + std::to_string(c.filter_length));
    nn::Conv1dOptions opt;
    opt.stride = c.stride;
    const Tensor basis = nn::conv1d(signal, params.at(side + ".encoder.weight"), {}, opt);
    return conv(nn::antirectifier(basis), params, side + ".encoder.proj");
}

Tensor deep_envelope_detector(const Tensor& latent, const ModelParams& params, const std::string& side)
{
    check_side(params, side);
    const ModelConfig& c = params.config();
    if (latent.rank() != 2 || latent.dim(0) != c.encoder_filters)
        throw std::invalid_argument("deep_envelope_detector: expected " + std::to_string(c.encoder_filters) +
                                    " input channels, got " + nn::shape_string(latent.shape()));
    nn::Conv1dOptions opt;
    opt.padding = (c.kernel_size - 1) / 2;
    Tensor x = latent;
    for (int i = 0; i < 3; ++i) {
        const std::string prefix = side + ".ded." + std::to_string(i);
        x = conv(x, params, prefix, opt);
        if (i < 2)
            x = nn::prelu(x, params.at(prefix + ".prelu"));
    }
    return x;
}

Tensor separate(const Tensor& latent, const ModelParams& params, const std::string& side)
{
    check_side(params, side);
    const ModelConfig& c = params.config();
    if (latent.rank() != 2 || latent.dim(0) != c.encoder_filters)
        throw std::invalid_argument("separate: expected " + std::to_string(c.encoder_filters) +
                                    " input channels, got " + nn::shape_string(latent.shape()));
    Tensor x = conv(latent, params, side + ".bottleneck");
    Tensor skip_sum;
    for (int r = 0; r < c.repeats; ++r) {
        for (int b = 0; b < c.blocks_per_repeat; ++b) {
            const std::string p = block_prefix(side, r, b);
            Tensor h = conv(x, params, p + ".in");
            h = nn::prelu(h, params.at(p + ".prelu1"));
            h = nn::global_layer_norm(h, params.at(p + ".norm1.gamma"), params.at(p + ".norm1.beta"));
            nn::Conv1dOptions dw;
            dw.dilation = Eigen::Index{1} << b;
            dw.padding = dw.dilation * (c.kernel_size - 1) / 2;
            dw.groups = c.hidden_channels;
            h = conv(h, params, p + ".dw", dw);
            h = nn::prelu(h, params.at(p + ".prelu2"));
            h = nn::global_layer_norm(h, params.at(p + ".norm2.gamma"), params.at(p + ".norm2.beta"));
            const Tensor skip = conv(h, params, p + ".skip");
            skip_sum = skip_sum.defined() ? nn::add(skip_sum, skip) : skip;
            if (params.contains(p + ".res.weight"))
                x = nn::add(x, conv(h, params, p + ".res"));
        }
    }
    return skip_sum;
}

Tensor fuse(const Tensor& a, const Tensor& b)
{
    if (!a.defined() || !b.defined() || a.shape() != b.shape())
        throw std::invalid_argument("fuse: operands must have identical shapes (" +
                                    (a.defined() ? nn::shape_string(a.shape()) : std::string("undefined")) + " vs " +
                                    (b.defined() ? nn::shape_string(b.shape()) : std::string("undefined")) + ")");
    return nn::mul(a, b);
}

MaskerOutput mask_and_decode(const Tensor& separated, const Tensor& envelopes, const ModelParams& params,
                             const std::string& side)
{
    check_side(params, side);
    const ModelConfig& c = params.config();
    if (separated.rank() != 2 || envelopes.rank() != 2 || separated.dim(0) != c.skip_channels ||
        envelopes.dim(0) != c.m_channels || separated.dim(1) != envelopes.dim(1))
        throw std::invalid_argument("mask_and_decode: expected [" + std::to_string(c.skip_channels) + " x T] and [" +
                                    std::to_string(c.m_channels) + " x T], got " + nn::shape_string(separated.shape()) +
                                    " and " + nn::shape_string(envelopes.shape()));
    MaskerOutput out;
    out.logits = conv(separated, params, side + ".masker");
    const Tensor masked = nn::mul(nn::sigmoid(out.logits), envelopes);
    out.p = nn::sigmoid(nn::conv1d_transposed(masked, params.at(side + ".decoder.weight"),
                                              params.at(side + ".decoder.bias"), 1));
    return out;
}

ForwardResult forward(const ModelParams& params, const Eigen::VectorXd& left, const Eigen::VectorXd& right)
{
    const auto signal = [](const Eigen::VectorXd& x) { return Tensor::constant({1, x.size()}, x); };
    ForwardResult out;
    switch (params.variant()) {
    case Variant::monaural: {
        const Tensor latent = encode(signal(left), params, "mono");
        out.left = mask_and_decode(separate(latent, params, "mono"), deep_envelope_detector(latent, params, "mono"),
                                   params, "mono");
        break;
    }
    case Variant::bilateral: {
        if (left.size() != right.size())
            throw std::invalid_argument("forward: left and right inputs differ in length");
        for (const std::string side : {"left", "right"}) {
            const Tensor latent = encode(signal(side == "left" ? left : right), params, side);
            (side == "left" ? out.left : out.right) = mask_and_decode(
                separate(latent, params, side), deep_envelope_detector(latent, params, side), params, side);
        }
        break;
    }
    case Variant::fused: {
        if (left.size() != right.size())
            throw std::invalid_argument("forward: left and right inputs differ in length");
        const Tensor latent_l = encode(signal(left), params, "left");
        const Tensor latent_r = encode(signal(right), params, "right");
        const Tensor env_l = deep_envelope_detector(latent_l, params, "left");
        const Tensor env_r = deep_envelope_detector(latent_r, params, "right");
        const Tensor latent_fused = fuse(latent_l, latent_r);
        const Tensor separated_fused =
            fuse(separate(latent_fused, params, "left"), separate(latent_fused, params, "right"));
        out.left = mask_and_decode(separated_fused, env_l, params, "left");
        out.right = mask_and_decode(separated_fused, env_r, params, "right");
        break;
    }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Loss

Eigen::VectorXd flatten_rows(const Eigen::MatrixXd& m)
{
    const nn::RowMatrix rm = m;
    return Eigen::Map<const Eigen::VectorXd>(rm.data(), rm.size());
}

namespace {

struct SideLoss {
    Tensor mse;
    Tensor bce;
};

SideLoss side_loss(const MaskerOutput& out, const Eigen::MatrixXd& p_clean, const Eigen::MatrixXd& mask)
{
    if (p_clean.rows() != out.p.dim(0) || mask.rows() != out.p.dim(0) || mask.cols() != p_clean.cols())
        throw std::invalid_argument("compute_loss: target has " + std::to_string(p_clean.rows()) +
                                    " channels, prediction " + nn::shape_string(out.p.shape()));
    const Eigen::Index frames = std::min(out.p.dim(1), p_clean.cols());
    if (frames < 1)
        throw std::invalid_argument("compute_loss: no overlapping frames between prediction and target");
    return {nn::mse(nn::slice_columns(out.p, frames), flatten_rows(p_clean.leftCols(frames))),
            nn::bce_with_logits(nn::slice_columns(out.logits, frames), flatten_rows(mask.leftCols(frames)))};
}

} // namespace

LossResult compute_loss(const ForwardResult& out, const LossTargets& targets, double alpha)
{
    LossResult r;
    const SideLoss left = side_loss(out.left, targets.p_left, targets.mask_left);
    r.breakdown.mse_left = left.mse.item();
    r.breakdown.bce_left = left.bce.item();
    r.total = nn::add(left.mse, nn::scale(left.bce, alpha));
    if (out.right.p.defined()) {
        const SideLoss right = side_loss(out.right, targets.p_right, targets.mask_right);
        r.breakdown.mse_right = right.mse.item();
        r.breakdown.bce_right = right.bce.item();
        r.total = nn::add(nn::add(r.total, right.mse), nn::scale(right.bce, alpha));
    }
    r.breakdown.total = r.total.item();
    return r;
}

TrainingExample make_training_example(const Scene& scene)
{
    TrainingExample ex;
    ex.noisy_left = scene.audio.left.samples.col(0);
    ex.noisy_right = scene.audio.right.samples.col(0);
    ex.targets.p_left = scene.clean_left.electrodogram.amplitudes;
    ex.targets.mask_left = scene.clean_left.selection;
    ex.targets.p_right = scene.clean_right.electrodogram.amplitudes;
    ex.targets.mask_right = scene.clean_right.selection;
    return ex;
}

// ---------------------------------------------------------------------------
// Training

PlateauSchedule::Event PlateauSchedule::observe(double val_loss)
{
    Event ev;
    ++epochs_;
    if (val_loss < best_) {
        best_ = val_loss;
        best_epoch_ = epochs_;
        wait_lr_ = 0;
        wait_stop_ = 0;
        ev.improved = true;
        return ev;
    }
    ++wait_lr_;
    ++wait_stop_;
    if (wait_lr_ >= lr_patience_) {
        lr_ *= factor_;
        wait_lr_ = 0;
        ev.lr_reduced = true;
    }
    ev.stop = wait_stop_ >= stop_patience_;
    return ev;
}

void PlateauSchedule::restore(const State& s)
{
    lr_ = s.lr;
    best_ = s.best;
    epochs_ = s.epochs;
    best_epoch_ = s.best_epoch;
    wait_lr_ = s.wait_lr;
    wait_stop_ = s.wait_stop;
}

double evaluate_loss(const ModelParams& params, const std::vector<TrainingExample>& examples, double alpha)
{
    if (examples.empty())
        throw std::invalid_argument("evaluate_loss: no examples");
    nn::NoGradGuard no_grad;
    double total = 0.0;
    for (const auto& ex : examples)
        total += compute_loss(forward(params, ex.noisy_left, ex.noisy_right), ex.targets, alpha).breakdown.total;
    return total / static_cast<double>(examples.size());
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> denoise(const ModelParams& params, const Eigen::VectorXd& left,
                                                    const Eigen::VectorXd& right)
{
    nn::NoGradGuard no_grad;
    const ForwardResult out = forward(params, left, right);
    return {out.left.p.to_matrix(), out.right.p.defined() ? out.right.p.to_matrix() : Eigen::MatrixXd{}};
}

FitResult fit(Variant variant, const ModelConfig& config, const std::vector<TrainingExample>& train,
              const std::vector<TrainingExample>& validation, const TrainOptions& options, std::uint64_t seed,
              TrainingState* resume, const EpochCallback& on_epoch)
{
    if (train.empty() || validation.empty())
        throw std::invalid_argument("fit: training and validation sets must be non-empty");
    if (options.batch_size < 1 || options.max_epochs < 1)
        throw std::invalid_argument("fit: batch size and epoch limit must be positive");

    TrainingState local;
    TrainingState& st = resume ? *resume : local;
    if (st.params.names().empty()) {
        st.params = ModelParams(variant, config, seed);
        st.best_params = st.params.clone();
        st.schedule = PlateauSchedule(options.lr, options.lr_patience, options.lr_factor, options.stop_patience);
        st.adam = nn::AdamState{};
        st.adam.lr = options.lr;
    }

    FitResult result;
    std::vector<std::size_t> order(train.size());
    try {
        while (!st.finished && st.schedule.epochs_seen() < options.max_epochs) {
            const int epoch = st.schedule.epochs_seen() + 1;
            std::iota(order.begin(), order.end(), std::size_t{0});
            Rng shuffle(split_seed(seed, static_cast<std::uint64_t>(epoch)));
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[shuffle.below(i)]);

            double epoch_loss = 0.0;
            int batches = 0;
            bool step_limit = false;
            for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch_size)) {
                const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
                st.params.zero_grad();
                Tensor batch_loss;
                for (std::size_t i = start; i < stop; ++i) {
                    const TrainingExample& ex = train[order[i]];
                    const Tensor l = compute_loss(forward(st.params, ex.noisy_left, ex.noisy_right), ex.targets,
                                                  options.alpha)
                                         .total;
                    batch_loss = batch_loss.defined() ? nn::add(batch_loss, l) : l;
                }
                batch_loss = nn::scale(batch_loss, 1.0 / static_cast<double>(stop - start));
                const double value = batch_loss.item();
                if (!std::isfinite(value))
                    throw NumericalError("non-finite training loss at step " + std::to_string(st.steps + 1));
                if (st.steps == 0)
                    result.initial_loss = value;
                nn::backward(batch_loss);
                st.adam.lr = st.schedule.lr();
                nn::adam_step(st.params.tensors(), st.adam);
                ++st.steps;
                epoch_loss += value;
                ++batches;
                if (options.max_steps && st.steps >= *options.max_steps) {
                    step_limit = true;
                    break;
                }
            }

            EpochRecord rec;
            rec.epoch = epoch;
            rec.lr = st.schedule.lr();
            rec.train_loss = epoch_loss / batches;
            rec.val_loss = evaluate_loss(st.params, validation, options.alpha);
            if (!std::isfinite(rec.val_loss))
                throw NumericalError("non-finite validation loss in epoch " + std::to_string(epoch));
            const auto ev = st.schedule.observe(rec.val_loss);
            rec.improved = ev.improved;
            rec.lr_reduced = ev.lr_reduced;
            if (ev.improved)
                st.best_params = st.params.clone();
            st.history.push_back(rec);
            log().info("epoch {}: train {:.6g} val {:.6g} lr {:.3g}{}", epoch, rec.train_loss, rec.val_loss, rec.lr,
                       ev.lr_reduced ? " (lr halved)" : "");
            if (ev.stop || step_limit)
                st.finished = true;
            if (on_epoch)
                on_epoch(st);
        }
        st.finished = true;
    } catch (const NumericalError& e) {
        result.diverged = true;
        result.diagnostic = e.what();
        log().error("training diverged: {}", e.what());
    }

    result.params = st.best_params.clone();
    result.history = st.history;
    result.best_epoch = st.schedule.best_epoch();
    result.steps = st.steps;
    return result;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

std::string exact(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_config_lines(std::ostream& os, Variant variant, const ModelConfig& c)
{
    os << "variant = " << variant_name(variant) << '\n'
       << "encoder_filters = " << c.encoder_filters << '\n'
       << "filter_length = " << c.filter_length << '\n'
       << "bottleneck_channels = " << c.bottleneck_channels << '\n'
       << "hidden_channels = " << c.hidden_channels << '\n'
       << "skip_channels = " << c.skip_channels << '\n'
       << "kernel_size = " << c.kernel_size << '\n'
       << "blocks_per_repeat = " << c.blocks_per_repeat << '\n'
       << "repeats = " << c.repeats << '\n'
       << "ded_channels = " << c.ded_channels[0] << ',' << c.ded_channels[1] << ',' << c.ded_channels[2] << '\n'
       << "m_channels = " << c.m_channels << '\n'
       << "stride = " << c.stride << '\n';
}

std::pair<Variant, ModelConfig> config_from(const KeyValueConfig& kv)
{
    ModelConfig c;
    const auto i = [&](const char* key, int fallback) { return static_cast<int>(kv.get_long(key, fallback)); };
    c.encoder_filters = i("encoder_filters", c.encoder_filters);
    c.filter_length = i("filter_length", c.filter_length);
    c.bottleneck_channels = i("bottleneck_channels", c.bottleneck_channels);
    c.hidden_channels = i("hidden_channels", c.hidden_channels);
    c.skip_channels = i("skip_channels", c.skip_channels);
    c.kernel_size = i("kernel_size", c.kernel_size);
    c.blocks_per_repeat = i("blocks_per_repeat", c.blocks_per_repeat);
    c.repeats = i("repeats", c.repeats);
    c.m_channels = i("m_channels", c.m_channels);
    c.stride = i("stride", c.stride);
    const auto ded = kv.get_doubles("ded_channels", {128, 64, static_cast<double>(c.m_channels)});
    if (ded.size() != 3)
        throw DataError("ded_channels must list three layer widths");
    for (std::size_t k = 0; k < 3; ++k)
        c.ded_channels[k] = static_cast<int>(ded[k]);
    c.validate();
    return {variant_from_name(kv.get_or("variant", "fused")), c};
}

std::filesystem::path manifest_path(const std::filesystem::path& weights)
{
    return std::filesystem::path(weights.string() + ".model");
}

} // namespace

void write_model_manifest(const std::filesystem::path& path, Variant variant, const ModelConfig& config)
{
    std::ofstream os(path, std::ios::trunc);
    if (!os)
        throw DataError("cannot write model manifest " + path.string());
    write_config_lines(os, variant, config);
}

std::pair<Variant, ModelConfig> read_model_manifest(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path))
        throw DataError("missing model manifest " + path.string());
    return config_from(KeyValueConfig::load(path));
}

void save_model(const std::filesystem::path& path, const ModelParams& params)
{
    nn::write_dwt(path, params.to_arrays());
    write_model_manifest(manifest_path(path), params.variant(), params.config());
}

ModelParams load_model(const std::filesystem::path& path)
{
    const auto [variant, config] = read_model_manifest(manifest_path(path));
    ModelParams params(variant, config, 0);
    params.load_arrays(nn::read_dwt(path));
    return params;
}

void save_checkpoint(const std::filesystem::path& dir, const TrainingState& state)
{
    std::filesystem::create_directories(dir);
    std::vector<nn::NamedArray> arrays;
    for (const auto& a : state.params.to_arrays())
        arrays.push_back({"param/" + a.name, a.shape, a.values});
    for (const auto& a : state.best_params.to_arrays())
        arrays.push_back({"best/" + a.name, a.shape, a.values});
    const auto& names = state.params.names();
    for (std::size_t i = 0; i < state.adam.first_moment.size(); ++i) {
        const nn::Shape shape = state.params.tensors()[i].shape();
        arrays.push_back({"adam.m/" + names[i], shape, state.adam.first_moment[i]});
        arrays.push_back({"adam.v/" + names[i], shape, state.adam.second_moment[i]});
    }
    nn::write_dwt(dir / "checkpoint.dwt", arrays);

    std::ofstream os(dir / "checkpoint.state", std::ios::trunc);
    if (!os)
        throw DataError("cannot write checkpoint state in " + dir.string());
    write_config_lines(os, state.params.variant(), state.params.config());
    const auto s = state.schedule.state();
    os << "steps = " << state.steps << '\n'
       << "finished = " << (state.finished ? 1 : 0) << '\n'
       << "adam_steps = " << state.adam.step_count << '\n'
       << "adam_lr = " << exact(state.adam.lr) << '\n'
       << "schedule_lr = " << exact(s.lr) << '\n'
       << "schedule_best = " << exact(s.best) << '\n'
       << "schedule_epochs = " << s.epochs << '\n'
       << "schedule_best_epoch = " << s.best_epoch << '\n'
       << "schedule_wait_lr = " << s.wait_lr << '\n'
       << "schedule_wait_stop = " << s.wait_stop << '\n';
    for (const auto& h : state.history)
        os << "history = " << h.epoch << ',' << exact(h.train_loss) << ',' << exact(h.val_loss) << ',' << exact(h.lr)
           << ',' << (h.improved ? 1 : 0) << ',' << (h.lr_reduced ? 1 : 0) << '\n';
}

TrainingState load_checkpoint(const std::filesystem::path& dir)
{
    const KeyValueConfig kv = KeyValueConfig::load(dir / "checkpoint.state");
    const auto [variant, config] = config_from(kv);
    TrainingState st;
    st.params = ModelParams(variant, config, 0);
    st.best_params = ModelParams(variant, config, 0);

    std::map<std::string, nn::NamedArray> by_name;
    for (auto& a : nn::read_dwt(dir / "checkpoint.dwt"))
        by_name[a.name] = std::move(a);
    const auto take = [&](const std::string& prefix) {
        std::vector<nn::NamedArray> out;
        for (const auto& name : st.params.names()) {
            auto it = by_name.find(prefix + name);
            if (it == by_name.end())
                throw DataError("checkpoint lacks array " + prefix + name);
            out.push_back({name, it->second.shape, it->second.values});
        }
        return out;
    };
    st.params.load_arrays(take("param/"));
    st.best_params.load_arrays(take("best/"));
    st.adam.step_count = kv.get_long("adam_steps", 0);
    st.adam.lr = kv.get_double("adam_lr", 1e-3);
    if (st.adam.step_count > 0) {
        for (const auto& a : take("adam.m/"))
            st.adam.first_moment.push_back(a.values);
        for (const auto& a : take("adam.v/"))
            st.adam.second_moment.push_back(a.values);
    }
    st.steps = kv.get_long("steps", 0);
    st.finished = kv.get_long("finished", 0) != 0;
    PlateauSchedule::State s{};
    s.lr = kv.get_double("schedule_lr", 1e-3);
    s.best = kv.get_double("schedule_best", std::numeric_limits<double>::infinity());
    s.epochs = static_cast<int>(kv.get_long("schedule_epochs", 0));
    s.best_epoch = static_cast<int>(kv.get_long("schedule_best_epoch", 0));
    s.wait_lr = static_cast<int>(kv.get_long("schedule_wait_lr", 0));
    s.wait_stop = static_cast<int>(kv.get_long("schedule_wait_stop", 0));
    st.schedule.restore(s);
    for (const auto& line : kv.get_all("history")) {
        const auto v = parse_number_list(line);
        if (v.size() != 6)
            throw DataError("malformed history line in checkpoint: " + line);
        st.history.push_back({static_cast<int>(v[0]), v[1], v[2], v[3], v[4] != 0.0, v[5] != 0.0});
    }
    return st;
}

} // namespace bicilab
