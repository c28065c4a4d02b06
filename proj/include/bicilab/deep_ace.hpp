//
//  deep_ace.hpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//
//  End-to-end denoising sound coder. Each side runs
//
//      encoder -> antirectifier -> 1x1 projection  (latent, F channels)
//      latent  -> deep envelope detector           (M channels)
//      latent  -> bottleneck -> TCN separator       (S skip channels)
//      sigmoid(1x1 conv(separator)) * envelopes -> transposed conv -> sigmoid
//
//  The fused variant multiplies the two sides' latents before the separators
//  and the two separator outputs before the maskers; the envelope detectors
//  stay per side.
//

#pragma once

#include "bicilab/ace.hpp"
#include "bicilab/optim.hpp"
#include "bicilab/scene.hpp"
#include "bicilab/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace bicilab {

enum class Variant { monaural, bilateral, fused };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct ModelConfig {
    int encoder_filters = 64;
    int filter_length = 32;
    int bottleneck_channels = 64;
    int hidden_channels = 128;
    int skip_channels = 32;
    int kernel_size = 3;
    int blocks_per_repeat = 8;
    int repeats = 3;
    std::array<int, 3> ded_channels{128, 64, 22};
    int m_channels = 22;
    int stride = 16;

    /// Full-size configuration (22 electrodes, 1000 latent frames/s at 16 kHz).
    static ModelConfig standard() { return {}; }
    /// Desk-scale configuration used for training checks: 4 electrodes, stride 4.
    static ModelConfig reduced();

    void validate() const;
    Eigen::Index latent_frames(Eigen::Index samples) const;
    /// Separator receptive field in latent frames.
    Eigen::Index receptive_field() const;
    double frame_rate(double sample_rate) const { return sample_rate / stride; }
};

/// Named trainable tensors in creation order.
class ModelParams {
public:
    ModelParams() = default;
    ModelParams(Variant variant, const ModelConfig& config, std::uint64_t seed);

    Variant variant() const { return variant_; }
    const ModelConfig& config() const { return config_; }

    const nn::Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.contains(name); }
    const std::vector<std::string>& names() const { return names_; }
    std::vector<nn::Tensor>& tensors() { return tensors_; }
    const std::vector<nn::Tensor>& tensors() const { return tensors_; }
    Eigen::Index count() const;

    /// Deep copy (fresh leaves).
    ModelParams clone() const;
    void zero_grad();

    /// Sides present in this variant ("mono" or "left"/"right").
    std::vector<std::string> sides() const;

    std::vector<nn::NamedArray> to_arrays() const;
    /// Replaces values from named arrays; names and shapes must match exactly.
    void load_arrays(const std::vector<nn::NamedArray>& arrays);

private:
    void add(const std::string& name, nn::Shape shape, Eigen::VectorXd values);

    Variant variant_ = Variant::fused;
    ModelConfig config_;
    std::vector<std::string> names_;
    std::vector<nn::Tensor> tensors_;
    std::map<std::string, std::size_t> index_;
};

/// Copies every left-side parameter onto its right-side counterpart.
void mirror_left_to_right(ModelParams& params);

// Building blocks, exposed for testing. `side` is "mono", "left" or "right".
nn::Tensor encode(const nn::Tensor& signal, const ModelParams& params, const std::string& side);
nn::Tensor deep_envelope_detector(const nn::Tensor& latent, const ModelParams& params, const std::string& side);
nn::Tensor separate(const nn::Tensor& latent, const ModelParams& params, const std::string& side);
nn::Tensor fuse(const nn::Tensor& a, const nn::Tensor& b);

struct MaskerOutput {
    nn::Tensor p;
    nn::Tensor logits;
};
MaskerOutput mask_and_decode(const nn::Tensor& separated, const nn::Tensor& envelopes, const ModelParams& params,
                             const std::string& side);

struct ForwardResult {
    MaskerOutput left;
    /// Undefined for the monaural variant.
    MaskerOutput right;
};

/// `left` and `right` are mono sample vectors; `right` is ignored for the
/// monaural variant.
ForwardResult forward(const ModelParams& params, const Eigen::VectorXd& left, const Eigen::VectorXd& right);

struct LossBreakdown {
    double mse_left = 0.0;
    double mse_right = 0.0;
    double bce_left = 0.0;
    double bce_right = 0.0;
    double total = 0.0;
};

/// Clean-reference targets for one scene (M x T each).
struct LossTargets {
    Eigen::MatrixXd p_left;
    Eigen::MatrixXd mask_left;
    Eigen::MatrixXd p_right;
    Eigen::MatrixXd mask_right;
};

struct LossResult {
    nn::Tensor total;
    LossBreakdown breakdown;
};

/// MSE(p, p_clean) + alpha * BCE(logits, clean mask) summed over sides.
/// Prediction and target are both truncated to the shorter frame count.
LossResult compute_loss(const ForwardResult& out, const LossTargets& targets, double alpha = 1.0);

/// One training scene: noisy ear signals and the clean ACE references.
struct TrainingExample {
    Eigen::VectorXd noisy_left;
    Eigen::VectorXd noisy_right;
    LossTargets targets;
};

TrainingExample make_training_example(const Scene& scene);

/// Validation-plateau bookkeeping: halve the learning rate after
/// `lr_patience` epochs without improvement, stop after `stop_patience`.
class PlateauSchedule {
public:
    struct Event {
        bool improved = false;
        bool lr_reduced = false;
        bool stop = false;
    };

    PlateauSchedule() = default;
    PlateauSchedule(double lr, int lr_patience = 3, double factor = 0.5, int stop_patience = 5)
        : lr_(lr), lr_patience_(lr_patience), factor_(factor), stop_patience_(stop_patience)
    {
    }

    Event observe(double val_loss);

    double lr() const { return lr_; }
    double best() const { return best_; }
    int epochs_seen() const { return epochs_; }
    int best_epoch() const { return best_epoch_; }

    // Checkpoint support.
    struct State {
        double lr, best;
        int epochs, best_epoch, wait_lr, wait_stop;
    };
    State state() const { return {lr_, best_, epochs_, best_epoch_, wait_lr_, wait_stop_}; }
    void restore(const State& s);

private:
    double lr_ = 1e-3;
    int lr_patience_ = 3;
    double factor_ = 0.5;
    int stop_patience_ = 5;
    double best_ = std::numeric_limits<double>::infinity();
    int epochs_ = 0;
    int best_epoch_ = 0;
    int wait_lr_ = 0;
    int wait_stop_ = 0;
};

struct TrainOptions {
    double lr = 1e-3;
    int max_epochs = 100;
    int batch_size = 2;
    int lr_patience = 3;
    double lr_factor = 0.5;
    int stop_patience = 5;
    double alpha = 1.0;
    /// Optional cap on optimizer steps (desk-scale runs).
    std::optional<long> max_steps;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
    bool improved = false;
    bool lr_reduced = false;
};

/// Everything needed to continue training after an interruption.
struct TrainingState {
    ModelParams params;
    ModelParams best_params;
    nn::AdamState adam;
    PlateauSchedule schedule;
    std::vector<EpochRecord> history;
    long steps = 0;
    bool finished = false;
};

struct FitResult {
    ModelParams params;
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    long steps = 0;
    bool diverged = false;
    std::string diagnostic;
    /// Mean training loss of the very first batch, before any update.
    double initial_loss = 0.0;
};

using EpochCallback = std::function<void(const TrainingState&)>;

/// Adam training with plateau LR halving and early stopping; returns the
/// best-validation parameters. Deterministic given `seed`. When `resume`
/// is given, training continues from that state and it is updated in place.
FitResult fit(Variant variant, const ModelConfig& config, const std::vector<TrainingExample>& train,
              const std::vector<TrainingExample>& validation, const TrainOptions& options, std::uint64_t seed,
              TrainingState* resume = nullptr, const EpochCallback& on_epoch = {});

/// Mean loss over examples without recording a graph.
double evaluate_loss(const ModelParams& params, const std::vector<TrainingExample>& examples, double alpha = 1.0);

/// Forward pass without a graph, returning p matrices (M x T) per side.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> denoise(const ModelParams& params, const Eigen::VectorXd& left,
                                                    const Eigen::VectorXd& right);

// Model persistence: DWT weights at `path`, config/variant sidecar at `path` + ".model".
void save_model(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_model(const std::filesystem::path& path);
void write_model_manifest(const std::filesystem::path& path, Variant variant, const ModelConfig& config);
std::pair<Variant, ModelConfig> read_model_manifest(const std::filesystem::path& path);

// Checkpoints: `dir`/checkpoint.dwt (params, best params, Adam moments) plus checkpoint.state.
void save_checkpoint(const std::filesystem::path& dir, const TrainingState& state);
TrainingState load_checkpoint(const std::filesystem::path& dir);

/// Row-major flattening of an M x T matrix, matching tensor layout.
Eigen::VectorXd flatten_rows(const Eigen::MatrixXd& m);

} // namespace bicilab
