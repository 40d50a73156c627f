#pragma once

#include "gesturemap/dataset.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace gmap {

using LatentPoint = std::array<double, 2>;

struct VaeConfig {
    int input_dim = static_cast<int>(kPoseDim);
    int hidden_layers = 4;
    int hidden_units = 64;
    int latent_dim = 2;
    int epochs = 200;
    double learning_rate = 1e-3;
    double kl_warmup_fraction = 0.25;
    int batch_size = 64;
    std::uint64_t rng_seed = 0;

    /// Throws ErrorCode::validation when an invariant is violated.
    void validate() const;
    /// Settings for large corpora: h = 512, 2000 epochs, lr 3e-5.
    static VaeConfig large_scale();
    bool operator==(const VaeConfig&) const = default;
};

/// KL weight for a zero-based epoch: linear ramp from 0 to 1 over the first
/// `warmup_fraction` of the epoch range, then 1.
double kl_weight(int epoch, int epochs, double warmup_fraction);

/// KL(N(mu, exp(logvar)) || N(0, 1)) summed over latent dimensions.
double kl_divergence(std::span<const double> mu, std::span<const double> logvar);

struct EpochStats {
    double reconstruction = 0.0;
    double kl = 0.0;
    double beta = 0.0;
    bool operator==(const EpochStats&) const = default;
};

/// Called after each epoch with the zero-based epoch and its trace entry.
using EpochCallback = std::function<void(int, const EpochStats&)>;

/// The optimized objective is the batch mean of the per-pose squared error
/// summed over coordinates plus the weighted KL term; `reconstruction`
/// reports the same error as a per-coordinate MSE.
struct LossTerms {
    double reconstruction = 0.0;  ///< per-coordinate MSE over the batch
    double kl = 0.0;              ///< batch mean of per-sample KL
    double total = 0.0;           ///< w_rec * input_dim * reconstruction + w_kl * kl
};

struct LossWeights {
    double reconstruction = 1.0;
    double kl = 1.0;
};

struct LatentPath {
    std::string sequence_id;
    std::vector<LatentPoint> points;
};

/// Fully connected VAE with ReLU hidden layers: the encoder maps the input
/// through `hidden_layers` layers of `hidden_units` to linear mean and
/// log-variance heads; the decoder mirrors it back to the input dimension.
/// Parameters live in one flat array, layer by layer (weights row-major,
/// then biases).
class VaeModel {
public:
    /// Fresh model with uniform fan-in initialization from `config.rng_seed`.
    static VaeModel initialize(const VaeConfig& config);
    static VaeModel from_parameters(const VaeConfig& config, std::vector<double> parameters,
                                    std::vector<EpochStats> trace = {});

    const VaeConfig& config() const noexcept { return config_; }
    std::span<const double> parameters() const noexcept { return params_; }
    std::span<double> mutable_parameters() noexcept { return params_; }
    const std::vector<EpochStats>& training_trace() const noexcept { return trace_; }
    std::size_t parameter_count() const noexcept { return params_.size(); }

    /// Posterior mean; no sampling.
    LatentPoint encode(std::span<const double> x) const;
    LatentPoint encode(const Pose& pose) const;
    LatentPath encode_sequence(const GestureSequence& sequence) const;
    /// Posterior (mean, log-variance) for a batch, one column per sample.
    std::pair<Eigen::MatrixXd, Eigen::MatrixXd> encode_batch(const Eigen::MatrixXd& x) const;

    std::vector<double> decode_vector(const LatentPoint& z) const;
    Pose decode(const LatentPoint& z) const;
    Eigen::MatrixXd decode_batch(const Eigen::MatrixXd& z) const;

    /// Loss on a batch (columns are samples) with fixed reparameterization
    /// noise (latent_dim x batch). Fills `gradient` when non-null.
    LossTerms loss(const Eigen::MatrixXd& batch, const Eigen::MatrixXd& noise,
                   const LossWeights& weights, std::vector<double>* gradient = nullptr) const;

    bool all_finite() const;

private:
    friend VaeModel train(const Eigen::MatrixXd&, const VaeConfig&, const EpochCallback&);

    struct Layer {
        int in = 0, out = 0;
        std::size_t offset = 0;  // weights (out x in, row-major), then out biases
    };

    explicit VaeModel(const VaeConfig& config);

    VaeConfig config_;
    std::vector<Layer> encoder_;  // hidden layers
    Layer mu_head_, logvar_head_;
    std::vector<Layer> decoder_;  // hidden layers followed by the output layer
    std::vector<double> params_;
    std::vector<EpochStats> trace_;
};

/// Column-per-pose matrix of the flattened frames of every sequence.
Eigen::MatrixXd pose_matrix(const Corpus& corpus);

/// Adam (0.9, 0.999, 1e-8) on per-batch mean [squared error + beta(epoch) * KL] with
/// reparameterized sampling. Deterministic for a given seed on one platform.
/// Throws ErrorCode::domain on a non-finite loss.
VaeModel train(const Eigen::MatrixXd& data, const VaeConfig& config, const EpochCallback& on_epoch = {});
/// Requires a normalized, nonempty corpus.
VaeModel train(const Corpus& corpus, const VaeConfig& config, const EpochCallback& on_epoch = {});

/// Mean per-sample MSE of decode(encode(x)) over the columns of `data`.
double reconstruction_mse(const VaeModel& model, const Eigen::MatrixXd& data);

struct GradientCheckResult {
    double max_relative_error = 0.0;
    double max_absolute_error = 0.0;
    std::vector<double> analytic;
    std::vector<double> numeric;
};

/// Compare analytic parameter gradients of the full loss (beta = 1, fixed
/// noise) against central finite differences. Relative error per parameter
/// is |a - n| / max(|a|, |n|, 1e-6).
GradientCheckResult gradient_check(const VaeModel& model, const Eigen::MatrixXd& batch,
                                   const Eigen::MatrixXd& noise, double step = 1e-5,
                                   const LossWeights& weights = {});

std::string serialize_model(const VaeModel& model);
VaeModel deserialize_model(std::string_view text);
VaeModel load_model_file(const std::string& path);
void save_model_file(const VaeModel& model, const std::string& path);

}  // namespace gmap
