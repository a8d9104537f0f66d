#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "xtrace/core.hpp"

namespace xtrace {

struct ShapeMismatch : Error {
    using Error::Error;
};
struct NonFiniteLoss : Error {
    using Error::Error;
};
struct EmptyTrainSet : Error {
    using Error::Error;
};
struct CheckpointError : Error {
    using Error::Error;
};

// Causal temporal-convolution stack with two evidential heads. Layer l uses
// dilation 2^l; outputs at position t depend only on inputs at positions <= t.
struct ModelConfig {
    int input_dim = kFeatureDim;
    int hidden_dim = 64;
    int temporal_layers = 2;
    int kernel_size = 5;
    std::uint64_t seed = 7;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Normal-Inverse-Gamma head output for one frame and one affect dimension.
// nu > 0, alpha > 1, beta > 0 are enforced by softplus output transforms.
struct EvidentialParams {
    double gamma = 0.0;
    double nu = 1.0;
    double alpha = 2.0;
    double beta = 1.0;
};

struct Moments {
    double mean = 0.0;
    double aleatoric_raw = 0.0;
    double epistemic_raw = 0.0;
};

// mean = gamma, aleatoric = beta/(alpha-1), epistemic = beta/(nu (alpha-1))
Moments moments(const EvidentialParams& p);

// Clamps the mean into [-1,1] and squashes raw variances into [0,1] with
// s(u) = u / (1+u); cumulative = s(epistemic_raw + aleatoric_raw).
AffectOutput to_affect_output(const Moments& valence, const Moments& arousal);

// negative log likelihood of the NIG evidential model for a single target
double evidential_nll(double y, const EvidentialParams& p);

struct TrainConfig {
    int epochs = 16;
    int batch_size = 8;
    double learning_rate = 2e-3;
    double lambda_reg = 0.01;  // evidential regularizer |y-gamma| (2 nu + alpha)
    double lambda_ccc = 0.5;   // 1 - CCC(batch) agreement term
    std::uint64_t seed = 99;
};

double digamma(double x);

class Model {
public:
    explicit Model(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    std::size_t parameter_count() const { return params_.size(); }
    static std::size_t expected_parameter_count(const ModelConfig& cfg);

    std::span<const double> parameters() const { return params_; }
    std::span<double> parameters_mutable() { return params_; }

    struct Output {
        std::vector<EvidentialParams> valence;
        std::vector<EvidentialParams> arousal;
    };

    // window is rows x input_dim, row-major; rows deduced from the span size
    Output forward(std::span<const double> window) const;

    // only the final position; bitwise-identical to forward(window).back()
    void forward_last(std::span<const double> window, EvidentialParams& valence,
                      EvidentialParams& arousal) const;

    struct Batch {
        std::vector<std::span<const double>> windows;   // each rows_i x input_dim
        std::vector<std::span<const VAPoint>> targets;  // rows_i entries each
    };

    struct LossValue {
        double total = 0.0;
        double nll = 0.0;
        double reg = 0.0;
        double ccc_term = 0.0;
    };

    // Total loss = mean over dims of [ mean_pos(NLL + lambda_reg |y-g|(2nu+a))
    //                                  + lambda_ccc (1 - CCC_batch) ].
    // grad receives d total / d parameters (resized to parameter_count()).
    LossValue loss_and_grad(const Batch& batch, const TrainConfig& tc,
                            std::vector<double>& grad) const;
    double loss_value(const Batch& batch, const TrainConfig& tc) const;

    void save(std::ostream& out) const;
    void save_file(const std::string& path) const;
    static Model load(std::istream& in);
    static Model load_file(const std::string& path);

private:
    struct LayerSpec {
        int in_ch, out_ch, kernel, dilation;
        std::size_t w_off, b_off;
    };

    void build_layout();
    void init_parameters();

    ModelConfig cfg_;
    std::vector<double> params_;
    std::vector<LayerSpec> layers_;
    std::size_t head_w_off_[2] = {0, 0};  // [valence, arousal]
    std::size_t head_b_off_[2] = {0, 0};

    struct ForwardCache;
    void forward_cached(std::span<const double> window, ForwardCache& cache) const;
    LossValue loss_impl(const Batch& batch, const TrainConfig& tc,
                        std::vector<double>* grad) const;
    friend struct ModelBackprop;
};

struct TrainClip {
    std::vector<double> features;  // rows x input_dim, already normalized
    int rows = 0;
    std::vector<VAPoint> targets;  // per-position targets (clip label replicated)
};

TrainClip make_train_clip(std::vector<double> features, int input_dim, VAPoint label);

struct TrainResult {
    std::vector<double> epoch_loss;
};

// Deterministic Adam over shuffled clip batches. Throws NonFiniteLoss on
// divergence and EmptyTrainSet when clips is empty.
TrainResult train(Model& model, const std::vector<TrainClip>& clips, const TrainConfig& tc);

// Compares analytic gradients against central finite differences on a seeded
// subset of at least max_coords coordinates (all of them when the model is
// small). Returns the max relative error
//   |a - n| / max(|a|, |n|, 1e-3 * max_j |a_j|, 1e-12).
double grad_check(const Model& model, const Model::Batch& sample, const TrainConfig& tc,
                  double eps, int max_coords = 250, std::uint64_t seed = 17);

} // namespace xtrace
