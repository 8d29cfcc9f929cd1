#pragma once

#include "ladc/batch.hpp"
#include "ladc/dataset.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string_view>
#include <vector>

namespace ladc {

// plain, crt: weights and bias train. lws: scale only. lws_plus: scale and shift.
enum class TrainMode { plain, crt, lws, lws_plus };

std::string_view to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view text);

/// Linear softmax classifier with per-class logit adjustment.
///
/// Base logit phi_i = weights_i . x + bias_i; the adjusted logit is
/// scale_i * phi_i + shift_i. Plain and cRT classifiers keep scale = 1 and
/// shift = 0, LWS keeps shift = 0.
struct LinearClassifier {
    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;
    Eigen::VectorXd scale;
    Eigen::VectorXd shift;
    TrainMode mode = TrainMode::plain;

    static LinearClassifier zeros(std::size_t num_classes, std::size_t dim);

    std::size_t num_classes() const noexcept { return static_cast<std::size_t>(weights.rows()); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(weights.cols()); }

    bool operator==(const LinearClassifier& other) const;
};

Eigen::VectorXd base_logits(const LinearClassifier& classifier, const Eigen::VectorXd& feature);
Eigen::VectorXd logits(const LinearClassifier& classifier, const Eigen::VectorXd& feature);

// Argmax of the adjusted logits, lowest index on ties.
std::size_t predict(const LinearClassifier& classifier, const Eigen::VectorXd& feature);
std::vector<std::uint32_t> predict_all(const LinearClassifier& classifier, const FeatureDataset& dataset);

struct LrDrop {
    std::size_t epoch = 0;
    double factor = 0.1;
};

struct TrainConfig {
    std::size_t epochs = 30;
    double base_lr = 0.1;
    std::vector<LrDrop> lr_drops = {{10, 0.1}, {20, 0.1}};
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::size_t batch_size = 128;
    TrainMode mode = TrainMode::plain;
    std::uint64_t seed = 0;
    // Apply weight decay to scale and shift as well.
    bool decay_adjustments = false;

    // Throws InvalidConfig.
    void validate() const;
};

struct TrainResult {
    LinearClassifier classifier;
    std::vector<double> epoch_loss;
};

struct Gradients {
    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;
    Eigen::VectorXd scale;
    Eigen::VectorXd shift;
};

// Mean softmax cross-entropy of the adjusted logits over the batch.
double cross_entropy(const LinearClassifier& classifier, const Batch& batch);

// Gradient of cross_entropy with respect to every parameter (no weight decay).
Gradients loss_gradients(const LinearClassifier& classifier, const Batch& batch, double* loss = nullptr);

// SGD with momentum on the mode's trainable parameters; frozen parameters are
// never written. Returns the mean batch loss of every epoch.
TrainResult train(LinearClassifier classifier, BatchSource& stream, const TrainConfig& config);

// Starting point for a Stage-2 run from a trained classifier: crt clears
// weights and bias, lws/lws_plus reset scale to 1 and shift to 0.
LinearClassifier prepare_stage2(const LinearClassifier& stage1, TrainMode mode);

// Largest relative error between analytic gradients of every parameter
// trainable under `mode` and five-point central differences (step 1e-4).
// Relative error is |a - n| / max(|a|, |n|, 1e-6).
double gradient_check(const LinearClassifier& classifier, const Batch& batch, TrainMode mode);

// Checkpoint: "LCLF", u32 version (1), u32 C, u32 D, u32 mode tag, then
// weights (row-major), bias, scale, shift as little-endian f64.
void write_checkpoint(std::ostream& out, const LinearClassifier& classifier);
LinearClassifier read_checkpoint(std::istream& in);
void save_checkpoint(const LinearClassifier& classifier, const std::filesystem::path& path);
LinearClassifier load_checkpoint(const std::filesystem::path& path);

}  // namespace ladc
