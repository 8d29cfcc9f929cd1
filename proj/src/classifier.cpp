#include "ladc/classifier.hpp"

#include "ladc/error.hpp"

#include "endian.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <string>

namespace ladc {

using detail::get_le;
using detail::put_le;

std::string_view to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::plain: return "plain";
        case TrainMode::crt: return "crt";
        case TrainMode::lws: return "lws";
        case TrainMode::lws_plus: return "lws_plus";
    }
    return "plain";
}

TrainMode parse_train_mode(std::string_view text) {
    if (text == "plain") return TrainMode::plain;
    if (text == "crt") return TrainMode::crt;
    if (text == "lws") return TrainMode::lws;
    if (text == "lws_plus") return TrainMode::lws_plus;
    throw Error(ErrorKind::InvalidConfig, "unknown classifier mode '" + std::string(text) + "'");
}

LinearClassifier LinearClassifier::zeros(std::size_t num_classes, std::size_t dim) {
    const auto c = static_cast<Eigen::Index>(num_classes);
    LinearClassifier out;
    out.weights = Eigen::MatrixXd::Zero(c, static_cast<Eigen::Index>(dim));
    out.bias = Eigen::VectorXd::Zero(c);
    out.scale = Eigen::VectorXd::Ones(c);
    out.shift = Eigen::VectorXd::Zero(c);
    return out;
}

bool LinearClassifier::operator==(const LinearClassifier& other) const {
    return mode == other.mode && weights.rows() == other.weights.rows() && weights.cols() == other.weights.cols() &&
           weights == other.weights && bias == other.bias && scale == other.scale && shift == other.shift;
}

namespace {

void check_dim(const LinearClassifier& classifier, Eigen::Index dim) {
    if (static_cast<std::size_t>(dim) != classifier.dim()) {
        throw Error(ErrorKind::DimensionMismatch, "feature of length " + std::to_string(dim) +
                                                      " for a classifier of dimension " +
                                                      std::to_string(classifier.dim()));
    }
}

struct Forward {
    Eigen::MatrixXd base;  // B x C
    Eigen::MatrixXd prob;  // B x C
    double loss = 0.0;
};

Forward forward(const LinearClassifier& clf, const Batch& batch) {
    check_dim(clf, batch.features.cols());
    if (static_cast<std::size_t>(batch.features.rows()) != batch.labels.size()) {
        throw Error(ErrorKind::LengthMismatch, "batch features and labels differ in length");
    }
    Forward f;
    f.base = batch.features * clf.weights.transpose();
    f.base.rowwise() += clf.bias.transpose();
    Eigen::MatrixXd adjusted = f.base * clf.scale.asDiagonal();
    adjusted.rowwise() += clf.shift.transpose();
    f.prob.resize(adjusted.rows(), adjusted.cols());
    double total = 0.0;
    for (Eigen::Index n = 0; n < adjusted.rows(); ++n) {
        const auto label = batch.labels[static_cast<std::size_t>(n)];
        if (label >= clf.num_classes()) {
            throw Error(ErrorKind::DimensionMismatch, "label " + std::to_string(label) + " outside classifier range");
        }
        const double top = adjusted.row(n).maxCoeff();
        const Eigen::RowVectorXd e = (adjusted.row(n).array() - top).exp();
        const double z = e.sum();
        f.prob.row(n) = e / z;
        total += std::log(z) + top - adjusted(n, static_cast<Eigen::Index>(label));
    }
    f.loss = batch.size() == 0 ? 0.0 : total / static_cast<double>(batch.size());
    return f;
}

}  // namespace

Eigen::VectorXd base_logits(const LinearClassifier& classifier, const Eigen::VectorXd& feature) {
    check_dim(classifier, feature.size());
    return classifier.weights * feature + classifier.bias;
}

Eigen::VectorXd logits(const LinearClassifier& classifier, const Eigen::VectorXd& feature) {
    return classifier.scale.cwiseProduct(base_logits(classifier, feature)) + classifier.shift;
}

std::size_t predict(const LinearClassifier& classifier, const Eigen::VectorXd& feature) {
    const auto z = logits(classifier, feature);
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < z.size(); ++i) {
        if (z[i] > z[best]) best = i;
    }
    return static_cast<std::size_t>(best);
}

std::vector<std::uint32_t> predict_all(const LinearClassifier& classifier, const FeatureDataset& dataset) {
    std::vector<std::uint32_t> out(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        out[i] = static_cast<std::uint32_t>(predict(classifier, dataset.row_vector(i)));
    }
    return out;
}

void TrainConfig::validate() const {
    if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) throw Error(ErrorKind::InvalidConfig, "base_lr must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorKind::InvalidConfig, "momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw Error(ErrorKind::InvalidConfig, "weight_decay must be >= 0");
    if (batch_size == 0) throw Error(ErrorKind::InvalidConfig, "batch_size must be >= 1");
    for (std::size_t i = 0; i < lr_drops.size(); ++i) {
        if (lr_drops[i].epoch >= epochs) {
            throw Error(ErrorKind::InvalidConfig, "lr drop at epoch " + std::to_string(lr_drops[i].epoch) +
                                                      " outside [0, " + std::to_string(epochs) + ")");
        }
        if (i > 0 && lr_drops[i].epoch <= lr_drops[i - 1].epoch) {
            throw Error(ErrorKind::InvalidConfig, "lr drop epochs must be strictly increasing");
        }
        if (!(lr_drops[i].factor >= 0.0)) throw Error(ErrorKind::InvalidConfig, "lr drop factor must be >= 0");
    }
}

double cross_entropy(const LinearClassifier& classifier, const Batch& batch) {
    return forward(classifier, batch).loss;
}

Gradients loss_gradients(const LinearClassifier& classifier, const Batch& batch, double* loss) {
    auto f = forward(classifier, batch);
    if (loss) *loss = f.loss;
    const double inv = batch.size() == 0 ? 0.0 : 1.0 / static_cast<double>(batch.size());
    Eigen::MatrixXd delta = f.prob;
    for (std::size_t n = 0; n < batch.size(); ++n) delta(static_cast<Eigen::Index>(n), batch.labels[n]) -= 1.0;
    delta *= inv;

    Gradients g;
    g.shift = delta.colwise().sum().transpose();
    g.scale = delta.cwiseProduct(f.base).colwise().sum().transpose();
    const Eigen::MatrixXd scaled = delta * classifier.scale.asDiagonal();
    g.bias = scaled.colwise().sum().transpose();
    g.weights = scaled.transpose() * batch.features;
    return g;
}

namespace {

struct Trainable {
    bool weights = false;
    bool scale = false;
    bool shift = false;
};

Trainable trainable_for(TrainMode mode) {
    switch (mode) {
        case TrainMode::plain:
        case TrainMode::crt: return {true, false, false};
        case TrainMode::lws: return {false, true, false};
        case TrainMode::lws_plus: return {false, true, true};
    }
    return {};
}

}  // namespace

TrainResult train(LinearClassifier classifier, BatchSource& stream, const TrainConfig& config) {
    config.validate();
    classifier.mode = config.mode;
    const auto which = trainable_for(config.mode);
    const auto c = static_cast<Eigen::Index>(classifier.num_classes());

    Eigen::MatrixXd v_weights = Eigen::MatrixXd::Zero(c, classifier.weights.cols());
    Eigen::VectorXd v_bias = Eigen::VectorXd::Zero(c);
    Eigen::VectorXd v_scale = Eigen::VectorXd::Zero(c);
    Eigen::VectorXd v_shift = Eigen::VectorXd::Zero(c);
    const double wd = config.weight_decay;
    const double wd_adjust = config.decay_adjustments ? wd : 0.0;

    TrainResult result;
    double lr = config.base_lr;
    std::size_t next_drop = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        while (next_drop < config.lr_drops.size() && config.lr_drops[next_drop].epoch == epoch) {
            lr *= config.lr_drops[next_drop].factor;
            ++next_drop;
        }
        double epoch_total = 0.0;
        std::size_t epoch_count = 0;
        const auto steps = stream.batches_per_epoch();
        for (std::size_t step = 0; step < steps; ++step) {
            const auto batch = stream.next_batch();
            if (batch.size() == 0) continue;
            double loss = 0.0;
            const auto g = loss_gradients(classifier, batch, &loss);
            if (!std::isfinite(loss)) {
                throw Error(ErrorKind::NonFiniteLoss, "epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
            }
            epoch_total += loss * static_cast<double>(batch.size());
            epoch_count += batch.size();
            if (which.weights) {
                v_weights = config.momentum * v_weights + g.weights + wd * classifier.weights;
                v_bias = config.momentum * v_bias + g.bias + wd * classifier.bias;
                classifier.weights -= lr * v_weights;
                classifier.bias -= lr * v_bias;
            }
            if (which.scale) {
                v_scale = config.momentum * v_scale + g.scale + wd_adjust * classifier.scale;
                classifier.scale -= lr * v_scale;
            }
            if (which.shift) {
                v_shift = config.momentum * v_shift + g.shift + wd_adjust * classifier.shift;
                classifier.shift -= lr * v_shift;
            }
        }
        result.epoch_loss.push_back(epoch_count == 0 ? 0.0 : epoch_total / static_cast<double>(epoch_count));
    }
    if (!classifier.weights.allFinite() || !classifier.bias.allFinite() || !classifier.scale.allFinite() ||
        !classifier.shift.allFinite()) {
        throw Error(ErrorKind::NonFiniteLoss, "parameters diverged");
    }
    result.classifier = std::move(classifier);
    return result;
}

LinearClassifier prepare_stage2(const LinearClassifier& stage1, TrainMode mode) {
    LinearClassifier out = stage1;
    out.mode = mode;
    const auto c = static_cast<Eigen::Index>(stage1.num_classes());
    out.scale = Eigen::VectorXd::Ones(c);
    out.shift = Eigen::VectorXd::Zero(c);
    if (mode == TrainMode::crt) {
        out.weights.setZero();
        out.bias.setZero();
    }
    return out;
}

double gradient_check(const LinearClassifier& classifier, const Batch& batch, TrainMode mode) {
    constexpr double h = 1e-4;
    constexpr double floor = 1e-6;
    const auto which = trainable_for(mode);
    const auto analytic = loss_gradients(classifier, batch);
    LinearClassifier probe = classifier;
    double worst = 0.0;

    auto loss_at = [&](double& param, double value) {
        param = value;
        return cross_entropy(probe, batch);
    };
    // Five-point central stencil, truncation error O(h^4).
    auto check = [&](double& param, double exact) {
        const double saved = param;
        const double numeric = (loss_at(param, saved - 2 * h) - 8 * loss_at(param, saved - h) +
                                8 * loss_at(param, saved + h) - loss_at(param, saved + 2 * h)) /
                               (12.0 * h);
        param = saved;
        const double denom = std::max({std::abs(exact), std::abs(numeric), floor});
        worst = std::max(worst, std::abs(exact - numeric) / denom);
    };
    const auto c = probe.weights.rows();
    if (which.weights) {
        for (Eigen::Index i = 0; i < c; ++i) {
            for (Eigen::Index k = 0; k < probe.weights.cols(); ++k) check(probe.weights(i, k), analytic.weights(i, k));
            check(probe.bias[i], analytic.bias[i]);
        }
    }
    if (which.scale) {
        for (Eigen::Index i = 0; i < c; ++i) check(probe.scale[i], analytic.scale[i]);
    }
    if (which.shift) {
        for (Eigen::Index i = 0; i < c; ++i) check(probe.shift[i], analytic.shift[i]);
    }
    return worst;
}

namespace {

constexpr std::array<char, 4> kCheckpointMagic = {'L', 'C', 'L', 'F'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::uint32_t mode_tag(TrainMode mode) { return static_cast<std::uint32_t>(mode); }

}  // namespace

void write_checkpoint(std::ostream& out, const LinearClassifier& classifier) {
    out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    put_le(out, kCheckpointVersion);
    put_le(out, static_cast<std::uint32_t>(classifier.num_classes()));
    put_le(out, static_cast<std::uint32_t>(classifier.dim()));
    put_le(out, mode_tag(classifier.mode));
    for (Eigen::Index i = 0; i < classifier.weights.rows(); ++i)
        for (Eigen::Index k = 0; k < classifier.weights.cols(); ++k) put_le(out, classifier.weights(i, k));
    for (const auto* v : {&classifier.bias, &classifier.scale, &classifier.shift})
        for (Eigen::Index i = 0; i < v->size(); ++i) put_le(out, (*v)[i]);
}

LinearClassifier read_checkpoint(std::istream& in) {
    std::array<char, 4> magic{};
    in.read(magic.data(), magic.size());
    if (in.gcount() != 4 || magic != kCheckpointMagic) {
        throw Error(ErrorKind::MalformedHeader, "byte 0: missing LCLF checkpoint magic");
    }
    std::uint32_t version = 0, c = 0, d = 0, tag = 0;
    if (!get_le(in, version) || version != kCheckpointVersion) {
        throw Error(ErrorKind::MalformedHeader, "byte 4: unsupported checkpoint version");
    }
    if (!get_le(in, c) || !get_le(in, d) || c == 0 || d == 0) {
        throw Error(ErrorKind::MalformedHeader, "byte 8: bad checkpoint shape");
    }
    if (!get_le(in, tag) || tag > mode_tag(TrainMode::lws_plus)) {
        throw Error(ErrorKind::MalformedHeader, "byte 16: bad mode tag");
    }
    auto out = LinearClassifier::zeros(c, d);
    out.mode = static_cast<TrainMode>(tag);
    std::size_t offset = 20;
    auto read = [&](double& value) {
        if (!get_le(in, value)) {
            throw Error(ErrorKind::MalformedHeader, "byte " + std::to_string(offset) + ": truncated checkpoint");
        }
        if (!std::isfinite(value)) {
            throw Error(ErrorKind::NonFiniteValue, "byte " + std::to_string(offset) + ": non-finite parameter");
        }
        offset += 8;
    };
    for (Eigen::Index i = 0; i < out.weights.rows(); ++i)
        for (Eigen::Index k = 0; k < out.weights.cols(); ++k) read(out.weights(i, k));
    for (auto* v : {&out.bias, &out.scale, &out.shift})
        for (Eigen::Index i = 0; i < v->size(); ++i) read((*v)[i]);
    return out;
}

void save_checkpoint(const LinearClassifier& classifier, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    write_checkpoint(out, classifier);
    if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

LinearClassifier load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return read_checkpoint(in);
}

}  // namespace ladc
