#include "doctest.h"
#include "support.hpp"

#include "ladc/classifier.hpp"

#include <cmath>
#include <sstream>

using namespace ladc;
using ladc::test::error_kind;
using ladc::test::random_vector;

namespace {

class FixedSource final : public BatchSource {
public:
    explicit FixedSource(std::vector<Batch> batches) : batches_(std::move(batches)) {}
    std::size_t batches_per_epoch() const override { return batches_.size(); }
    Batch next_batch() override { return batches_[next_++ % batches_.size()]; }

private:
    std::vector<Batch> batches_;
    std::size_t next_ = 0;
};

Batch random_batch(std::size_t b, std::size_t d, std::size_t c, Rng& rng) {
    Batch batch;
    batch.features.resize(b, d);
    for (std::size_t i = 0; i < b; ++i) {
        batch.features.row(i) = random_vector(d, rng).transpose();
        batch.labels.push_back(static_cast<std::uint32_t>(rng.uniform_index(c)));
        batch.synthetic.push_back(false);
    }
    return batch;
}

LinearClassifier random_classifier(std::size_t c, std::size_t d, TrainMode mode, Rng& rng) {
    auto clf = LinearClassifier::zeros(c, d);
    clf.mode = mode;
    for (std::size_t i = 0; i < c; ++i) {
        clf.weights.row(i) = random_vector(d, rng, 0.5).transpose();
        clf.bias(i) = 0.3 * rng.normal();
        if (mode == TrainMode::lws || mode == TrainMode::lws_plus) clf.scale(i) = 0.5 + rng.uniform01();
        if (mode == TrainMode::lws_plus) clf.shift(i) = 0.3 * rng.normal();
    }
    return clf;
}

// Softmax cross-entropy from scratch.
double oracle_loss(const LinearClassifier& clf, const Batch& batch) {
    double total = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        std::vector<double> z(clf.num_classes());
        double top = -INFINITY;
        for (std::size_t k = 0; k < z.size(); ++k) {
            double phi = clf.bias(k);
            for (std::size_t j = 0; j < clf.dim(); ++j) phi += clf.weights(k, j) * batch.features(i, j);
            z[k] = clf.scale(k) * phi + clf.shift(k);
            top = std::max(top, z[k]);
        }
        double s = 0;
        for (double v : z) s += std::exp(v - top);
        total += top + std::log(s) - z[batch.labels[i]];
    }
    return total / batch.size();
}

constexpr TrainMode all_modes[] = {TrainMode::plain, TrainMode::crt, TrainMode::lws, TrainMode::lws_plus};

}  // namespace

TEST_CASE("logit adjustment examples") {
    auto clf = LinearClassifier::zeros(1, 1);
    clf.weights(0, 0) = 0.5;
    Eigen::VectorXd x(1);
    x << 1;
    CHECK(logits(clf, x)(0) == 0.5);
    clf.scale(0) = 2;
    clf.shift(0) = 1;
    CHECK(logits(clf, x)(0) == 2.0);
    CHECK(base_logits(clf, x)(0) == 0.5);

    auto two = LinearClassifier::zeros(2, 1);
    two.bias << 3, 1;
    CHECK(predict(two, x) == 0);
    two.shift << 0, 3;
    CHECK(predict(two, x) == 1);

    Eigen::VectorXd wrong(2);
    CHECK(error_kind([&] { logits(two, wrong); }) == ErrorKind::DimensionMismatch);
}

TEST_CASE("prediction rules") {
    auto clf = LinearClassifier::zeros(3, 1);
    Eigen::VectorXd x(1);
    x << 0;
    clf.bias << 0, 1, 0;
    CHECK(predict(clf, x) == 1);
    auto tie = LinearClassifier::zeros(2, 1);
    tie.bias << 2, 2;
    CHECK(predict(tie, x) == 0);

    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        auto r = random_classifier(5, 3, TrainMode::lws_plus, rng);
        const auto f = random_vector(3, rng);
        const auto p = predict(r, f);
        auto scaled = r;
        const double k = 0.1 + 5 * rng.uniform01();
        scaled.scale *= k;
        scaled.shift *= k;
        CHECK(predict(scaled, f) == p);
        auto shifted = r;
        shifted.shift.array() += 10 * rng.normal();
        CHECK(predict(shifted, f) == p);
    }
}

TEST_CASE("cross-entropy matches the oracle") {
    Rng rng(3);
    for (auto mode : all_modes) {
        const auto clf = random_classifier(4, 3, mode, rng);
        const auto batch = random_batch(20, 3, 4, rng);
        CHECK(cross_entropy(clf, batch) == doctest::Approx(oracle_loss(clf, batch)).epsilon(1e-12));
    }
}

TEST_CASE("gradient check on random batches in every mode") {
    Rng rng(4);
    for (auto mode : all_modes) {
        double worst = 0;
        for (int trial = 0; trial < 20; ++trial) {
            const std::size_t c = 2 + rng.uniform_index(5), d = 1 + rng.uniform_index(6);
            const auto clf = random_classifier(c, d, mode, rng);
            const auto batch = random_batch(1 + rng.uniform_index(16), d, c, rng);
            worst = std::max(worst, gradient_check(clf, batch, mode));
        }
        CHECK(worst < 1e-5);
    }
}

TEST_CASE("zero features: bias gradient is softmax(bias) minus the label mean") {
    Rng rng(5);
    const std::size_t c = 4, b = 10;
    auto clf = random_classifier(c, 3, TrainMode::plain, rng);
    Batch batch;
    batch.features = Eigen::MatrixXd::Zero(b, 3);
    for (std::size_t i = 0; i < b; ++i) batch.labels.push_back(static_cast<std::uint32_t>(i % 3)), batch.synthetic.push_back(false);
    const auto g = loss_gradients(clf, batch);
    Eigen::VectorXd soft = clf.bias.array().exp();
    soft /= soft.sum();
    Eigen::VectorXd onehot = Eigen::VectorXd::Zero(c);
    for (auto l : batch.labels) onehot(l) += 1.0 / b;
    CHECK((g.bias - (soft - onehot)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(g.weights.norm() == 0.0);
}

TEST_CASE("single class: zero loss and zero gradients") {
    Rng rng(6);
    const auto clf = random_classifier(1, 3, TrainMode::lws_plus, rng);
    auto batch = random_batch(5, 3, 1, rng);
    double loss = -1;
    const auto g = loss_gradients(clf, batch, &loss);
    CHECK(loss == 0.0);
    CHECK(g.weights.norm() == 0.0);
    CHECK(g.bias.norm() == 0.0);
    CHECK(g.scale.norm() == 0.0);
    CHECK(g.shift.norm() == 0.0);
    CHECK(gradient_check(clf, batch, TrainMode::lws_plus) < 1e-5);
}

TEST_CASE("freeze contract per mode") {
    Rng rng(7);
    for (auto mode : all_modes) {
        const auto start = random_classifier(3, 2, mode, rng);
        FixedSource source({random_batch(16, 2, 3, rng), random_batch(16, 2, 3, rng)});
        TrainConfig config;
        config.epochs = 3;
        config.mode = mode;
        config.lr_drops = {};
        const auto out = train(start, source, config).classifier;
        const bool linear = mode == TrainMode::plain || mode == TrainMode::crt;
        CHECK((out.weights == start.weights) == !linear);
        CHECK((out.bias == start.bias) == !linear);
        CHECK((out.scale == start.scale) == linear);
        CHECK((out.shift == start.shift) == (mode != TrainMode::lws_plus));
    }
}

TEST_CASE("small steps do not increase the loss") {
    Rng rng(8);
    for (auto mode : all_modes) {
        for (int trial = 0; trial < 10; ++trial) {
            const auto clf = random_classifier(4, 3, mode, rng);
            const auto batch = random_batch(32, 3, 4, rng);
            FixedSource source({batch});
            TrainConfig config;
            config.epochs = 1;
            config.base_lr = 1e-4;
            config.momentum = 0;
            config.weight_decay = 0;
            config.lr_drops = {};
            config.mode = mode;
            const auto out = train(clf, source, config).classifier;
            CHECK(cross_entropy(out, batch) <= cross_entropy(clf, batch));
        }
    }
}

TEST_CASE("separable toy reaches full training accuracy") {
    Batch batch;
    batch.features.resize(2, 1);
    batch.features << 1, -1;
    batch.labels = {0, 1};
    batch.synthetic = {false, false};
    FixedSource source({batch});
    TrainConfig config;
    config.epochs = 50;
    config.lr_drops = {};
    const auto out = train(LinearClassifier::zeros(2, 1), source, config).classifier;
    for (std::size_t i = 0; i < 2; ++i) {
        Eigen::VectorXd x = batch.features.row(i).transpose();
        CHECK(predict(out, x) == batch.labels[i]);
    }
}

TEST_CASE("zero learning rate leaves parameters and loss unchanged") {
    Rng rng(9);
    const auto clf = random_classifier(3, 2, TrainMode::plain, rng);
    FixedSource source({random_batch(8, 2, 3, rng)});
    TrainConfig config;
    config.epochs = 4;
    config.base_lr = 0;
    config.lr_drops = {};
    const auto result = train(clf, source, config);
    CHECK(result.classifier == clf);
    for (double l : result.epoch_loss) CHECK(l == result.epoch_loss.front());
}

TEST_CASE("learning rate schedule") {
    // A saturated softmax keeps the bias gradient constant, so with momentum 0
    // the bias moves by lr * g per epoch.
    Batch batch;
    batch.features = Eigen::MatrixXd::Zero(1, 1);
    batch.labels = {0};
    batch.synthetic = {false};
    FixedSource source({batch});
    TrainConfig config;
    config.epochs = 3;
    config.base_lr = 1.0;
    config.momentum = 0;
    config.weight_decay = 0;
    config.lr_drops = {{1, 0.1}, {2, 0.5}};
    auto clf = LinearClassifier::zeros(2, 1);
    clf.bias << -50, 50;
    const auto g = loss_gradients(clf, batch).bias(0);
    const auto out = train(clf, source, config).classifier;
    CHECK(out.bias(0) == doctest::Approx(-50 - g * (1.0 + 0.1 + 0.05)).epsilon(1e-9));
}

TEST_CASE("divergence is reported") {
    Batch batch;
    batch.features.resize(1, 1);
    batch.features << 1e300;
    batch.labels = {0};
    batch.synthetic = {false};
    FixedSource source({batch});
    auto clf = LinearClassifier::zeros(2, 1);
    clf.weights << 1e10, -1e10;
    TrainConfig config;
    config.epochs = 2;
    config.lr_drops = {};
    CHECK(error_kind([&] { train(clf, source, config); }) == ErrorKind::NonFiniteLoss);
}

TEST_CASE("stage-2 preparation") {
    Rng rng(10);
    auto stage1 = random_classifier(3, 2, TrainMode::plain, rng);
    stage1.scale(0) = 3;
    const auto lws = prepare_stage2(stage1, TrainMode::lws_plus);
    CHECK(lws.weights == stage1.weights);
    CHECK(lws.scale == Eigen::VectorXd::Ones(3));
    CHECK(lws.shift == Eigen::VectorXd::Zero(3));
    CHECK(lws.mode == TrainMode::lws_plus);
    const auto crt = prepare_stage2(stage1, TrainMode::crt);
    CHECK(crt.weights.norm() == 0.0);
    CHECK(crt.bias.norm() == 0.0);
}

TEST_CASE("train config validation") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.epochs = 0;
    CHECK(error_kind([&] { c.validate(); }) == ErrorKind::InvalidConfig);
    c = {};
    c.batch_size = 0;
    CHECK(error_kind([&] { c.validate(); }) == ErrorKind::InvalidConfig);
    c = {};
    c.base_lr = -1;
    CHECK(error_kind([&] { c.validate(); }) == ErrorKind::InvalidConfig);
    CHECK(parse_train_mode("lws_plus") == TrainMode::lws_plus);
    CHECK(error_kind([] { parse_train_mode("foo"); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("checkpoint round trip") {
    Rng rng(11);
    const auto clf = random_classifier(4, 3, TrainMode::lws_plus, rng);
    std::stringstream buffer;
    write_checkpoint(buffer, clf);
    const auto back = read_checkpoint(buffer);
    CHECK(back == clf);
    CHECK(back.mode == TrainMode::lws_plus);

    std::string bytes;
    {
        std::ostringstream out;
        write_checkpoint(out, clf);
        bytes = out.str();
    }
    bytes[0] = 'X';
    std::istringstream bad(bytes);
    CHECK(error_kind([&] { read_checkpoint(bad); }) == ErrorKind::MalformedHeader);
    std::istringstream truncated(bytes.substr(0, 30));
    CHECK(error_kind([&] { read_checkpoint(truncated); }).has_value());
}
