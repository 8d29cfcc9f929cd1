#include "ladc/sampler.hpp"

#include "ladc/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace ladc {

namespace {
constexpr std::uint64_t kSamplerStream = 0x5a;
constexpr std::uint64_t kShuffleStream = 0x5b;
}  // namespace

std::string_view to_string(PlanReading reading) {
    return reading == PlanReading::per_instance ? "per_instance" : "per_class";
}

PlanReading parse_plan_reading(std::string_view text) {
    if (text == "per_instance") return PlanReading::per_instance;
    if (text == "per_class") return PlanReading::per_class;
    throw Error(ErrorKind::InvalidConfig, "unknown sampling reading '" + std::string(text) + "'");
}

SamplingPlan sampling_probabilities(std::span<const std::size_t> counts, double tau, PlanReading reading) {
    if (!(tau >= 0.0) || !std::isfinite(tau)) {
        throw Error(ErrorKind::InvalidConfig, "tau must be a finite value >= 0");
    }
    if (counts.empty()) throw Error(ErrorKind::ZeroCount, "no classes to sample");
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] == 0) throw Error(ErrorKind::ZeroCount, "class " + std::to_string(i) + " has no instances");
    }
    SamplingPlan plan;
    plan.tau = tau;
    plan.counts.assign(counts.begin(), counts.end());
    plan.n1 = *std::max_element(counts.begin(), counts.end());

    // n_1 cancels; work with log n_i^-tau relative to the largest term.
    std::vector<double> logw(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) logw[i] = -tau * std::log(static_cast<double>(counts[i]));
    const double top = *std::max_element(logw.begin(), logw.end());
    plan.probabilities.resize(counts.size());
    double total = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        plan.probabilities[i] = std::exp(logw[i] - top);
        total += plan.probabilities[i];
    }
    for (auto& p : plan.probabilities) p /= total;

    plan.reading = reading;
    if (reading == PlanReading::per_class) {
        plan.class_draw = plan.probabilities;
    } else {
        std::vector<double> logm(counts.size());
        for (std::size_t i = 0; i < counts.size(); ++i) logm[i] = (1.0 - tau) * std::log(static_cast<double>(counts[i]));
        const double mtop = *std::max_element(logm.begin(), logm.end());
        plan.class_draw.resize(counts.size());
        double mass = 0.0;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            plan.class_draw[i] = std::exp(logm[i] - mtop);
            mass += plan.class_draw[i];
        }
        for (auto& p : plan.class_draw) p /= mass;
    }
    return plan;
}

AliasTable::AliasTable(std::span<const double> probabilities) {
    const std::size_t n = probabilities.size();
    if (n == 0) throw Error(ErrorKind::ZeroCount, "alias table over zero outcomes");
    const double total = std::accumulate(probabilities.begin(), probabilities.end(), 0.0);
    accept_.assign(n, 1.0);
    alias_.resize(n);
    std::iota(alias_.begin(), alias_.end(), std::size_t{0});

    std::vector<double> scaled(n);
    std::vector<std::size_t> small, large;
    for (std::size_t i = 0; i < n; ++i) {
        scaled[i] = probabilities[i] * static_cast<double>(n) / total;
        (scaled[i] < 1.0 ? small : large).push_back(i);
    }
    while (!small.empty() && !large.empty()) {
        const auto s = small.back();
        small.pop_back();
        const auto l = large.back();
        accept_[s] = scaled[s];
        alias_[s] = l;
        scaled[l] = (scaled[l] + scaled[s]) - 1.0;
        if (scaled[l] < 1.0) {
            large.pop_back();
            small.push_back(l);
        }
    }
    // Leftovers are 1 up to rounding.
    for (auto i : small) accept_[i] = 1.0;
    for (auto i : large) accept_[i] = 1.0;
}

std::size_t AliasTable::sample(Rng& rng) const {
    const auto i = rng.uniform_index(accept_.size());
    return rng.uniform01() < accept_[i] ? i : alias_[i];
}

CalibratedBatchSampler::CalibratedBatchSampler(SamplingPlan plan, const HeadTailPartition& partition,
                                               const FeatureDataset& dataset,
                                               std::span<const CalibratedDistribution> calibrations,
                                               const BatchSpec& spec)
    : plan_(std::move(plan)),
      dataset_(&dataset),
      calibrations_(calibrations),
      classes_(plan_.class_draw),
      batch_size_(spec.batch_size),
      epoch_length_(spec.epoch_length),
      rng_(Rng(spec.seed).split(kSamplerStream)) {
    const auto num_classes = dataset.num_classes();
    if (batch_size_ == 0) throw Error(ErrorKind::InvalidConfig, "batch_size must be >= 1");
    if (plan_.probabilities.size() != num_classes || plan_.class_draw.size() != num_classes) {
        throw Error(ErrorKind::DimensionMismatch, "sampling plan covers " + std::to_string(plan_.probabilities.size()) +
                                                      " classes, dataset has " + std::to_string(num_classes));
    }
    if (partition.num_classes() != num_classes) {
        throw Error(ErrorKind::DimensionMismatch, "partition does not cover the dataset classes");
    }
    if (epoch_length_ == 0) epoch_length_ = std::max<std::size_t>(1, (dataset.size() + batch_size_ - 1) / batch_size_);

    is_head_.assign(num_classes, false);
    for (auto c : partition.head) is_head_[c] = true;
    rows_by_class_.resize(num_classes);
    for (std::size_t i = 0; i < dataset.size(); ++i) rows_by_class_[dataset.label(i)].push_back(i);
    calibrations_by_class_.resize(num_classes);
    for (std::size_t i = 0; i < calibrations.size(); ++i) {
        const auto c = calibrations[i].source_class;
        if (c >= num_classes) throw Error(ErrorKind::DimensionMismatch, "calibration for unknown class");
        calibrations_by_class_[c].push_back(i);
    }
    for (std::uint32_t c = 0; c < num_classes; ++c) {
        if (plan_.class_draw[c] <= 0.0) continue;
        if (is_head_[c] && rows_by_class_[c].empty()) {
            throw Error(ErrorKind::ZeroCount, "head class " + std::to_string(c) + " has no instances");
        }
        if (!is_head_[c] && calibrations_by_class_[c].empty()) {
            throw Error(ErrorKind::MissingCalibration, "tail class " + std::to_string(c) + " has no calibration");
        }
    }
}

Batch CalibratedBatchSampler::next_batch() {
    Batch batch;
    const auto dim = static_cast<Eigen::Index>(dataset_->dim());
    batch.features.resize(static_cast<Eigen::Index>(batch_size_), dim);
    batch.labels.reserve(batch_size_);
    batch.synthetic.reserve(batch_size_);
    for (std::size_t slot = 0; slot < batch_size_; ++slot) {
        const auto c = static_cast<std::uint32_t>(classes_.sample(rng_));
        const auto r = static_cast<Eigen::Index>(slot);
        if (is_head_[c]) {
            const auto& rows = rows_by_class_[c];
            const auto row = dataset_->row(rows[rng_.uniform_index(rows.size())]);
            for (Eigen::Index k = 0; k < dim; ++k) batch.features(r, k) = row[static_cast<std::size_t>(k)];
            batch.synthetic.push_back(false);
        } else {
            const auto& pool = calibrations_by_class_[c];
            const auto& calibration = calibrations_[pool[rng_.uniform_index(pool.size())]];
            const auto factor = cache_.factor(calibration);
            batch.features.row(r) = draw_gaussian(calibration.posterior_mean, *factor, rng_).transpose();
            batch.synthetic.push_back(true);
        }
        batch.labels.push_back(c);
    }
    return batch;
}

Batch draw_batch(const SamplingPlan& plan, const HeadTailPartition& partition, const FeatureDataset& dataset,
                 std::span<const CalibratedDistribution> calibrations, const BatchSpec& spec) {
    CalibratedBatchSampler sampler(plan, partition, dataset, calibrations, spec);
    return sampler.next_batch();
}

ShuffledBatchSource::ShuffledBatchSource(const FeatureDataset& dataset, std::size_t batch_size, std::uint64_t seed)
    : dataset_(&dataset), batch_size_(batch_size), order_(dataset.size()), rng_(Rng(seed).split(kShuffleStream)) {
    if (batch_size_ == 0) throw Error(ErrorKind::InvalidConfig, "batch_size must be >= 1");
    if (dataset.empty()) throw Error(ErrorKind::EmptyDataset, "cannot stream an empty dataset");
    std::iota(order_.begin(), order_.end(), std::size_t{0});
}

std::size_t ShuffledBatchSource::batches_per_epoch() const {
    return (order_.size() + batch_size_ - 1) / batch_size_;
}

void ShuffledBatchSource::reshuffle() {
    for (std::size_t i = order_.size(); i > 1; --i) {
        std::swap(order_[i - 1], order_[rng_.uniform_index(i)]);
    }
}

Batch ShuffledBatchSource::next_batch() {
    if (cursor_ == 0) reshuffle();
    const auto take = std::min(batch_size_, order_.size() - cursor_);
    const auto dim = static_cast<Eigen::Index>(dataset_->dim());
    Batch batch;
    batch.features.resize(static_cast<Eigen::Index>(take), dim);
    for (std::size_t i = 0; i < take; ++i) {
        const auto idx = order_[cursor_ + i];
        const auto row = dataset_->row(idx);
        for (Eigen::Index k = 0; k < dim; ++k) batch.features(static_cast<Eigen::Index>(i), k) = row[static_cast<std::size_t>(k)];
        batch.labels.push_back(dataset_->label(idx));
        batch.synthetic.push_back(false);
    }
    cursor_ += take;
    if (cursor_ >= order_.size()) cursor_ = 0;
    return batch;
}

}  // namespace ladc
