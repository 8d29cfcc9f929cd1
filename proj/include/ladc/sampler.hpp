#pragma once

#include "ladc/batch.hpp"
#include "ladc/calibration.hpp"
#include "ladc/dataset.hpp"
#include "ladc/rng.hpp"

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace ladc {

/// How P_i is turned into the class of each drawn slot.
///   per_class:    the class is drawn from P directly.
///   per_instance: P_i is the draw weight of every instance of class i, so the
///                 class is drawn with probability n_i P_i / sum_j n_j P_j,
///                 i.e. proportional to n_i^(1 - tau). tau = 0 keeps the
///                 original frequencies, tau = 1 is class-balanced.
enum class PlanReading { per_instance, per_class };

std::string_view to_string(PlanReading reading);
PlanReading parse_plan_reading(std::string_view text);

/// P_i = (n_1 / n_i^tau) / sum_j (n_1 / n_j^tau) plus the class distribution
/// each slot is drawn from under the chosen reading.
struct SamplingPlan {
    std::vector<double> probabilities;
    std::vector<double> class_draw;
    double tau = 0.0;
    std::vector<std::size_t> counts;
    std::size_t n1 = 0;
    PlanReading reading = PlanReading::per_instance;
};

// Throws ZeroCount if any count is zero, InvalidConfig for tau < 0.
SamplingPlan sampling_probabilities(std::span<const std::size_t> counts, double tau,
                                    PlanReading reading = PlanReading::per_instance);

// Vose alias table: O(1) categorical draws.
class AliasTable {
public:
    explicit AliasTable(std::span<const double> probabilities);
    std::size_t sample(Rng& rng) const;
    std::size_t size() const noexcept { return accept_.size(); }

private:
    std::vector<double> accept_;
    std::vector<std::size_t> alias_;
};

struct BatchSpec {
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;
    // Batches per epoch; 0 means ceil(N / batch_size).
    std::size_t epoch_length = 0;
};

/// Stage-2 stream. Each slot draws a class from plan.class_draw; head classes yield a
/// uniformly chosen real instance, tail classes a fresh draw from a uniformly
/// chosen calibrated distribution of that class.
class CalibratedBatchSampler final : public BatchSource {
public:
    CalibratedBatchSampler(SamplingPlan plan, const HeadTailPartition& partition, const FeatureDataset& dataset,
                           std::span<const CalibratedDistribution> calibrations, const BatchSpec& spec);

    std::size_t batches_per_epoch() const override { return epoch_length_; }
    Batch next_batch() override;

    const SamplingPlan& plan() const noexcept { return plan_; }
    std::size_t cached_factors() const { return cache_.size(); }

private:
    SamplingPlan plan_;
    const FeatureDataset* dataset_;
    std::span<const CalibratedDistribution> calibrations_;
    std::vector<bool> is_head_;
    std::vector<std::vector<std::size_t>> rows_by_class_;
    std::vector<std::vector<std::size_t>> calibrations_by_class_;
    AliasTable classes_;
    std::size_t batch_size_;
    std::size_t epoch_length_;
    Rng rng_;
    FactorCache cache_;
};

// First batch of a fresh CalibratedBatchSampler session.
Batch draw_batch(const SamplingPlan& plan, const HeadTailPartition& partition, const FeatureDataset& dataset,
                 std::span<const CalibratedDistribution> calibrations, const BatchSpec& spec);

/// Instance-balanced stream: every epoch is a fresh permutation of the rows.
class ShuffledBatchSource final : public BatchSource {
public:
    ShuffledBatchSource(const FeatureDataset& dataset, std::size_t batch_size, std::uint64_t seed);

    std::size_t batches_per_epoch() const override;
    Batch next_batch() override;

private:
    const FeatureDataset* dataset_;
    std::size_t batch_size_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    Rng rng_;

    void reshuffle();
};

}  // namespace ladc
