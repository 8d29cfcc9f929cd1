#pragma once

#include "ladc/calibration.hpp"
#include "ladc/classifier.hpp"
#include "ladc/config.hpp"
#include "ladc/dataset.hpp"
#include "ladc/eval.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ladc {

struct PipelineInputs {
    FeatureDataset train;
    FeatureDataset test;
    // Ground-truth class Gaussians, known for synthetic data.
    std::optional<std::vector<Gaussian>> truth;
};

// Loads the configured files or generates the synthetic mixture.
PipelineInputs load_inputs(const ExperimentConfig& config);

// Ground-truth Gaussians of a synthetic spec.
std::vector<Gaussian> truth_of(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_for(const ExperimentConfig& config);

// Empirical tail estimate used as the comparison point for calibration:
// sample mean, sample covariance (zero when n = 1) plus ridge * I.
Gaussian empirical_gaussian(const ClassStats& stats, double ridge);

struct ArmResult {
    GroupedAccuracy grouped;
    std::vector<std::optional<double>> per_class;
};

struct ClassGap {
    std::uint32_t class_id = 0;
    double calibrated = 0.0;
    double empirical = 0.0;
};

/// W2^2 of calibrated and of empirical tail estimates against a reference:
/// the true Gaussians for synthetic data, test-set statistics otherwise.
struct GapSummary {
    std::string reference;
    std::vector<ClassGap> per_class;
    std::optional<double> mean_calibrated;
    std::optional<double> mean_empirical;
};

GapSummary tail_gap_summary(const FeatureDataset& train, std::span<const ClassStats> train_stats,
                            const HeadTailPartition& partition, std::span<const CalibratedDistribution> calibrations,
                            double ridge, const std::vector<Gaussian>& reference, std::string reference_name);

struct ExperimentReport {
    ExperimentConfig config;
    std::vector<std::size_t> train_counts;
    std::vector<std::uint32_t> head;
    std::vector<std::uint32_t> tail;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    ArmResult baseline;
    ArmResult ladc;
    std::vector<double> stage1_loss;
    std::vector<double> stage2_loss;
    std::size_t calibrated_distributions = 0;
    GapSummary gap;
    // Wall-clock seconds per phase. Written to a separate file so the report
    // itself stays reproducible.
    std::map<std::string, double> timings;
    // Output files, relative to the output directory.
    std::map<std::string, std::string> artifacts;
    LinearClassifier stage1_classifier;
    LinearClassifier stage2_classifier;
};

// Stage 1 (plain CE) -> statistics -> calibration -> Stage 2 -> evaluation.
// Writes report.json, timings.json, checkpoints, the calibration dump, the
// config echo and scatter exports when config.output_dir is set. Module errors
// are rethrown prefixed with the phase name.
ExperimentReport run_pipeline(const ExperimentConfig& config);
ExperimentReport run_pipeline(const ExperimentConfig& config, const PipelineInputs& inputs);

// Pretty-printed report JSON, without timings.
std::string report_to_json(const ExperimentReport& report);

}  // namespace ladc
