#pragma once

#include "ladc/calibration.hpp"
#include "ladc/classifier.hpp"
#include "ladc/dataset.hpp"
#include "ladc/eval.hpp"
#include "ladc/sampler.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ladc {

/// Training data: a pair of container files, or a synthetic long-tailed
/// Gaussian mixture when train_path is empty.
struct DataSource {
    std::filesystem::path train_path;
    std::filesystem::path test_path;
    std::size_t classes = 10;
    std::size_t dim = 16;
    double imbalance = 100.0;
    std::size_t max_count = 500;
    std::size_t test_per_class = 200;
    OracleGeometry geometry;

    bool synthetic() const { return train_path.empty(); }
};

struct ExperimentConfig {
    DataSource data;
    double mass_ratio = 0.6;
    CalibrationConfig calibration;
    double tau = 1.25;
    PlanReading reading = PlanReading::per_instance;
    // Stage-2 batches per epoch; 0 means ceil(N / batch_size).
    std::size_t epoch_length = 0;
    TrainConfig stage1 = default_stage1();
    TrainConfig stage2 = default_stage2();
    GroupThresholds groups;
    std::uint64_t seed = 7;
    std::filesystem::path output_dir;
    bool scatter = true;
    // Worker cap for the parallel-safe steps; never affects results.
    std::size_t threads = 1;

    static TrainConfig default_stage1();
    static TrainConfig default_stage2();

    // Rejects out-of-domain values with InvalidConfig.
    void validate() const;
};

// Every settable key as "section.key", in a fixed order.
const std::vector<std::string>& config_keys();

// Throws InvalidConfig for an unknown key or an unparsable value.
void set_config_value(ExperimentConfig& config, std::string_view key, std::string_view value);
std::string get_config_value(const ExperimentConfig& config, std::string_view key);

// Sectioned key = value text: "[section]" headers, '#' or ';' comment lines,
// optional double quotes around values.
void apply_config_file(ExperimentConfig& config, const std::filesystem::path& path);
void apply_config_text(ExperimentConfig& config, std::string_view text);
std::string config_to_text(const ExperimentConfig& config);

// "10:0.1,20:0.1" <-> lr drops.
std::vector<LrDrop> parse_lr_drops(std::string_view text);
std::string format_lr_drops(const std::vector<LrDrop>& drops);

}  // namespace ladc
