#pragma once

#include "ladc/dataset.hpp"
#include "ladc/stats.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace ladc {

// many: count > many_above; few: count < few_below; medium otherwise.
struct GroupThresholds {
    std::size_t many_above = 100;
    std::size_t few_below = 20;
};

enum class ShotGroup { many = 0, medium = 1, few = 2 };

ShotGroup shot_group(std::size_t train_count, const GroupThresholds& thresholds = {});
std::string_view to_string(ShotGroup group);

/// Accuracy overall and per shot group. A group with no test instances has no
/// accuracy rather than a zero one.
struct GroupedAccuracy {
    double overall = 0.0;
    std::optional<double> many;
    std::optional<double> medium;
    std::optional<double> few;
    std::array<std::size_t, 3> group_sizes{};

    std::optional<double> group(ShotGroup g) const;
};

// Throws LengthMismatch when predictions and truths differ in length, and
// DimensionMismatch for a truth label without a train count.
GroupedAccuracy grouped_accuracy(std::span<const std::uint32_t> predictions, std::span<const std::uint32_t> truths,
                                 std::span<const std::size_t> train_counts, const GroupThresholds& thresholds = {});

std::vector<std::optional<double>> per_class_accuracy(std::span<const std::uint32_t> predictions,
                                                      std::span<const std::uint32_t> truths,
                                                      std::size_t num_classes);

// Symmetric square root via eigendecomposition, negative eigenvalues clamped
// to zero.
Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& matrix);

// Squared 2-Wasserstein distance between two Gaussians:
// ||mu_1 - mu_2||^2 + tr(S_1 + S_2 - 2 (S_2^1/2 S_1 S_2^1/2)^1/2).
// Throws NotPositiveDefinite if either covariance has an eigenvalue below
// -1e-8 (relative to its largest magnitude).
double distribution_gap(const Gaussian& estimated, const Gaussian& truth);

enum class PointOrigin { real, synthetic, test };
std::string_view to_string(PointOrigin origin);

struct ScatterPoint {
    double x = 0.0;
    double y = 0.0;
    std::uint32_t label = 0;
    PointOrigin origin = PointOrigin::real;
};

struct ScatterExport {
    std::vector<ScatterPoint> points;
    Eigen::MatrixXd projection;  // 2 x D
};

ScatterExport project_2d(std::span<const Eigen::VectorXd> features, std::span<const std::uint32_t> labels,
                         std::span<const PointOrigin> origins, const Eigen::MatrixXd& projection);

struct ProjectionFitOptions {
    std::size_t epochs = 40;
    double lr = 0.05;
    double momentum = 0.9;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
};

// Trains a linear 2-unit bottleneck (x -> P x -> softmax classifier) on the
// dataset and returns P.
Eigen::MatrixXd fit_projection(const FeatureDataset& dataset, const ProjectionFitOptions& options = {});

// Header "x,y,label,origin".
void write_scatter_csv(std::ostream& out, const ScatterExport& scatter);
// Standalone SVG: one color per class, marker per origin (circle real,
// triangle synthetic, square test).
void write_scatter_svg(std::ostream& out, const ScatterExport& scatter, std::string_view title = {});

}  // namespace ladc
