#pragma once

#include "ladc/dataset.hpp"
#include "ladc/stats.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <shared_mutex>
#include <span>
#include <string_view>
#include <vector>

namespace ladc {

enum class CalibrationMode { per_instance, class_average };

// distance: w_i proportional to n_i * ||mu_i - anchor||^2.
// inverse_distance: w_i proportional to n_i / ||mu_i - anchor||^2.
enum class Weighting { distance, inverse_distance };

std::string_view to_string(CalibrationMode mode);
std::string_view to_string(Weighting weighting);
CalibrationMode parse_calibration_mode(std::string_view text);
Weighting parse_weighting(std::string_view text);

struct CalibrationConfig {
    std::size_t m = 2;
    double alpha = 0.15;
    double beta = 0.8;
    // Evidence sample size; per_instance mode always uses 1.
    std::size_t n_s = 1;
    CalibrationMode mode = CalibrationMode::per_instance;
    Weighting weighting = Weighting::distance;

    // Throws InvalidConfig.
    void validate() const;
};

/// Calibrated feature distribution for one tail anchor.
struct CalibratedDistribution {
    std::uint32_t source_class = 0;
    Eigen::VectorXd anchor;
    Eigen::VectorXd posterior_mean;
    Eigen::MatrixXd posterior_covariance;
    std::vector<std::uint32_t> neighbors;
    Eigen::VectorXd weights;
    // beta / (n_s + beta); posterior_covariance = shrink * prior covariance.
    double shrink = 0.0;
};

// The m head classes whose means are closest to anchor, nearest first, ties
// by ascending class index. Throws InsufficientHeadClasses.
std::vector<std::uint32_t> select_neighbors(const Eigen::VectorXd& anchor,
                                            std::span<const ClassStats> head_stats, std::size_t m);

// Normalized neighbor weights. If every weighted distance is zero the weights
// fall back to being proportional to the counts.
Eigen::VectorXd prior_weights(const Eigen::VectorXd& anchor, std::span<const ClassStats* const> neighbors,
                              Weighting weighting = Weighting::distance);

// mu_0 = sum w_i mu_i, Sigma_0 = sum w_i^2 Sigma_i + alpha I.
Gaussian calibrate_prior(const Eigen::VectorXd& weights, std::span<const ClassStats* const> neighbors,
                         double alpha);

// mu' = beta/(n_s+beta) mu_0 + n_s/(n_s+beta) anchor, Sigma' = beta/(n_s+beta) Sigma_0.
// Neighbor and class fields of the result are left for the caller.
CalibratedDistribution calibrate_posterior(const Eigen::VectorXd& anchor, const Gaussian& prior,
                                           double beta, std::size_t n_s);

// One distribution per tail training instance (per_instance) or per tail class
// (class_average), tail classes in partition order and instances in dataset
// order. Head classes without a covariance (n = 1) are dropped from the
// neighbor pool first.
std::vector<CalibratedDistribution> calibrate_tail(const FeatureDataset& dataset,
                                                   const HeadTailPartition& partition,
                                                   std::span<const ClassStats> head_stats,
                                                   const CalibrationConfig& config,
                                                   std::size_t threads = 1);

// Moment-matched Gaussian of the uniform mixture of one class's calibrated
// distributions, i.e. the distribution synthetic features of that class follow.
Gaussian mixture_moments(std::span<const CalibratedDistribution> calibrations, std::uint32_t class_id);

/// Cholesky factors of posterior covariances keyed by (neighbor set, weights,
/// shrink). Valid for calibrations produced by one calibrate_tail call, where
/// those fully determine the covariance. Concurrent lookups take a shared lock;
/// inserts take it exclusively.
class FactorCache {
public:
    std::shared_ptr<const Eigen::MatrixXd> factor(const CalibratedDistribution& calibration);
    std::size_t size() const;

private:
    struct Key {
        std::vector<std::uint32_t> neighbors;
        std::vector<std::uint64_t> weight_bits;
        std::uint64_t shrink_bits = 0;
        auto operator<=>(const Key&) const = default;
    };

    mutable std::shared_mutex mutex_;
    std::map<Key, std::shared_ptr<const Eigen::MatrixXd>> entries_;
};

// Line-delimited JSON: class, anchor, neighbors, weights, posterior mean and
// posterior covariance diagonal.
void write_calibration_dump(std::ostream& out, std::span<const CalibratedDistribution> calibrations);

}  // namespace ladc
