#pragma once

#include "ladc/dataset.hpp"
#include "ladc/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace ladc {

/// Sample mean and unbiased (n-1) covariance of one class. The covariance is
/// absent when the class has a single instance.
struct ClassStats {
    std::uint32_t class_id = 0;
    std::size_t count = 0;
    Eigen::VectorXd mean;
    std::optional<Eigen::MatrixXd> covariance;

    bool has_covariance() const { return covariance.has_value(); }
};

// Two-pass mean-then-deviation estimate accumulated in double.
ClassStats class_statistics(const FeatureDataset& dataset, std::uint32_t class_id);

// Statistics for every class with at least one instance, in class order.
std::vector<ClassStats> all_class_statistics(const FeatureDataset& dataset,
                                             std::size_t threads = 1);

struct Gaussian {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
};

double squared_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct JitterPolicy {
    double initial = 1e-6;
    double max = 1e-3;
    double growth = 10.0;

    static JitterPolicy none() { return {0.0, 0.0, 10.0}; }
};

/// Lower-triangular L with L * L^T = matrix.
///
/// Positive semi-definite input with exactly degenerate directions (for
/// example the zero matrix) factors without jitter: those columns of L are
/// zero. Otherwise a failed factorization is retried on matrix + eps*I with
/// eps running from policy.initial up to policy.max in steps of policy.growth.
/// Throws NotPositiveDefinite once the schedule is exhausted.
Eigen::MatrixXd cholesky(const Eigen::MatrixXd& matrix, const JitterPolicy& policy = {});

class GaussianSampler {
public:
    GaussianSampler(Eigen::VectorXd mean, Eigen::MatrixXd cholesky_factor, Rng rng);

    static GaussianSampler from_covariance(Eigen::VectorXd mean, const Eigen::MatrixXd& covariance,
                                           Rng rng);

    const Eigen::VectorXd& mean() const noexcept { return mean_; }
    const Eigen::MatrixXd& cholesky_factor() const noexcept { return factor_; }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(mean_.size()); }

    Eigen::VectorXd draw();

private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd factor_;
    Rng rng_;
};

// mean + L * eps with eps drawn from rng; used where the factor is shared.
Eigen::VectorXd draw_gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& factor, Rng& rng);

std::vector<Eigen::VectorXd> sample_gaussian(GaussianSampler& sampler, std::size_t count);

}  // namespace ladc
