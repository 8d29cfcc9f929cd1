#include "ladc/stats.hpp"

#include "ladc/error.hpp"
#include "ladc/parallel.hpp"

#include <cmath>
#include <string>

namespace ladc {

ClassStats class_statistics(const FeatureDataset& dataset, std::uint32_t class_id) {
    const auto rows = dataset.indices_of_class(class_id);
    if (rows.empty()) {
        throw Error(ErrorKind::EmptyClass, "class " + std::to_string(class_id) + " has no instances");
    }
    const auto dim = static_cast<Eigen::Index>(dataset.dim());
    ClassStats stats;
    stats.class_id = class_id;
    stats.count = rows.size();

    stats.mean = Eigen::VectorXd::Zero(dim);
    for (auto r : rows) {
        const auto row = dataset.row(r);
        for (Eigen::Index k = 0; k < dim; ++k) stats.mean[k] += static_cast<double>(row[k]);
    }
    stats.mean /= static_cast<double>(rows.size());

    if (rows.size() >= 2) {
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
        Eigen::VectorXd deviation(dim);
        for (auto r : rows) {
            const auto row = dataset.row(r);
            for (Eigen::Index k = 0; k < dim; ++k) deviation[k] = static_cast<double>(row[k]) - stats.mean[k];
            cov.selfadjointView<Eigen::Lower>().rankUpdate(deviation);
        }
        cov = cov.selfadjointView<Eigen::Lower>();
        cov /= static_cast<double>(rows.size() - 1);
        stats.covariance = std::move(cov);
    }
    return stats;
}

std::vector<ClassStats> all_class_statistics(const FeatureDataset& dataset, std::size_t threads) {
    const auto counts = dataset.class_counts();
    std::vector<std::uint32_t> present;
    for (std::uint32_t c = 0; c < counts.size(); ++c) {
        if (counts[c] > 0) present.push_back(c);
    }
    std::vector<ClassStats> out(present.size());
    parallel_for(present.size(), threads,
                 [&](std::size_t i) { out[i] = class_statistics(dataset, present[i]); });
    return out;
}

double squared_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) {
        throw Error(ErrorKind::DimensionMismatch, "vectors of length " + std::to_string(a.size()) +
                                                      " and " + std::to_string(b.size()));
    }
    return (a - b).squaredNorm();
}

namespace {

// Plain Cholesky-Banachiewicz that tolerates exactly degenerate directions.
std::optional<Eigen::MatrixXd> try_factor(const Eigen::MatrixXd& a) {
    const Eigen::Index n = a.rows();
    const double scale = std::max(1.0, a.diagonal().cwiseAbs().maxCoeff());
    const double pivot_tol = 64.0 * static_cast<double>(n) * 2.220446049250313e-16 * scale;
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        double d = a(j, j) - l.row(j).head(j).squaredNorm();
        if (!std::isfinite(d) || d < -pivot_tol) return std::nullopt;
        if (d <= pivot_tol) {
            // Degenerate direction: only acceptable if the rest of the column
            // carries no residual either.
            for (Eigen::Index i = j + 1; i < n; ++i) {
                const double r = a(i, j) - l.row(i).head(j).dot(l.row(j).head(j));
                if (std::abs(r) > pivot_tol) return std::nullopt;
            }
            continue;
        }
        const double root = std::sqrt(d);
        l(j, j) = root;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / root;
        }
    }
    return l;
}

}  // namespace

Eigen::MatrixXd cholesky(const Eigen::MatrixXd& matrix, const JitterPolicy& policy) {
    if (matrix.rows() != matrix.cols()) {
        throw Error(ErrorKind::DimensionMismatch, "cholesky of a non-square matrix");
    }
    if (!matrix.allFinite()) {
        throw Error(ErrorKind::NotPositiveDefinite, "matrix has non-finite entries");
    }
    const double sym_tol = 1e-9 * std::max(1.0, matrix.cwiseAbs().maxCoeff());
    if ((matrix - matrix.transpose()).cwiseAbs().maxCoeff() > sym_tol) {
        throw Error(ErrorKind::NotPositiveDefinite, "matrix is not symmetric");
    }
    if (auto l = try_factor(matrix)) return *std::move(l);

    const auto n = matrix.rows();
    for (double eps = policy.initial; eps > 0.0 && eps <= policy.max * (1.0 + 1e-12);
         eps *= policy.growth) {
        Eigen::MatrixXd shifted = matrix;
        shifted.diagonal().array() += eps;
        if (auto l = try_factor(shifted)) return *std::move(l);
        if (policy.growth <= 1.0) break;
    }
    throw Error(ErrorKind::NotPositiveDefinite,
                std::to_string(n) + "x" + std::to_string(n) +
                    " matrix not positive definite after jitter up to " + std::to_string(policy.max));
}

GaussianSampler::GaussianSampler(Eigen::VectorXd mean, Eigen::MatrixXd cholesky_factor, Rng rng)
    : mean_(std::move(mean)), factor_(std::move(cholesky_factor)), rng_(rng) {
    if (factor_.rows() != mean_.size() || factor_.cols() != mean_.size()) {
        throw Error(ErrorKind::DimensionMismatch, "cholesky factor does not match mean length");
    }
}

GaussianSampler GaussianSampler::from_covariance(Eigen::VectorXd mean,
                                                 const Eigen::MatrixXd& covariance, Rng rng) {
    return GaussianSampler(std::move(mean), cholesky(covariance), rng);
}

Eigen::VectorXd GaussianSampler::draw() { return draw_gaussian(mean_, factor_, rng_); }

Eigen::VectorXd draw_gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& factor, Rng& rng) {
    Eigen::VectorXd eps(mean.size());
    for (Eigen::Index k = 0; k < eps.size(); ++k) eps[k] = rng.normal();
    Eigen::VectorXd out = mean;
    out.noalias() += factor.triangularView<Eigen::Lower>() * eps;
    return out;
}

std::vector<Eigen::VectorXd> sample_gaussian(GaussianSampler& sampler, std::size_t count) {
    std::vector<Eigen::VectorXd> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(sampler.draw());
    return out;
}

}  // namespace ladc
