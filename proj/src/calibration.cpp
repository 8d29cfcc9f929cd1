#include "ladc/calibration.hpp"

#include "ladc/error.hpp"
#include "ladc/parallel.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <mutex>
#include <numeric>
#include <ostream>
#include <string>

namespace ladc {

std::string_view to_string(CalibrationMode mode) {
    return mode == CalibrationMode::per_instance ? "per_instance" : "class_average";
}

std::string_view to_string(Weighting weighting) {
    return weighting == Weighting::distance ? "distance" : "inverse_distance";
}

CalibrationMode parse_calibration_mode(std::string_view text) {
    if (text == "per_instance") return CalibrationMode::per_instance;
    if (text == "class_average") return CalibrationMode::class_average;
    throw Error(ErrorKind::InvalidConfig, "unknown calibration mode '" + std::string(text) + "'");
}

Weighting parse_weighting(std::string_view text) {
    if (text == "distance") return Weighting::distance;
    if (text == "inverse_distance") return Weighting::inverse_distance;
    throw Error(ErrorKind::InvalidConfig, "unknown weighting '" + std::string(text) + "'");
}

void CalibrationConfig::validate() const {
    if (m < 1) throw Error(ErrorKind::InvalidConfig, "m must be >= 1");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error(ErrorKind::InvalidConfig, "alpha must be >= 0");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw Error(ErrorKind::InvalidConfig, "beta must be >= 0");
    if (n_s < 1) throw Error(ErrorKind::InvalidConfig, "n_s must be >= 1");
    if (mode == CalibrationMode::per_instance && n_s != 1) {
        throw Error(ErrorKind::InvalidConfig, "per_instance calibration requires n_s = 1");
    }
}

std::vector<std::uint32_t> select_neighbors(const Eigen::VectorXd& anchor,
                                            std::span<const ClassStats> head_stats, std::size_t m) {
    if (m == 0 || head_stats.size() < m) {
        throw Error(ErrorKind::InsufficientHeadClasses, std::to_string(head_stats.size()) +
                                                            " head classes available, " + std::to_string(m) +
                                                            " requested");
    }
    std::vector<std::pair<double, std::uint32_t>> ranked;
    ranked.reserve(head_stats.size());
    for (const auto& s : head_stats) ranked.emplace_back(squared_distance(s.mean, anchor), s.class_id);
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(m), ranked.end());
    std::vector<std::uint32_t> out;
    out.reserve(m);
    for (std::size_t i = 0; i < m; ++i) out.push_back(ranked[i].second);
    return out;
}

Eigen::VectorXd prior_weights(const Eigen::VectorXd& anchor, std::span<const ClassStats* const> neighbors,
                              Weighting weighting) {
    const auto k = static_cast<Eigen::Index>(neighbors.size());
    Eigen::VectorXd w(k);
    Eigen::VectorXd counts(k);
    Eigen::VectorXd dist(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        counts[i] = static_cast<double>(neighbors[static_cast<std::size_t>(i)]->count);
        dist[i] = squared_distance(neighbors[static_cast<std::size_t>(i)]->mean, anchor);
    }
    if (weighting == Weighting::distance) {
        w = counts.cwiseProduct(dist);
    } else if ((dist.array() == 0.0).any()) {
        // Limit of n/d^2 as some distances vanish: only the coincident means count.
        w = (dist.array() == 0.0).select(counts, 0.0);
    } else {
        w = counts.cwiseQuotient(dist);
    }
    const double total = w.sum();
    if (!(total > 0.0) || !std::isfinite(total)) w = counts;
    return w / w.sum();
}

Gaussian calibrate_prior(const Eigen::VectorXd& weights, std::span<const ClassStats* const> neighbors,
                         double alpha) {
    if (neighbors.empty() || static_cast<std::size_t>(weights.size()) != neighbors.size()) {
        throw Error(ErrorKind::LengthMismatch, "one weight per neighbor required");
    }
    const auto dim = neighbors.front()->mean.size();
    Gaussian prior{Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Zero(dim, dim)};
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
        const auto& s = *neighbors[i];
        if (!s.has_covariance()) {
            throw Error(ErrorKind::MissingCovariance,
                        "head class " + std::to_string(s.class_id) + " has a single instance");
        }
        const double w = weights[static_cast<Eigen::Index>(i)];
        prior.mean += w * s.mean;
        prior.covariance += (w * w) * *s.covariance;
    }
    prior.covariance.diagonal().array() += alpha;
    return prior;
}

CalibratedDistribution calibrate_posterior(const Eigen::VectorXd& anchor, const Gaussian& prior,
                                           double beta, std::size_t n_s) {
    if (n_s < 1) throw Error(ErrorKind::InvalidConfig, "n_s must be >= 1");
    if (!(beta >= 0.0)) throw Error(ErrorKind::InvalidConfig, "beta must be >= 0");
    if (anchor.size() != prior.mean.size()) {
        throw Error(ErrorKind::DimensionMismatch, "anchor and prior dimensions differ");
    }
    const double ns = static_cast<double>(n_s);
    const double shrink = beta / (ns + beta);
    CalibratedDistribution out;
    out.anchor = anchor;
    out.shrink = shrink;
    out.posterior_mean = shrink * prior.mean + (ns / (ns + beta)) * anchor;
    out.posterior_covariance = shrink * prior.covariance;
    return out;
}

namespace {

CalibratedDistribution calibrate_anchor(const Eigen::VectorXd& anchor, std::uint32_t class_id,
                                        std::span<const ClassStats> pool, const CalibrationConfig& config,
                                        std::size_t n_s) {
    auto ids = select_neighbors(anchor, pool, config.m);
    std::vector<const ClassStats*> chosen;
    chosen.reserve(ids.size());
    for (auto id : ids) {
        chosen.push_back(&*std::find_if(pool.begin(), pool.end(),
                                        [id](const ClassStats& s) { return s.class_id == id; }));
    }
    const auto weights = prior_weights(anchor, chosen, config.weighting);
    const auto prior = calibrate_prior(weights, chosen, config.alpha);
    auto out = calibrate_posterior(anchor, prior, config.beta, n_s);
    out.source_class = class_id;
    out.neighbors = std::move(ids);
    out.weights = weights;
    return out;
}

}  // namespace

std::vector<CalibratedDistribution> calibrate_tail(const FeatureDataset& dataset,
                                                   const HeadTailPartition& partition,
                                                   std::span<const ClassStats> head_stats,
                                                   const CalibrationConfig& config, std::size_t threads) {
    config.validate();
    struct Job {
        std::uint32_t class_id;
        Eigen::VectorXd anchor;
    };
    std::vector<Job> jobs;
    for (auto c : partition.tail) {
        const auto rows = dataset.indices_of_class(c);
        if (rows.empty()) continue;
        if (config.mode == CalibrationMode::per_instance) {
            for (auto r : rows) jobs.push_back({c, dataset.row_vector(r)});
        } else {
            jobs.push_back({c, class_statistics(dataset, c).mean});
        }
    }
    if (jobs.empty()) return {};

    std::vector<ClassStats> pool;
    for (const auto& s : head_stats) {
        if (partition.is_head(s.class_id) && s.has_covariance()) pool.push_back(s);
    }
    if (pool.size() < config.m) {
        throw Error(ErrorKind::InsufficientHeadClasses,
                    std::to_string(pool.size()) + " head classes with a covariance, m = " + std::to_string(config.m));
    }
    const std::size_t n_s = config.mode == CalibrationMode::per_instance ? 1 : config.n_s;
    std::vector<CalibratedDistribution> out(jobs.size());
    parallel_for(jobs.size(), threads, [&](std::size_t i) {
        out[i] = calibrate_anchor(jobs[i].anchor, jobs[i].class_id, pool, config, n_s);
    });
    return out;
}

Gaussian mixture_moments(std::span<const CalibratedDistribution> calibrations, std::uint32_t class_id) {
    std::vector<const CalibratedDistribution*> members;
    for (const auto& c : calibrations) {
        if (c.source_class == class_id) members.push_back(&c);
    }
    if (members.empty()) {
        throw Error(ErrorKind::MissingCalibration, "no calibrated distribution for class " + std::to_string(class_id));
    }
    const auto dim = members.front()->posterior_mean.size();
    const double k = static_cast<double>(members.size());
    Gaussian g{Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Zero(dim, dim)};
    for (const auto* m : members) g.mean += m->posterior_mean;
    g.mean /= k;
    for (const auto* m : members) {
        const Eigen::VectorXd d = m->posterior_mean - g.mean;
        g.covariance += m->posterior_covariance + d * d.transpose();
    }
    g.covariance /= k;
    return g;
}

std::shared_ptr<const Eigen::MatrixXd> FactorCache::factor(const CalibratedDistribution& calibration) {
    Key key;
    key.neighbors = calibration.neighbors;
    key.weight_bits.reserve(static_cast<std::size_t>(calibration.weights.size()));
    for (Eigen::Index i = 0; i < calibration.weights.size(); ++i) {
        key.weight_bits.push_back(std::bit_cast<std::uint64_t>(calibration.weights[i]));
    }
    key.shrink_bits = std::bit_cast<std::uint64_t>(calibration.shrink);
    {
        std::shared_lock lock(mutex_);
        if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    }
    auto computed = std::make_shared<const Eigen::MatrixXd>(cholesky(calibration.posterior_covariance));
    std::unique_lock lock(mutex_);
    auto [it, inserted] = entries_.emplace(std::move(key), std::move(computed));
    return it->second;
}

std::size_t FactorCache::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

void write_calibration_dump(std::ostream& out, std::span<const CalibratedDistribution> calibrations) {
    for (const auto& c : calibrations) {
        nlohmann::json record = {
            {"class", c.source_class},
            {"anchor", to_std(c.anchor)},
            {"neighbors", c.neighbors},
            {"weights", to_std(c.weights)},
            {"posterior_mean", to_std(c.posterior_mean)},
            {"posterior_cov_diag", to_std(c.posterior_covariance.diagonal())},
        };
        out << record.dump() << '\n';
    }
}

}  // namespace ladc
