#include "doctest.h"
#include "support.hpp"

#include "ladc/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

using namespace ladc;
using ladc::test::error_kind;
using ladc::test::make_dataset;
using ladc::test::random_spd;
using ladc::test::random_vector;

namespace {

ClassStats stats(std::uint32_t id, std::size_t n, Eigen::VectorXd mean, std::optional<Eigen::MatrixXd> cov = {}) {
    ClassStats s;
    s.class_id = id;
    s.count = n;
    s.mean = std::move(mean);
    if (!cov) cov = Eigen::MatrixXd::Identity(s.mean.size(), s.mean.size());
    s.covariance = std::move(cov);
    return s;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(v.size());
    std::size_t i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

}  // namespace

TEST_CASE("neighbor selection") {
    std::vector<ClassStats> heads{stats(0, 10, vec({1, 0})), stats(1, 10, vec({5, 0})), stats(2, 10, vec({2, 0}))};
    const auto anchor = vec({0, 0});
    CHECK(select_neighbors(anchor, heads, 1) == std::vector<std::uint32_t>{0});
    CHECK(select_neighbors(anchor, heads, 2) == std::vector<std::uint32_t>{0, 2});
    CHECK(select_neighbors(anchor, heads, 3) == std::vector<std::uint32_t>{0, 2, 1});
    CHECK(error_kind([&] { select_neighbors(anchor, heads, 4); }) == ErrorKind::InsufficientHeadClasses);

    std::vector<ClassStats> tie{stats(4, 10, vec({0, 1})), stats(3, 10, vec({1, 0}))};
    CHECK(select_neighbors(anchor, tie, 1) == std::vector<std::uint32_t>{3});
}

TEST_CASE("prior weight examples") {
    const auto anchor = vec({0, 0});
    const auto a = stats(0, 10, vec({1, 1}));   // squared distance 2
    const auto b = stats(1, 20, vec({1, 0}));   // squared distance 1
    const ClassStats* one[] = {&a};
    CHECK(prior_weights(anchor, one)(0) == 1.0);

    const ClassStats* two[] = {&a, &b};
    const auto w = prior_weights(anchor, two);
    CHECK(w(0) == doctest::Approx(0.5));
    CHECK(w(1) == doctest::Approx(0.5));

    const auto c = stats(2, 10, vec({0, 1}));
    const auto e = stats(3, 10, vec({0, -1}));
    const ClassStats* sym[] = {&c, &e};
    CHECK(prior_weights(anchor, sym)(0) == doctest::Approx(0.5));

    // Inverse weighting: 10/2 and 20/1.
    const auto inv = prior_weights(anchor, two, Weighting::inverse_distance);
    CHECK(inv(0) == doctest::Approx(5.0 / 25.0));
    CHECK(inv(1) == doctest::Approx(20.0 / 25.0));

    // Anchor on every neighbor mean: proportional to counts.
    const auto f = stats(4, 10, vec({0, 0}));
    const auto g = stats(5, 30, vec({0, 0}));
    const ClassStats* same[] = {&f, &g};
    CHECK(prior_weights(anchor, same)(0) == doctest::Approx(0.25));
    CHECK(prior_weights(anchor, same, Weighting::inverse_distance)(1) == doctest::Approx(0.75));
}

TEST_CASE("prior weights sum to one and follow neighbor order") {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t m = 1 + rng.uniform_index(5);
        std::vector<ClassStats> s;
        for (std::size_t i = 0; i < m; ++i)
            s.push_back(stats(static_cast<std::uint32_t>(i), 1 + rng.uniform_index(100), random_vector(3, rng)));
        const auto anchor = random_vector(3, rng);
        for (auto weighting : {Weighting::distance, Weighting::inverse_distance}) {
            std::vector<const ClassStats*> ptr;
            for (auto& x : s) ptr.push_back(&x);
            const auto w = prior_weights(anchor, ptr, weighting);
            CHECK(std::abs(w.sum() - 1.0) < 1e-9);
            CHECK(w.minCoeff() >= 0.0);
            // Direct oracle from the formula.
            Eigen::VectorXd raw(m);
            for (std::size_t i = 0; i < m; ++i) {
                const double d2 = (s[i].mean - anchor).squaredNorm();
                raw(i) = weighting == Weighting::distance ? s[i].count * d2 : s[i].count / d2;
            }
            raw /= raw.sum();
            CHECK((w - raw).cwiseAbs().maxCoeff() < 1e-12);

            std::vector<std::size_t> perm(m);
            for (std::size_t i = 0; i < m; ++i) perm[i] = m - 1 - i;
            std::vector<const ClassStats*> permuted;
            for (auto i : perm) permuted.push_back(ptr[i]);
            const auto wp = prior_weights(anchor, permuted, weighting);
            for (std::size_t i = 0; i < m; ++i) CHECK(wp(i) == doctest::Approx(w(perm[i])).epsilon(1e-12));
        }
    }
}

TEST_CASE("prior examples") {
    const auto a = stats(0, 5, vec({0, 0}), Eigen::MatrixXd::Identity(2, 2));
    const auto b = stats(1, 5, vec({2, 2}), Eigen::MatrixXd::Identity(2, 2));
    const ClassStats* one[] = {&a};
    auto prior = calibrate_prior(vec({1.0}), one, 0.0);
    CHECK(prior.mean == a.mean);
    CHECK(prior.covariance == *a.covariance);

    const ClassStats* two[] = {&a, &b};
    prior = calibrate_prior(vec({0.5, 0.5}), two, 0.1);
    CHECK(prior.mean.isApprox(vec({1, 1})));
    CHECK((prior.covariance - 0.6 * Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-12);

    const auto z1 = stats(0, 5, vec({0, 0}), Eigen::MatrixXd::Zero(2, 2));
    const auto z2 = stats(1, 5, vec({1, 0}), Eigen::MatrixXd::Zero(2, 2));
    const ClassStats* zeros[] = {&z1, &z2};
    prior = calibrate_prior(vec({0.3, 0.7}), zeros, 0.2);
    CHECK((prior.covariance - 0.2 * Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-15);

    ClassStats lone = stats(2, 1, vec({0, 0}));
    lone.covariance.reset();
    const ClassStats* missing[] = {&lone};
    CHECK(error_kind([&] { calibrate_prior(vec({1.0}), missing, 0.1); }) == ErrorKind::MissingCovariance);
}

TEST_CASE("alpha adds exactly to the diagonal") {
    Rng rng(12);
    const auto a = stats(0, 5, random_vector(3, rng), random_spd(3, rng));
    const auto b = stats(1, 9, random_vector(3, rng), random_spd(3, rng));
    const ClassStats* two[] = {&a, &b};
    const auto w = vec({0.4, 0.6});
    const auto lo = calibrate_prior(w, two, 0.1);
    const auto hi = calibrate_prior(w, two, 0.25);
    const Eigen::MatrixXd diff = hi.covariance - lo.covariance;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(diff(i, j) == doctest::Approx(i == j ? 0.15 : 0.0));
}

TEST_CASE("posterior examples") {
    Gaussian prior{vec({2, 0}), 2.0 * Eigen::MatrixXd::Identity(2, 2)};
    const auto anchor = vec({0, 4});

    auto post = calibrate_posterior(anchor, prior, 0.0, 1);
    CHECK(post.posterior_mean == anchor);
    CHECK(post.posterior_covariance.norm() == 0.0);

    post = calibrate_posterior(anchor, prior, 1.0, 1);
    CHECK(post.posterior_mean.isApprox(vec({1, 2})));
    CHECK(post.posterior_covariance.isApprox(Eigen::MatrixXd::Identity(2, 2)));
    CHECK(post.shrink == 0.5);

    post = calibrate_posterior(anchor, prior, 1e12, 1);
    CHECK((post.posterior_mean - prior.mean).norm() < 1e-10);
    CHECK((post.posterior_covariance - prior.covariance).norm() < 1e-10);
}

TEST_CASE("posterior interpolation and eigenvalue scaling") {
    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t d = 2 + rng.uniform_index(5);
        Gaussian prior{random_vector(d, rng), random_spd(d, rng)};
        const auto anchor = random_vector(d, rng);
        const double beta = 0.05 + 3.0 * rng.uniform01();
        const std::size_t n_s = 1 + rng.uniform_index(4);
        const auto post = calibrate_posterior(anchor, prior, beta, n_s);
        const double ratio = beta / (static_cast<double>(n_s) + beta);

        const double along = (post.posterior_mean - anchor).norm() / (prior.mean - anchor).norm();
        CHECK(along == doctest::Approx(ratio).epsilon(1e-10));
        // Collinear: the remainder lies on the same segment.
        const double rest = (prior.mean - post.posterior_mean).norm() / (prior.mean - anchor).norm();
        CHECK(along + rest == doctest::Approx(1.0).epsilon(1e-10));

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ep(prior.covariance), eq(post.posterior_covariance);
        for (std::size_t i = 0; i < d; ++i)
            CHECK(eq.eigenvalues()(i) == doctest::Approx(ratio * ep.eigenvalues()(i)).epsilon(1e-9));
    }
}

TEST_CASE("m = 1 and alpha = 0 transfers the neighbor exactly") {
    Rng rng(30);
    const auto head = stats(0, 40, random_vector(3, rng), random_spd(3, rng));
    const ClassStats* one[] = {&head};
    const auto prior = calibrate_prior(prior_weights(random_vector(3, rng), one), one, 0.0);
    CHECK(prior.mean == head.mean);
    CHECK(prior.covariance == *head.covariance);
}

TEST_CASE("calibrate tail cardinality") {
    // Head class 0 (6 rows), head class 1 (5 rows), tail class 2 (3 rows).
    std::vector<std::vector<float>> rows;
    std::vector<std::uint32_t> labels;
    Rng rng(1);
    auto add = [&](std::uint32_t c, int n, float cx) {
        for (int i = 0; i < n; ++i) {
            rows.push_back({cx + static_cast<float>(rng.normal() * 0.1), static_cast<float>(rng.normal() * 0.1)});
            labels.push_back(c);
        }
    };
    add(0, 6, 0.f);
    add(1, 5, 3.f);
    add(2, 3, 1.f);
    const auto ds = make_dataset(3, rows, labels);
    const auto partition = partition_head_tail(ds.class_counts(), 0.75);
    REQUIRE(partition.tail == std::vector<std::uint32_t>{2});
    std::vector<ClassStats> head_stats{class_statistics(ds, 0), class_statistics(ds, 1)};

    CalibrationConfig config;
    auto cal = calibrate_tail(ds, partition, head_stats, config);
    REQUIRE(cal.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(cal[i].source_class == 2);
        CHECK(cal[i].anchor == ds.row_vector(11 + i));
        CHECK(cal[i].neighbors.size() == 2);
        CHECK(std::abs(cal[i].weights.sum() - 1.0) < 1e-9);
    }

    config.mode = CalibrationMode::class_average;
    cal = calibrate_tail(ds, partition, head_stats, config);
    REQUIRE(cal.size() == 1);
    CHECK((cal[0].anchor - class_statistics(ds, 2).mean).norm() < 1e-12);

    auto threaded = calibrate_tail(ds, partition, head_stats, CalibrationConfig{}, 4);
    auto single = calibrate_tail(ds, partition, head_stats, CalibrationConfig{}, 1);
    for (std::size_t i = 0; i < single.size(); ++i) CHECK(threaded[i].posterior_mean == single[i].posterior_mean);

    const auto all_head = partition_head_tail(ds.class_counts(), 1.0);
    CHECK(calibrate_tail(ds, all_head, head_stats, CalibrationConfig{}).empty());

    config = CalibrationConfig{};
    config.m = 3;
    CHECK(error_kind([&] { calibrate_tail(ds, partition, head_stats, config); }) ==
          ErrorKind::InsufficientHeadClasses);
}

TEST_CASE("single-instance head classes leave the neighbor pool") {
    auto ds = make_dataset(3, {{0, 0}, {0.2f, 0}, {0.1f, 0.1f}, {5, 5}, {1, 1}}, {0, 0, 0, 1, 2});
    HeadTailPartition p{{0, 1}, {2}, 0.6};
    std::vector<ClassStats> head_stats{class_statistics(ds, 0), class_statistics(ds, 1)};
    CalibrationConfig config;
    config.m = 1;
    const auto cal = calibrate_tail(ds, p, head_stats, config);
    REQUIRE(cal.size() == 1);
    CHECK(cal[0].neighbors == std::vector<std::uint32_t>{0});
    config.m = 2;
    CHECK(error_kind([&] { calibrate_tail(ds, p, head_stats, config); }) == ErrorKind::InsufficientHeadClasses);
}

TEST_CASE("calibration config validation") {
    CalibrationConfig c;
    CHECK_NOTHROW(c.validate());
    c.alpha = -0.1;
    CHECK(error_kind([&] { c.validate(); }) == ErrorKind::InvalidConfig);
    c = {};
    c.beta = -1;
    CHECK(error_kind([&] { c.validate(); }) == ErrorKind::InvalidConfig);
    c = {};
    c.m = 0;
    CHECK(error_kind([&] { c.validate(); }) == ErrorKind::InvalidConfig);
    CHECK(parse_weighting("inverse_distance") == Weighting::inverse_distance);
    CHECK(parse_calibration_mode(to_string(CalibrationMode::class_average)) == CalibrationMode::class_average);
    CHECK(error_kind([] { parse_weighting("nope"); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("mixture moments") {
    CalibratedDistribution a, b;
    a.source_class = b.source_class = 4;
    a.posterior_mean = vec({0, 0});
    b.posterior_mean = vec({2, 0});
    a.posterior_covariance = b.posterior_covariance = Eigen::MatrixXd::Identity(2, 2);
    std::vector<CalibratedDistribution> cal{a, b};
    const auto g = mixture_moments(cal, 4);
    CHECK(g.mean.isApprox(vec({1, 0})));
    Eigen::MatrixXd expected(2, 2);
    expected << 2, 0, 0, 1;  // 1 + spread of the means (+-1)
    CHECK((g.covariance - expected).norm() < 1e-12);
    CHECK(error_kind([&] { mixture_moments(cal, 5); }) == ErrorKind::MissingCalibration);
}

TEST_CASE("factor cache reuses factors for equal keys") {
    Rng rng(3);
    CalibratedDistribution a;
    a.neighbors = {0, 1};
    a.weights = vec({0.3, 0.7});
    a.shrink = 0.4;
    a.posterior_covariance = random_spd(3, rng);
    auto b = a;
    b.anchor = vec({1, 2, 3});
    FactorCache cache;
    const auto fa = cache.factor(a);
    const auto fb = cache.factor(b);
    CHECK(fa == fb);
    CHECK(cache.size() == 1);
    CHECK((*fa * fa->transpose() - a.posterior_covariance).norm() < 1e-10);
    auto c = a;
    c.shrink = 0.5;
    c.posterior_covariance *= 0.5 / 0.4;
    cache.factor(c);
    CHECK(cache.size() == 2);
}

TEST_CASE("calibration dump is one JSON object per line") {
    CalibratedDistribution a;
    a.source_class = 3;
    a.anchor = vec({1, 2});
    a.posterior_mean = vec({0.5, 1});
    a.posterior_covariance = Eigen::MatrixXd::Identity(2, 2);
    a.neighbors = {0};
    a.weights = vec({1});
    std::vector<CalibratedDistribution> cal{a, a};
    std::ostringstream out;
    write_calibration_dump(out, cal);
    std::istringstream in(out.str());
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.at("class") == 3);
        ++lines;
    }
    CHECK(lines == 2);
}
