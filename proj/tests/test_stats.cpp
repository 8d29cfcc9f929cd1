#include "doctest.h"
#include "support.hpp"

#include "ladc/stats.hpp"

#include <cmath>

using namespace ladc;
using ladc::test::error_kind;
using ladc::test::make_dataset;
using ladc::test::random_spd;
using ladc::test::random_vector;

TEST_CASE("class statistics examples") {
    auto ds = make_dataset(2, {{0, 0}, {2, 0}}, {0, 0});
    auto s = class_statistics(ds, 0);
    CHECK(s.count == 2);
    CHECK(s.mean.isApprox(Eigen::Vector2d(1, 0)));
    REQUIRE(s.has_covariance());
    Eigen::Matrix2d expected;
    expected << 2, 0, 0, 0;
    CHECK((*s.covariance - expected).norm() < 1e-15);

    ds = make_dataset(1, {{1.5f, -2}, {1.5f, -2}, {1.5f, -2}}, {0, 0, 0});
    s = class_statistics(ds, 0);
    CHECK(s.covariance->norm() == 0.0);

    ds = make_dataset(2, {{1, 2}, {5, 5}}, {0, 1});
    s = class_statistics(ds, 0);
    CHECK(s.mean.isApprox(Eigen::Vector2d(1, 2)));
    CHECK_FALSE(s.has_covariance());

    CHECK(error_kind([&] { class_statistics(make_dataset(3, {{1.f}}, {0}), 2); }) == ErrorKind::EmptyClass);
}

TEST_CASE("class statistics match a direct oracle and ignore row order") {
    Rng rng(17);
    const std::size_t n = 300, d = 4;
    std::vector<std::vector<float>> rows;
    std::vector<std::uint32_t> labels;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<float> r(d);
        for (auto& v : r) v = static_cast<float>(1000.0 + rng.normal());  // large offset
        rows.push_back(r);
        labels.push_back(static_cast<std::uint32_t>(i % 2));
    }
    const auto ds = make_dataset(2, rows, labels);
    const auto s = class_statistics(ds, 1);

    Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
    std::size_t k = 0;
    for (std::size_t i = 1; i < n; i += 2, ++k)
        for (std::size_t j = 0; j < d; ++j) mu(j) += rows[i][j];
    mu /= static_cast<double>(k);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t i = 1; i < n; i += 2)
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) cov(a, b) += (rows[i][a] - mu(a)) * (rows[i][b] - mu(b));
    cov /= static_cast<double>(k - 1);
    CHECK((s.mean - mu).norm() < 1e-9);
    CHECK((*s.covariance - cov).norm() < 1e-9);
    CHECK((*s.covariance - s.covariance->transpose()).cwiseAbs().maxCoeff() <= 1e-9);

    // Shuffle rows.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_index(i + 1)]);
    std::vector<std::vector<float>> rows2;
    std::vector<std::uint32_t> labels2;
    for (auto i : order) rows2.push_back(rows[i]), labels2.push_back(labels[i]);
    const auto s2 = class_statistics(make_dataset(2, rows2, labels2), 1);
    CHECK((s2.mean - s.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((*s2.covariance - *s.covariance).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("all class statistics skip empty classes and agree across threads") {
    const auto ds = make_dataset(4, {{0, 1}, {2, 3}, {4, 5}, {6, 8}}, {0, 3, 3, 0});
    const auto one = all_class_statistics(ds, 1);
    const auto many = all_class_statistics(ds, 4);
    REQUIRE(one.size() == 2);
    CHECK(one[0].class_id == 0);
    CHECK(one[1].class_id == 3);
    REQUIRE(many.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(one[i].mean == many[i].mean);
        CHECK(*one[i].covariance == *many[i].covariance);
    }
}

TEST_CASE("squared distance") {
    Eigen::VectorXd a(2), b(2);
    a << 0, 0;
    b << 3, 4;
    CHECK(squared_distance(a, b) == 25.0);
    CHECK(squared_distance(b, a) == 25.0);
    CHECK(squared_distance(a, a) == 0.0);
    Eigen::VectorXd c(1), e(1);
    c << 1;
    e << -1;
    CHECK(squared_distance(c, e) == 4.0);
    CHECK(error_kind([&] { squared_distance(a, c); }) == ErrorKind::DimensionMismatch);

    Rng rng(2);
    for (int i = 0; i < 50; ++i) {
        const auto x = random_vector(5, rng), y = random_vector(5, rng);
        CHECK(squared_distance(x, y) == doctest::Approx(squared_distance(y, x)));
        CHECK(squared_distance(x, y) > 0.0);
    }
}

TEST_CASE("cholesky examples") {
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(3, 3);
    CHECK((cholesky(id) - id).norm() == 0.0);

    Eigen::MatrixXd a(2, 2);
    a << 4, 2, 2, 3;
    Eigen::MatrixXd expected(2, 2);
    expected << 2, 0, 1, std::sqrt(2.0);
    CHECK((cholesky(a) - expected).norm() < 1e-12);

    Eigen::MatrixXd neg(1, 1);
    neg << -1;
    CHECK(error_kind([&] { cholesky(neg); }) == ErrorKind::NotPositiveDefinite);

    CHECK(cholesky(Eigen::MatrixXd::Zero(3, 3)).norm() == 0.0);

    // Rank-deficient but PSD factors exactly.
    Eigen::MatrixXd r(2, 2);
    r << 1, 1, 1, 1;
    const auto lr = cholesky(r);
    CHECK((lr * lr.transpose() - r).norm() < 1e-12);

    // Slightly indefinite: rescued by jitter.
    Eigen::MatrixXd s(2, 2);
    s << 1, 1, 1, 1 - 1e-7;
    const auto ls = cholesky(s);
    CHECK((ls * ls.transpose() - s).norm() < 1e-3);
    CHECK(error_kind([&] { cholesky(s, JitterPolicy::none()); }) == ErrorKind::NotPositiveDefinite);

    Eigen::MatrixXd asym(2, 2);
    asym << 1, 0.5, 0, 1;
    CHECK(error_kind([&] { cholesky(asym); }).has_value());
}

TEST_CASE("cholesky round trip on random SPD matrices") {
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        const std::size_t d = 1 + rng.uniform_index(20);
        const auto a = random_spd(d, rng, 1e-3);
        const auto l = cholesky(a);
        CHECK((l * l.transpose() - a).norm() / a.norm() < 1e-6);
        CHECK(l.isLowerTriangular());
        CHECK(l.diagonal().minCoeff() >= 0.0);
    }
}

TEST_CASE("gaussian sampling") {
    Eigen::VectorXd mu(2);
    mu << 1, -2;
    GaussianSampler zero(mu, Eigen::MatrixXd::Zero(2, 2), Rng(1));
    for (const auto& x : sample_gaussian(zero, 10)) CHECK(x == mu);
    CHECK(sample_gaussian(zero, 0).empty());

    Eigen::VectorXd m1 = Eigen::VectorXd::Zero(1);
    auto unit = GaussianSampler::from_covariance(m1, Eigen::MatrixXd::Identity(1, 1), Rng(2));
    const auto xs = sample_gaussian(unit, 100000);
    double mean = 0, var = 0;
    for (const auto& x : xs) mean += x(0);
    mean /= xs.size();
    for (const auto& x : xs) var += (x(0) - mean) * (x(0) - mean);
    var /= xs.size() - 1;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.05);

    auto a = GaussianSampler::from_covariance(mu, Eigen::MatrixXd::Identity(2, 2), Rng(9));
    auto b = GaussianSampler::from_covariance(mu, Eigen::MatrixXd::Identity(2, 2), Rng(9));
    CHECK(sample_gaussian(a, 5) == sample_gaussian(b, 5));
}

TEST_CASE("multivariate sample moments converge") {
    Rng rng(8);
    const std::size_t d = 4, k = 100000;
    const auto cov = random_spd(d, rng);
    const auto mu = random_vector(d, rng);
    auto sampler = GaussianSampler::from_covariance(mu, cov, rng.split(1));
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd second = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t i = 0; i < k; ++i) {
        const auto x = sampler.draw();
        mean += x;
        second += (x - mu) * (x - mu).transpose();
    }
    mean /= static_cast<double>(k);
    second /= static_cast<double>(k);
    for (std::size_t j = 0; j < d; ++j) {
        CHECK(std::abs(mean(j) - mu(j)) < 5.0 * std::sqrt(cov(j, j) / k));
        // Var of the (j,j) second-moment estimate is 2 cov_jj^2 / k.
        CHECK(std::abs(second(j, j) - cov(j, j)) < 5.0 * std::sqrt(2.0 / k) * cov(j, j));
    }
}
