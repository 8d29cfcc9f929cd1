#pragma once

#include "ladc/dataset.hpp"
#include "ladc/error.hpp"
#include "ladc/rng.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace ladc::test {

// Kind of the ladc::Error thrown by f, or nothing if f returns normally.
template <class F>
std::optional<ErrorKind> error_kind(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    return std::nullopt;
}

inline FeatureDataset make_dataset(std::size_t num_classes, const std::vector<std::vector<float>>& rows,
                                   const std::vector<std::uint32_t>& labels) {
    std::vector<float> flat;
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return FeatureDataset(rows.empty() ? 1 : rows.front().size(), num_classes, std::move(flat), labels);
}

inline Eigen::MatrixXd random_spd(std::size_t d, Rng& rng, double ridge = 0.1) {
    Eigen::MatrixXd a(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) a(i, j) = rng.normal();
    return a * a.transpose() / static_cast<double>(d) + ridge * Eigen::MatrixXd::Identity(d, d);
}

inline Eigen::VectorXd random_vector(std::size_t d, Rng& rng, double scale = 1.0) {
    Eigen::VectorXd v(d);
    for (std::size_t i = 0; i < d; ++i) v(i) = scale * rng.normal();
    return v;
}

}  // namespace ladc::test
