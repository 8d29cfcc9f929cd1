#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <vector>

namespace ladc {

/// A minibatch: one feature row per instance.
struct Batch {
    Eigen::MatrixXd features;
    std::vector<std::uint32_t> labels;
    // True where the row was sampled from a calibrated distribution.
    std::vector<bool> synthetic;

    std::size_t size() const noexcept { return labels.size(); }
};

class BatchSource {
public:
    virtual ~BatchSource() = default;
    virtual std::size_t batches_per_epoch() const = 0;
    virtual Batch next_batch() = 0;
};

}  // namespace ladc
