#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace ladc {

/// Labeled feature vectors stored row-major as 32-bit floats.
///
/// Immutable after construction; the constructor validates that every label is
/// below num_classes and every value is finite.
class FeatureDataset {
public:
    FeatureDataset() = default;
    FeatureDataset(std::size_t dim, std::size_t num_classes, std::vector<float> features,
                   std::vector<std::uint32_t> labels);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t num_classes() const noexcept { return num_classes_; }
    std::size_t size() const noexcept { return labels_.size(); }
    bool empty() const noexcept { return labels_.empty(); }

    std::span<const float> row(std::size_t i) const {
        return {features_.data() + i * dim_, dim_};
    }
    Eigen::VectorXd row_vector(std::size_t i) const;
    std::uint32_t label(std::size_t i) const { return labels_[i]; }

    const std::vector<float>& features() const noexcept { return features_; }
    const std::vector<std::uint32_t>& labels() const noexcept { return labels_; }

    std::vector<std::size_t> class_counts() const;
    std::vector<std::size_t> indices_of_class(std::uint32_t class_id) const;

    bool operator==(const FeatureDataset&) const = default;

private:
    std::size_t dim_ = 0;
    std::size_t num_classes_ = 0;
    std::vector<float> features_;
    std::vector<std::uint32_t> labels_;
};

enum class FileFormat { binary, csv };

// ".csv" selects csv, anything else the binary container.
FileFormat format_from_path(const std::filesystem::path& path);

// Binary container: "LADC", u32 version (1), u32 D, u32 C, u64 N, N u32 labels,
// N*D f32 features, all little-endian.
FeatureDataset read_binary(std::istream& in);
void write_binary(std::ostream& out, const FeatureDataset& dataset);

// Header-less rows "label,f_0,...,f_{D-1}". D is taken from the first row when
// not given; C defaults to max label + 1.
FeatureDataset read_csv(std::istream& in, std::optional<std::size_t> dim = {},
                        std::optional<std::size_t> num_classes = {});
void write_csv(std::ostream& out, const FeatureDataset& dataset);

FeatureDataset load_dataset(const std::filesystem::path& path, FileFormat format,
                            std::optional<std::size_t> dim = {},
                            std::optional<std::size_t> num_classes = {});
void save_dataset(const FeatureDataset& dataset, const std::filesystem::path& path,
                  FileFormat format);

/// Classes split into the most frequent (head) and the rest (tail), both in
/// count-descending order with ties broken by ascending class index.
struct HeadTailPartition {
    std::vector<std::uint32_t> head;
    std::vector<std::uint32_t> tail;
    double mass_ratio = 0.6;

    bool is_head(std::uint32_t class_id) const;
    std::size_t num_classes() const { return head.size() + tail.size(); }
};

// Head is the shortest count-sorted prefix whose cumulative count reaches
// mass_ratio * N.
HeadTailPartition partition_head_tail(std::span<const std::size_t> counts, double mass_ratio);

struct SyntheticSpec {
    std::size_t num_classes = 10;
    std::size_t dim = 16;
    double imbalance_factor = 100.0;
    std::size_t max_count = 500;
    std::size_t test_per_class = 200;
    std::vector<Eigen::VectorXd> true_means;
    std::vector<Eigen::MatrixXd> true_covariances;
    std::uint64_t seed = 0;
};

// n_i = round(n_1 * IF^(-i/(C-1))), at least 1.
std::vector<std::size_t> long_tail_counts(std::size_t num_classes, std::size_t max_count,
                                          double imbalance_factor);

struct SyntheticSplit {
    FeatureDataset train;
    FeatureDataset test;
};

// Long-tailed train split and balanced test split drawn from the described
// Gaussian mixture. Deterministic in the seed.
SyntheticSplit generate_synthetic(const SyntheticSpec& spec);

/// Geometry of the ground-truth mixture built by make_oracle_spec.
///
/// Head class means sit on a simplex of edge head_separation. Each tail class
/// is attached to a head "parent": its mean is the parent mean plus a random
/// offset of length tail_offset (so tail means stay within tail_offset of a head
/// mean). Classes of one family share a covariance spectrum with scale
/// noise_scale^2 and eigenvalue ratio up to anisotropy, rotated per family.
struct OracleGeometry {
    double head_separation = 2.0;
    double tail_offset = 0.9;
    double noise_scale = 0.1;
    double anisotropy = 4.0;
    double mass_ratio = 0.6;
};

SyntheticSpec make_oracle_spec(std::size_t num_classes, std::size_t dim, double imbalance_factor,
                               std::size_t max_count, std::size_t test_per_class,
                               std::uint64_t seed, const OracleGeometry& geometry = {});

}  // namespace ladc
