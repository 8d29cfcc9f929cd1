#include "ladc/dataset.hpp"

#include "ladc/error.hpp"
#include "ladc/stats.hpp"

#include "endian.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

namespace ladc {

using detail::get_le;
using detail::put_le;

FeatureDataset::FeatureDataset(std::size_t dim, std::size_t num_classes, std::vector<float> features,
                               std::vector<std::uint32_t> labels)
    : dim_(dim), num_classes_(num_classes), features_(std::move(features)), labels_(std::move(labels)) {
    if (dim_ == 0) throw Error(ErrorKind::DimensionMismatch, "feature dimension must be positive");
    if (num_classes_ == 0) throw Error(ErrorKind::DimensionMismatch, "num_classes must be positive");
    if (features_.size() != labels_.size() * dim_) {
        throw Error(ErrorKind::DimensionMismatch,
                    std::to_string(features_.size()) + " feature values for " +
                        std::to_string(labels_.size()) + " rows of dimension " + std::to_string(dim_));
    }
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] >= num_classes_) {
            throw Error(ErrorKind::DimensionMismatch, "row " + std::to_string(i) + ": label " +
                                                          std::to_string(labels_[i]) + " >= " +
                                                          std::to_string(num_classes_) + " classes");
        }
    }
    for (std::size_t k = 0; k < features_.size(); ++k) {
        if (!std::isfinite(features_[k])) {
            throw Error(ErrorKind::NonFiniteValue, "row " + std::to_string(k / dim_) + ", column " +
                                                       std::to_string(k % dim_));
        }
    }
}

Eigen::VectorXd FeatureDataset::row_vector(std::size_t i) const {
    const auto r = row(i);
    Eigen::VectorXd v(static_cast<Eigen::Index>(dim_));
    for (std::size_t k = 0; k < dim_; ++k) v[static_cast<Eigen::Index>(k)] = r[k];
    return v;
}

std::vector<std::size_t> FeatureDataset::class_counts() const {
    std::vector<std::size_t> counts(num_classes_, 0);
    for (auto l : labels_) ++counts[l];
    return counts;
}

std::vector<std::size_t> FeatureDataset::indices_of_class(std::uint32_t class_id) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] == class_id) out.push_back(i);
    }
    return out;
}

FileFormat format_from_path(const std::filesystem::path& path) {
    return path.extension() == ".csv" ? FileFormat::csv : FileFormat::binary;
}

namespace {

constexpr std::array<char, 4> kMagic = {'L', 'A', 'D', 'C'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 4 + 8;

}  // namespace

FeatureDataset read_binary(std::istream& in) {
    std::array<char, 4> magic{};
    in.read(magic.data(), magic.size());
    if (in.gcount() != 4 || magic != kMagic) {
        throw Error(ErrorKind::MalformedHeader, "byte 0: missing LADC magic");
    }
    std::uint32_t version = 0, dim = 0, num_classes = 0;
    std::uint64_t n = 0;
    if (!get_le(in, version)) throw Error(ErrorKind::MalformedHeader, "byte 4: truncated version");
    if (version != kVersion) {
        throw Error(ErrorKind::MalformedHeader, "byte 4: unsupported version " + std::to_string(version));
    }
    if (!get_le(in, dim)) throw Error(ErrorKind::MalformedHeader, "byte 8: truncated dimension");
    if (dim == 0) throw Error(ErrorKind::MalformedHeader, "byte 8: dimension is zero");
    if (!get_le(in, num_classes)) throw Error(ErrorKind::MalformedHeader, "byte 12: truncated class count");
    if (num_classes == 0) throw Error(ErrorKind::MalformedHeader, "byte 12: class count is zero");
    if (!get_le(in, n)) throw Error(ErrorKind::MalformedHeader, "byte 16: truncated instance count");

    std::vector<std::uint32_t> labels;
    labels.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 20)));
    for (std::uint64_t i = 0; i < n; ++i) {
        std::uint32_t label = 0;
        const auto offset = kHeaderBytes + 4 * i;
        if (!get_le(in, label)) {
            throw Error(ErrorKind::MalformedHeader,
                        "byte " + std::to_string(offset) + ": truncated label section at row " + std::to_string(i));
        }
        if (label >= num_classes) {
            throw Error(ErrorKind::DimensionMismatch, "byte " + std::to_string(offset) + ": label " +
                                                          std::to_string(label) + " >= " +
                                                          std::to_string(num_classes) + " classes");
        }
        labels.push_back(label);
    }
    const std::uint64_t feature_start = kHeaderBytes + 4 * n;
    std::vector<float> features;
    features.reserve(labels.size() * dim);
    for (std::uint64_t i = 0; i < n; ++i) {
        for (std::uint32_t k = 0; k < dim; ++k) {
            float value = 0.0f;
            const auto offset = feature_start + 4 * (i * dim + k);
            if (!get_le(in, value)) {
                throw Error(ErrorKind::DimensionMismatch,
                            "byte " + std::to_string(offset) + ": row " + std::to_string(i) + " has " +
                                std::to_string(k) + " of " + std::to_string(dim) + " values");
            }
            if (!std::isfinite(value)) {
                throw Error(ErrorKind::NonFiniteValue, "byte " + std::to_string(offset) + ": row " +
                                                           std::to_string(i) + ", column " + std::to_string(k));
            }
            features.push_back(value);
        }
    }
    return FeatureDataset(dim, num_classes, std::move(features), std::move(labels));
}

void write_binary(std::ostream& out, const FeatureDataset& dataset) {
    out.write(kMagic.data(), kMagic.size());
    put_le(out, kVersion);
    put_le(out, static_cast<std::uint32_t>(dataset.dim()));
    put_le(out, static_cast<std::uint32_t>(dataset.num_classes()));
    put_le(out, static_cast<std::uint64_t>(dataset.size()));
    for (auto l : dataset.labels()) put_le(out, l);
    for (auto v : dataset.features()) put_le(out, v);
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

FeatureDataset read_csv(std::istream& in, std::optional<std::size_t> dim,
                        std::optional<std::size_t> num_classes) {
    std::vector<float> features;
    std::vector<std::uint32_t> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = trim(line);
        if (text.empty()) continue;
        const auto row = labels.size();
        const std::string where = "row " + std::to_string(row) + " (line " + std::to_string(line_no) + ")";

        std::vector<std::string_view> fields;
        std::size_t start = 0;
        while (true) {
            const auto comma = text.find(',', start);
            fields.push_back(trim(text.substr(start, comma == std::string_view::npos ? comma : comma - start)));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (fields.size() < 2) {
            throw Error(ErrorKind::DimensionMismatch, where + ": expected label and at least one feature");
        }
        if (!dim) dim = fields.size() - 1;
        if (fields.size() - 1 != *dim) {
            throw Error(ErrorKind::DimensionMismatch, where + ": " + std::to_string(fields.size() - 1) +
                                                          " values, expected " + std::to_string(*dim));
        }
        std::uint32_t label = 0;
        {
            const auto f = fields[0];
            auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), label);
            if (ec != std::errc() || ptr != f.data() + f.size()) {
                throw Error(ErrorKind::MalformedHeader, where + ": bad label '" + std::string(f) + "'");
            }
        }
        labels.push_back(label);
        for (std::size_t k = 1; k < fields.size(); ++k) {
            const auto f = fields[k];
            float value = 0.0f;
            auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), value);
            if (ec == std::errc::result_out_of_range) {
                throw Error(ErrorKind::NonFiniteValue, where + ", column " + std::to_string(k - 1));
            }
            if (ec != std::errc() || ptr != f.data() + f.size()) {
                throw Error(ErrorKind::MalformedHeader,
                            where + ": bad value '" + std::string(f) + "' in column " + std::to_string(k - 1));
            }
            if (!std::isfinite(value)) {
                throw Error(ErrorKind::NonFiniteValue, where + ", column " + std::to_string(k - 1));
            }
            features.push_back(value);
        }
    }
    if (!dim) throw Error(ErrorKind::EmptyDataset, "csv has no rows");
    std::size_t classes = num_classes.value_or(0);
    if (!num_classes) {
        for (auto l : labels) classes = std::max<std::size_t>(classes, std::size_t{l} + 1);
    }
    return FeatureDataset(*dim, classes, std::move(features), std::move(labels));
}

void write_csv(std::ostream& out, const FeatureDataset& dataset) {
    std::array<char, 32> buf{};
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        out << dataset.label(i);
        for (float v : dataset.row(i)) {
            auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
            out << ',' << std::string_view(buf.data(), static_cast<std::size_t>(ptr - buf.data()));
        }
        out << '\n';
    }
}

FeatureDataset load_dataset(const std::filesystem::path& path, FileFormat format,
                            std::optional<std::size_t> dim, std::optional<std::size_t> num_classes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    if (format == FileFormat::csv) return read_csv(in, dim, num_classes);
    auto dataset = read_binary(in);
    if (dim && *dim != dataset.dim()) {
        throw Error(ErrorKind::DimensionMismatch, path.string() + ": dimension " +
                                                      std::to_string(dataset.dim()) + ", expected " +
                                                      std::to_string(*dim));
    }
    return dataset;
}

void save_dataset(const FeatureDataset& dataset, const std::filesystem::path& path, FileFormat format) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    if (format == FileFormat::csv) {
        write_csv(out, dataset);
    } else {
        write_binary(out, dataset);
    }
    if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

bool HeadTailPartition::is_head(std::uint32_t class_id) const {
    return std::find(head.begin(), head.end(), class_id) != head.end();
}

HeadTailPartition partition_head_tail(std::span<const std::size_t> counts, double mass_ratio) {
    if (!(mass_ratio > 0.0 && mass_ratio <= 1.0)) {
        throw Error(ErrorKind::InvalidConfig, "mass_ratio must lie in (0, 1], got " + std::to_string(mass_ratio));
    }
    const auto total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    if (counts.empty() || total == 0) throw Error(ErrorKind::EmptyDataset, "no instances to partition");

    std::vector<std::uint32_t> order(counts.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return counts[a] > counts[b]; });

    // Relative slack so that e.g. 30 of 50 counts as reaching 0.6.
    const double threshold = mass_ratio * static_cast<double>(total) * (1.0 - 1e-12);
    HeadTailPartition out;
    out.mass_ratio = mass_ratio;
    std::size_t cumulative = 0;
    std::size_t i = 0;
    for (; i < order.size(); ++i) {
        out.head.push_back(order[i]);
        cumulative += counts[order[i]];
        if (static_cast<double>(cumulative) >= threshold) {
            ++i;
            break;
        }
    }
    out.tail.assign(order.begin() + static_cast<std::ptrdiff_t>(i), order.end());
    return out;
}

std::vector<std::size_t> long_tail_counts(std::size_t num_classes, std::size_t max_count,
                                          double imbalance_factor) {
    if (num_classes == 0 || max_count == 0) {
        throw Error(ErrorKind::InvalidConfig, "num_classes and max_count must be positive");
    }
    if (!(imbalance_factor >= 1.0) || !std::isfinite(imbalance_factor)) {
        throw Error(ErrorKind::InvalidConfig, "imbalance factor must be >= 1");
    }
    std::vector<std::size_t> counts(num_classes);
    for (std::size_t i = 0; i < num_classes; ++i) {
        const double exponent =
            num_classes == 1 ? 0.0 : -static_cast<double>(i) / static_cast<double>(num_classes - 1);
        const double n = std::round(static_cast<double>(max_count) * std::pow(imbalance_factor, exponent));
        counts[i] = std::max<std::size_t>(1, static_cast<std::size_t>(n));
    }
    return counts;
}

namespace {

FeatureDataset draw_split(const SyntheticSpec& spec, const std::vector<Eigen::MatrixXd>& factors,
                          std::span<const std::size_t> counts, Rng rng) {
    std::vector<float> features;
    std::vector<std::uint32_t> labels;
    const auto total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    features.reserve(total * spec.dim);
    labels.reserve(total);
    for (std::uint32_t c = 0; c < spec.num_classes; ++c) {
        Rng class_rng = rng.split(c);
        for (std::size_t i = 0; i < counts[c]; ++i) {
            const auto x = draw_gaussian(spec.true_means[c], factors[c], class_rng);
            for (Eigen::Index k = 0; k < x.size(); ++k) features.push_back(static_cast<float>(x[k]));
            labels.push_back(c);
        }
    }
    return FeatureDataset(spec.dim, spec.num_classes, std::move(features), std::move(labels));
}

}  // namespace

SyntheticSplit generate_synthetic(const SyntheticSpec& spec) {
    if (spec.dim == 0) throw Error(ErrorKind::InvalidConfig, "synthetic dimension must be positive");
    if (spec.true_means.size() != spec.num_classes || spec.true_covariances.size() != spec.num_classes) {
        throw Error(ErrorKind::InvalidConfig, "synthetic spec needs one mean and covariance per class");
    }
    const auto dim = static_cast<Eigen::Index>(spec.dim);
    std::vector<Eigen::MatrixXd> factors;
    factors.reserve(spec.num_classes);
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        const auto& cov = spec.true_covariances[c];
        if (spec.true_means[c].size() != dim || cov.rows() != dim || cov.cols() != dim) {
            throw Error(ErrorKind::DimensionMismatch, "class " + std::to_string(c) + " parameters are not of dimension " +
                                                          std::to_string(spec.dim));
        }
        try {
            factors.push_back(cholesky(cov, JitterPolicy::none()));
        } catch (const Error& e) {
            throw Error(ErrorKind::InvalidCovariance, "class " + std::to_string(c) + ": " + e.what());
        }
    }
    const auto train_counts = long_tail_counts(spec.num_classes, spec.max_count, spec.imbalance_factor);
    const std::vector<std::size_t> test_counts(spec.num_classes, spec.test_per_class);
    const Rng root(spec.seed);
    return {draw_split(spec, factors, train_counts, root.split(1)),
            draw_split(spec, factors, test_counts, root.split(2))};
}

namespace {

Eigen::MatrixXd random_rotation(Eigen::Index dim, Rng& rng) {
    Eigen::MatrixXd g(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i)
        for (Eigen::Index j = 0; j < dim; ++j) g(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, dim);
    // Fix column signs so Q is unique given g.
    const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < dim; ++j) {
        if (r(j, j) < 0) q.col(j) *= -1.0;
    }
    return q;
}

}  // namespace

SyntheticSpec make_oracle_spec(std::size_t num_classes, std::size_t dim, double imbalance_factor,
                               std::size_t max_count, std::size_t test_per_class, std::uint64_t seed,
                               const OracleGeometry& geometry) {
    if (dim == 0) throw Error(ErrorKind::InvalidConfig, "dimension must be positive");
    SyntheticSpec spec;
    spec.num_classes = num_classes;
    spec.dim = dim;
    spec.imbalance_factor = imbalance_factor;
    spec.max_count = max_count;
    spec.test_per_class = test_per_class;
    spec.seed = seed;

    const auto counts = long_tail_counts(num_classes, max_count, imbalance_factor);
    const auto partition = partition_head_tail(counts, geometry.mass_ratio);
    const auto d = static_cast<Eigen::Index>(dim);
    Rng rng = Rng(seed).split(0);

    // Family covariance: shared spectrum, per-family rotation.
    Eigen::VectorXd spectrum(d);
    for (Eigen::Index k = 0; k < d; ++k) {
        const double t = d == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(d - 1);
        spectrum[k] = std::pow(geometry.anisotropy, -t);
    }
    spectrum *= geometry.noise_scale * geometry.noise_scale * static_cast<double>(d) / spectrum.sum();

    spec.true_means.assign(num_classes, Eigen::VectorXd::Zero(d));
    spec.true_covariances.assign(num_classes, Eigen::MatrixXd::Zero(d, d));
    const double edge = geometry.head_separation / std::sqrt(2.0);
    std::vector<Eigen::MatrixXd> family_cov;
    for (std::size_t h = 0; h < partition.head.size(); ++h) {
        const auto c = partition.head[h];
        spec.true_means[c][static_cast<Eigen::Index>(h % dim)] = edge;
        const auto q = random_rotation(d, rng);
        family_cov.push_back(q * spectrum.asDiagonal() * q.transpose());
        spec.true_covariances[c] = family_cov.back();
    }
    for (std::size_t t = 0; t < partition.tail.size(); ++t) {
        const auto c = partition.tail[t];
        const auto parent = t % partition.head.size();
        Eigen::VectorXd direction(d);
        for (Eigen::Index k = 0; k < d; ++k) direction[k] = rng.normal();
        direction.normalize();
        spec.true_means[c] = spec.true_means[partition.head[parent]] + geometry.tail_offset * direction;
        spec.true_covariances[c] = family_cov[parent];
    }
    return spec;
}

}  // namespace ladc
