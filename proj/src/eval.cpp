#include "ladc/eval.hpp"

#include "ladc/error.hpp"
#include "ladc/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

namespace ladc {

ShotGroup shot_group(std::size_t train_count, const GroupThresholds& thresholds) {
    if (train_count > thresholds.many_above) return ShotGroup::many;
    if (train_count < thresholds.few_below) return ShotGroup::few;
    return ShotGroup::medium;
}

std::string_view to_string(ShotGroup group) {
    switch (group) {
        case ShotGroup::many: return "many";
        case ShotGroup::medium: return "medium";
        case ShotGroup::few: return "few";
    }
    return "many";
}

std::optional<double> GroupedAccuracy::group(ShotGroup g) const {
    switch (g) {
        case ShotGroup::many: return many;
        case ShotGroup::medium: return medium;
        case ShotGroup::few: return few;
    }
    return std::nullopt;
}

GroupedAccuracy grouped_accuracy(std::span<const std::uint32_t> predictions, std::span<const std::uint32_t> truths,
                                 std::span<const std::size_t> train_counts, const GroupThresholds& thresholds) {
    if (predictions.size() != truths.size()) {
        throw Error(ErrorKind::LengthMismatch, std::to_string(predictions.size()) + " predictions for " +
                                                   std::to_string(truths.size()) + " truths");
    }
    std::array<std::size_t, 3> correct{};
    GroupedAccuracy out;
    std::size_t total_correct = 0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        if (truths[i] >= train_counts.size()) {
            throw Error(ErrorKind::DimensionMismatch, "truth label " + std::to_string(truths[i]) + " has no train count");
        }
        const auto g = static_cast<std::size_t>(shot_group(train_counts[truths[i]], thresholds));
        ++out.group_sizes[g];
        if (predictions[i] == truths[i]) {
            ++correct[g];
            ++total_correct;
        }
    }
    out.overall = truths.empty() ? 0.0 : static_cast<double>(total_correct) / static_cast<double>(truths.size());
    auto rate = [&](std::size_t g) -> std::optional<double> {
        if (out.group_sizes[g] == 0) return std::nullopt;
        return static_cast<double>(correct[g]) / static_cast<double>(out.group_sizes[g]);
    };
    out.many = rate(0);
    out.medium = rate(1);
    out.few = rate(2);
    return out;
}

std::vector<std::optional<double>> per_class_accuracy(std::span<const std::uint32_t> predictions,
                                                      std::span<const std::uint32_t> truths,
                                                      std::size_t num_classes) {
    if (predictions.size() != truths.size()) {
        throw Error(ErrorKind::LengthMismatch, "predictions and truths differ in length");
    }
    std::vector<std::size_t> seen(num_classes, 0), hit(num_classes, 0);
    for (std::size_t i = 0; i < truths.size(); ++i) {
        if (truths[i] >= num_classes) throw Error(ErrorKind::DimensionMismatch, "truth label out of range");
        ++seen[truths[i]];
        if (predictions[i] == truths[i]) ++hit[truths[i]];
    }
    std::vector<std::optional<double>> out(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (seen[c] > 0) out[c] = static_cast<double>(hit[c]) / static_cast<double>(seen[c]);
    }
    return out;
}

namespace {

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen_of(const Eigen::MatrixXd& matrix) {
    const Eigen::MatrixXd sym = 0.5 * (matrix + matrix.transpose());
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym);
}

Eigen::MatrixXd sqrt_from(const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& es) {
    const Eigen::VectorXd roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose();
}

void require_psd(const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& es, std::string_view which) {
    const auto& ev = es.eigenvalues();
    if (ev.size() == 0) return;
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    if (!ev.allFinite() || ev.minCoeff() < -1e-8 * scale) {
        throw Error(ErrorKind::NotPositiveDefinite, std::string(which) + " covariance has a negative eigenvalue");
    }
}

}  // namespace

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& matrix) { return sqrt_from(eigen_of(matrix)); }

double distribution_gap(const Gaussian& estimated, const Gaussian& truth) {
    const auto d = estimated.mean.size();
    if (truth.mean.size() != d || estimated.covariance.rows() != d || estimated.covariance.cols() != d ||
        truth.covariance.rows() != d || truth.covariance.cols() != d) {
        throw Error(ErrorKind::DimensionMismatch, "Gaussians of different dimension");
    }
    const auto es1 = eigen_of(estimated.covariance);
    const auto es2 = eigen_of(truth.covariance);
    require_psd(es1, "estimated");
    require_psd(es2, "reference");
    const Eigen::MatrixXd root2 = sqrt_from(es2);
    const Eigen::MatrixXd cross = root2 * estimated.covariance * root2;
    const auto es_cross = eigen_of(cross);
    const double cross_trace = es_cross.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double mean_term = (estimated.mean - truth.mean).squaredNorm();
    const double cov_term = estimated.covariance.trace() + truth.covariance.trace() - 2.0 * cross_trace;
    return std::max(0.0, mean_term + cov_term);
}

std::string_view to_string(PointOrigin origin) {
    switch (origin) {
        case PointOrigin::real: return "real";
        case PointOrigin::synthetic: return "synthetic";
        case PointOrigin::test: return "test";
    }
    return "real";
}

ScatterExport project_2d(std::span<const Eigen::VectorXd> features, std::span<const std::uint32_t> labels,
                         std::span<const PointOrigin> origins, const Eigen::MatrixXd& projection) {
    if (labels.size() != features.size() || origins.size() != features.size()) {
        throw Error(ErrorKind::LengthMismatch, "features, labels and origins differ in length");
    }
    if (projection.rows() != 2) throw Error(ErrorKind::DimensionMismatch, "projection must have two rows");
    ScatterExport out;
    out.projection = projection;
    out.points.reserve(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].size() != projection.cols()) {
            throw Error(ErrorKind::DimensionMismatch, "feature " + std::to_string(i) + " has length " +
                                                          std::to_string(features[i].size()) + ", projection expects " +
                                                          std::to_string(projection.cols()));
        }
        const Eigen::Vector2d p = projection * features[i];
        out.points.push_back({p[0], p[1], labels[i], origins[i]});
    }
    return out;
}

Eigen::MatrixXd fit_projection(const FeatureDataset& dataset, const ProjectionFitOptions& options) {
    if (dataset.empty()) throw Error(ErrorKind::EmptyDataset, "cannot fit a projection on an empty dataset");
    const auto d = static_cast<Eigen::Index>(dataset.dim());
    const auto c = static_cast<Eigen::Index>(dataset.num_classes());
    Rng rng = Rng(options.seed).split(0x2d);
    Eigen::MatrixXd proj(2, d), head(c, 2);
    for (Eigen::Index i = 0; i < proj.size(); ++i) proj.data()[i] = 0.1 * rng.normal();
    for (Eigen::Index i = 0; i < head.size(); ++i) head.data()[i] = 0.1 * rng.normal();
    Eigen::VectorXd bias = Eigen::VectorXd::Zero(c);
    Eigen::MatrixXd v_proj = Eigen::MatrixXd::Zero(2, d), v_head = Eigen::MatrixXd::Zero(c, 2);
    Eigen::VectorXd v_bias = Eigen::VectorXd::Zero(c);

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto batch = std::max<std::size_t>(1, options.batch_size);
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const auto take = std::min(batch, order.size() - start);
            Eigen::MatrixXd x(static_cast<Eigen::Index>(take), d);
            for (std::size_t r = 0; r < take; ++r) x.row(static_cast<Eigen::Index>(r)) = dataset.row_vector(order[start + r]).transpose();
            const Eigen::MatrixXd h = x * proj.transpose();
            Eigen::MatrixXd z = h * head.transpose();
            z.rowwise() += bias.transpose();
            for (Eigen::Index r = 0; r < z.rows(); ++r) {
                const double top = z.row(r).maxCoeff();
                z.row(r) = (z.row(r).array() - top).exp();
                z.row(r) /= z.row(r).sum();
                z(r, dataset.label(order[start + static_cast<std::size_t>(r)])) -= 1.0;
            }
            z /= static_cast<double>(take);
            const Eigen::MatrixXd g_head = z.transpose() * h;
            const Eigen::VectorXd g_bias = z.colwise().sum().transpose();
            const Eigen::MatrixXd g_proj = (z * head).transpose() * x;
            v_head = options.momentum * v_head + g_head;
            v_bias = options.momentum * v_bias + g_bias;
            v_proj = options.momentum * v_proj + g_proj;
            head -= options.lr * v_head;
            bias -= options.lr * v_bias;
            proj -= options.lr * v_proj;
        }
    }
    if (!proj.allFinite()) throw Error(ErrorKind::NonFiniteLoss, "projection fit diverged");
    return proj;
}

void write_scatter_csv(std::ostream& out, const ScatterExport& scatter) {
    out << "x,y,label,origin\n";
    out << std::setprecision(17);
    for (const auto& p : scatter.points) {
        out << p.x << ',' << p.y << ',' << p.label << ',' << to_string(p.origin) << '\n';
    }
}

namespace {

std::string class_color(std::uint32_t label) {
    static constexpr std::array<const char*, 10> palette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    if (label < palette.size()) return palette[label];
    std::ostringstream hsl;
    hsl << "hsl(" << (label * 137) % 360 << ",65%,45%)";
    return hsl.str();
}

}  // namespace

void write_scatter_svg(std::ostream& out, const ScatterExport& scatter, std::string_view title) {
    constexpr double width = 720.0, height = 720.0, margin = 48.0, r = 3.0;
    double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
    if (!scatter.points.empty()) {
        x_min = x_max = scatter.points.front().x;
        y_min = y_max = scatter.points.front().y;
        for (const auto& p : scatter.points) {
            x_min = std::min(x_min, p.x);
            x_max = std::max(x_max, p.x);
            y_min = std::min(y_min, p.y);
            y_max = std::max(y_max, p.y);
        }
    }
    if (x_max - x_min < 1e-12) { x_min -= 0.5; x_max += 0.5; }
    if (y_max - y_min < 1e-12) { y_min -= 0.5; y_max += 0.5; }
    const double sx = (width - 2 * margin) / (x_max - x_min);
    const double sy = (height - 2 * margin) / (y_max - y_min);
    auto px = [&](double x) { return margin + (x - x_min) * sx; };
    auto py = [&](double y) { return height - margin - (y - y_min) * sy; };

    out << std::fixed << std::setprecision(2);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << width - 2 * margin << "\" height=\""
        << height - 2 * margin << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
    if (!title.empty()) {
        out << "<text x=\"" << width / 2 << "\" y=\"" << margin / 2
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
    }
    for (const auto& p : scatter.points) {
        const auto color = class_color(p.label);
        const double x = px(p.x), y = py(p.y);
        switch (p.origin) {
            case PointOrigin::real:
                out << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << r << "\" fill=\"" << color
                    << "\" fill-opacity=\"0.7\"/>\n";
                break;
            case PointOrigin::synthetic:
                out << "<polygon points=\"" << x << ',' << y - r << ' ' << x - r << ',' << y + r << ' ' << x + r << ','
                    << y + r << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1\"/>\n";
                break;
            case PointOrigin::test:
                out << "<rect x=\"" << x - r << "\" y=\"" << y - r << "\" width=\"" << 2 * r << "\" height=\"" << 2 * r
                    << "\" fill=\"" << color << "\" fill-opacity=\"0.4\"/>\n";
                break;
        }
    }
    out << "<text x=\"" << margin << "\" y=\"" << height - margin / 3
        << "\" font-family=\"sans-serif\" font-size=\"11\">circle: real, triangle: synthetic, square: test</text>\n";
    out << "</svg>\n";
}

}  // namespace ladc
