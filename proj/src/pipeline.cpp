#include "ladc/pipeline.hpp"

#include "ladc/error.hpp"
#include "ladc/sampler.hpp"
#include "ladc/stats.hpp"

#include "json.hpp"

#include <chrono>
#include <fstream>
#include <numeric>
#include <sstream>

namespace ladc {

namespace {

constexpr std::uint64_t kStage1Stream = 1;
constexpr std::uint64_t kStage2Stream = 2;
constexpr std::uint64_t kProjectionStream = 3;
constexpr std::uint64_t kScatterStream = 4;
constexpr std::size_t kScatterSyntheticPerClass = 100;

template <typename F>
auto in_phase(std::string_view phase, std::map<std::string, double>& timings, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    auto record = [&] {
        timings[std::string(phase)] +=
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };
    try {
        if constexpr (std::is_void_v<decltype(body())>) {
            body();
            record();
        } else {
            auto out = body();
            record();
            return out;
        }
    } catch (const Error& e) {
        throw e.wrapped(phase);
    }
}

}  // namespace

SyntheticSpec synthetic_spec_for(const ExperimentConfig& config) {
    auto geometry = config.data.geometry;
    geometry.mass_ratio = config.mass_ratio;
    return make_oracle_spec(config.data.classes, config.data.dim, config.data.imbalance, config.data.max_count,
                            config.data.test_per_class, config.seed, geometry);
}

std::vector<Gaussian> truth_of(const SyntheticSpec& spec) {
    std::vector<Gaussian> out;
    for (std::size_t c = 0; c < spec.num_classes; ++c) out.push_back({spec.true_means[c], spec.true_covariances[c]});
    return out;
}

PipelineInputs load_inputs(const ExperimentConfig& config) {
    PipelineInputs inputs;
    if (config.data.synthetic()) {
        const auto spec = synthetic_spec_for(config);
        auto split = generate_synthetic(spec);
        inputs.train = std::move(split.train);
        inputs.test = std::move(split.test);
        inputs.truth = truth_of(spec);
    } else {
        inputs.train = load_dataset(config.data.train_path, format_from_path(config.data.train_path));
        inputs.test = load_dataset(config.data.test_path, format_from_path(config.data.test_path), inputs.train.dim(),
                                   inputs.train.num_classes());
        if (inputs.test.num_classes() != inputs.train.num_classes()) {
            throw Error(ErrorKind::DimensionMismatch, "train and test class counts differ");
        }
    }
    return inputs;
}

Gaussian empirical_gaussian(const ClassStats& stats, double ridge) {
    const auto d = stats.mean.size();
    Gaussian g{stats.mean, stats.covariance.value_or(Eigen::MatrixXd::Zero(d, d))};
    g.covariance.diagonal().array() += ridge;
    return g;
}

GapSummary tail_gap_summary(const FeatureDataset& train, std::span<const ClassStats> train_stats,
                            const HeadTailPartition& partition, std::span<const CalibratedDistribution> calibrations,
                            double ridge, const std::vector<Gaussian>& reference, std::string reference_name) {
    GapSummary out;
    out.reference = std::move(reference_name);
    double sum_cal = 0.0, sum_emp = 0.0;
    for (auto c : partition.tail) {
        if (c >= reference.size() || reference[c].mean.size() == 0) continue;
        const auto it = std::find_if(train_stats.begin(), train_stats.end(),
                                     [c](const ClassStats& s) { return s.class_id == c; });
        if (it == train_stats.end()) continue;
        if (std::none_of(calibrations.begin(), calibrations.end(),
                         [c](const CalibratedDistribution& d) { return d.source_class == c; })) {
            continue;
        }
        ClassGap gap;
        gap.class_id = c;
        gap.calibrated = distribution_gap(mixture_moments(calibrations, c), reference[c]);
        gap.empirical = distribution_gap(empirical_gaussian(*it, ridge), reference[c]);
        sum_cal += gap.calibrated;
        sum_emp += gap.empirical;
        out.per_class.push_back(gap);
    }
    (void)train;
    if (!out.per_class.empty()) {
        out.mean_calibrated = sum_cal / static_cast<double>(out.per_class.size());
        out.mean_empirical = sum_emp / static_cast<double>(out.per_class.size());
    }
    return out;
}

namespace {

ArmResult evaluate(const LinearClassifier& classifier, const FeatureDataset& test,
                   std::span<const std::size_t> train_counts, const GroupThresholds& groups) {
    const auto predictions = predict_all(classifier, test);
    return {grouped_accuracy(predictions, test.labels(), train_counts, groups),
            per_class_accuracy(predictions, test.labels(), test.num_classes())};
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

void write_scatter(const ExperimentConfig& config, const PipelineInputs& inputs,
                   std::span<const CalibratedDistribution> calibrations, ExperimentReport& report) {
    ProjectionFitOptions options;
    options.seed = mix_seed(config.seed, kProjectionStream);
    const auto projection = fit_projection(inputs.train, options);

    std::vector<Eigen::VectorXd> features;
    std::vector<std::uint32_t> labels;
    std::vector<PointOrigin> origins;
    for (std::size_t i = 0; i < inputs.train.size(); ++i) {
        features.push_back(inputs.train.row_vector(i));
        labels.push_back(inputs.train.label(i));
        origins.push_back(PointOrigin::real);
    }
    Rng rng(mix_seed(config.seed, kScatterStream));
    FactorCache cache;
    for (auto c : report.tail) {
        std::vector<const CalibratedDistribution*> pool;
        for (const auto& d : calibrations) {
            if (d.source_class == c) pool.push_back(&d);
        }
        if (pool.empty()) continue;
        for (std::size_t k = 0; k < kScatterSyntheticPerClass; ++k) {
            const auto& d = *pool[rng.uniform_index(pool.size())];
            features.push_back(draw_gaussian(d.posterior_mean, *cache.factor(d), rng));
            labels.push_back(c);
            origins.push_back(PointOrigin::synthetic);
        }
    }
    for (std::size_t i = 0; i < inputs.test.size(); ++i) {
        features.push_back(inputs.test.row_vector(i));
        labels.push_back(inputs.test.label(i));
        origins.push_back(PointOrigin::test);
    }
    const auto scatter = project_2d(features, labels, origins, projection);
    std::ostringstream csv, svg;
    write_scatter_csv(csv, scatter);
    write_scatter_svg(svg, scatter, "train (circle), synthetic (triangle), test (square)");
    write_file(config.output_dir / "scatter.csv", csv.str());
    write_file(config.output_dir / "scatter.svg", svg.str());
    report.artifacts["scatter_csv"] = "scatter.csv";
    report.artifacts["scatter_svg"] = "scatter.svg";
}

}  // namespace

ExperimentReport run_pipeline(const ExperimentConfig& config) {
    config.validate();
    std::map<std::string, double> timings;
    const auto inputs = in_phase("data", timings, [&] { return load_inputs(config); });
    auto report = run_pipeline(config, inputs);
    report.timings["data"] = timings["data"];
    return report;
}

ExperimentReport run_pipeline(const ExperimentConfig& config, const PipelineInputs& inputs) {
    config.validate();
    ExperimentReport report;
    report.config = config;
    auto& timings = report.timings;
    const auto& train = inputs.train;
    const auto& test = inputs.test;
    if (train.empty()) throw Error(ErrorKind::EmptyDataset, "data: training set is empty");
    if (test.dim() != train.dim()) throw Error(ErrorKind::DimensionMismatch, "data: train and test dimensions differ");
    report.train_counts = train.class_counts();
    report.train_size = train.size();
    report.test_size = test.size();

    // Stage 1: instance-balanced CE on the long-tailed features.
    auto stage1_cfg = config.stage1;
    stage1_cfg.mode = TrainMode::plain;
    stage1_cfg.seed = mix_seed(config.seed, kStage1Stream);
    auto stage1 = in_phase("stage1", timings, [&] {
        ShuffledBatchSource source(train, stage1_cfg.batch_size, stage1_cfg.seed);
        return ladc::train(LinearClassifier::zeros(train.num_classes(), train.dim()), source, stage1_cfg);
    });
    report.stage1_loss = stage1.epoch_loss;
    report.stage1_classifier = stage1.classifier;
    report.baseline = in_phase("evaluate", timings,
                               [&] { return evaluate(stage1.classifier, test, report.train_counts, config.groups); });

    const auto stats = in_phase("statistics", timings, [&] { return all_class_statistics(train, config.threads); });
    const auto partition =
        in_phase("partition", timings, [&] { return partition_head_tail(report.train_counts, config.mass_ratio); });
    report.head = partition.head;
    report.tail = partition.tail;

    const auto calibrations = in_phase("calibration", timings, [&] {
        return calibrate_tail(train, partition, stats, config.calibration, config.threads);
    });
    report.calibrated_distributions = calibrations.size();

    auto stage2_cfg = config.stage2;
    stage2_cfg.seed = mix_seed(config.seed, kStage2Stream);
    auto stage2 = in_phase("stage2", timings, [&] {
        auto plan = sampling_probabilities(report.train_counts, config.tau, config.reading);
        BatchSpec spec{stage2_cfg.batch_size, stage2_cfg.seed, config.epoch_length};
        CalibratedBatchSampler sampler(std::move(plan), partition, train, calibrations, spec);
        return ladc::train(prepare_stage2(stage1.classifier, stage2_cfg.mode), sampler, stage2_cfg);
    });
    report.stage2_loss = stage2.epoch_loss;
    report.stage2_classifier = stage2.classifier;
    report.ladc = in_phase("evaluate", timings,
                           [&] { return evaluate(stage2.classifier, test, report.train_counts, config.groups); });

    report.gap = in_phase("distribution_gap", timings, [&] {
        std::vector<Gaussian> reference;
        std::string name;
        if (inputs.truth) {
            reference = *inputs.truth;
            name = "ground_truth";
        } else {
            name = "test_statistics";
            reference.resize(test.num_classes());
            for (const auto& s : all_class_statistics(test, config.threads)) {
                if (s.has_covariance()) reference[s.class_id] = {s.mean, *s.covariance};
            }
        }
        return tail_gap_summary(train, stats, partition, calibrations, config.calibration.alpha, reference, name);
    });

    if (!config.output_dir.empty()) {
        in_phase("write", timings, [&] {
            std::error_code ec;
            std::filesystem::create_directories(config.output_dir, ec);
            if (ec) throw Error(ErrorKind::Io, "cannot create " + config.output_dir.string());
            save_checkpoint(stage1.classifier, config.output_dir / "stage1.ckpt");
            save_checkpoint(stage2.classifier, config.output_dir / "stage2.ckpt");
            report.artifacts["stage1_checkpoint"] = "stage1.ckpt";
            report.artifacts["stage2_checkpoint"] = "stage2.ckpt";
            std::ostringstream dump;
            write_calibration_dump(dump, calibrations);
            write_file(config.output_dir / "calibration.jsonl", dump.str());
            report.artifacts["calibration_dump"] = "calibration.jsonl";
            write_file(config.output_dir / "config.toml", config_to_text(config));
            report.artifacts["config"] = "config.toml";
            if (config.scatter) write_scatter(config, inputs, calibrations, report);
            report.artifacts["timings"] = "timings.json";
            report.artifacts["report"] = "report.json";
        });
        write_file(config.output_dir / "report.json", report_to_json(report));
        nlohmann::json t(report.timings);
        write_file(config.output_dir / "timings.json", t.dump(2) + "\n");
    }
    return report;
}

namespace {

nlohmann::json optional_number(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json arm_json(const ArmResult& arm) {
    nlohmann::json per_class = nlohmann::json::array();
    for (const auto& v : arm.per_class) per_class.push_back(optional_number(v));
    return {
        {"overall", arm.grouped.overall},
        {"many", optional_number(arm.grouped.many)},
        {"medium", optional_number(arm.grouped.medium)},
        {"few", optional_number(arm.grouped.few)},
        {"group_sizes", arm.grouped.group_sizes},
        {"per_class", per_class},
    };
}

nlohmann::json config_json(const ExperimentConfig& config) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& key : config_keys()) {
        if (key == "run.output_dir") continue;
        const auto dot = key.find('.');
        out[key.substr(0, dot)][key.substr(dot + 1)] = get_config_value(config, key);
    }
    return out;
}

}  // namespace

std::string report_to_json(const ExperimentReport& report) {
    nlohmann::json delta = nlohmann::json::object();
    delta["overall"] = report.ladc.grouped.overall - report.baseline.grouped.overall;
    for (auto g : {ShotGroup::many, ShotGroup::medium, ShotGroup::few}) {
        const auto a = report.baseline.grouped.group(g);
        const auto b = report.ladc.grouped.group(g);
        delta[std::string(to_string(g))] = (a && b) ? nlohmann::json(*b - *a) : nlohmann::json(nullptr);
    }
    nlohmann::json gaps = nlohmann::json::array();
    for (const auto& g : report.gap.per_class) {
        gaps.push_back({{"class", g.class_id}, {"calibrated", g.calibrated}, {"empirical", g.empirical}});
    }
    nlohmann::json doc = {
        {"config", config_json(report.config)},
        {"dataset",
         {{"train_size", report.train_size},
          {"test_size", report.test_size},
          {"train_counts", report.train_counts},
          {"head", report.head},
          {"tail", report.tail}}},
        {"baseline", arm_json(report.baseline)},
        {"ladc", arm_json(report.ladc)},
        {"delta", delta},
        {"stage1_loss", report.stage1_loss},
        {"stage2_loss", report.stage2_loss},
        {"calibrated_distributions", report.calibrated_distributions},
        {"distribution_gap",
         {{"reference", report.gap.reference},
          {"per_class", gaps},
          {"mean_calibrated", optional_number(report.gap.mean_calibrated)},
          {"mean_empirical", optional_number(report.gap.mean_empirical)}}},
        {"artifacts", report.artifacts},
    };
    return doc.dump(2) + "\n";
}

}  // namespace ladc
