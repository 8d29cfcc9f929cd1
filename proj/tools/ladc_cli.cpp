#include "ladc/calibration.hpp"
#include "ladc/classifier.hpp"
#include "ladc/config.hpp"
#include "ladc/dataset.hpp"
#include "ladc/error.hpp"
#include "ladc/eval.hpp"
#include "ladc/pipeline.hpp"
#include "ladc/sampler.hpp"
#include "ladc/stats.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace ladc;

namespace {

// --section.key overrides for every config key, applied after --config.
struct ConfigOptions {
    std::string file;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;

    void attach(CLI::App& app) {
        app.add_option("--config", file, "Sectioned key = value config file");
        for (const auto& key : config_keys()) {
            options[key] = app.add_option("--" + key, values[key], "Override " + key)->group("Config overrides");
        }
    }

    ExperimentConfig build() const {
        ExperimentConfig config;
        if (!file.empty()) apply_config_file(config, file);
        for (const auto& [key, option] : options) {
            if (option->count() > 0) set_config_value(config, key, values.at(key));
        }
        return config;
    }
};

fs::path default_output_dir(const std::string& flag, const char* fallback) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("LADC_OUTPUT_DIR"); env && *env) return env;
    return fallback;
}

FeatureDataset load(const std::string& path) { return load_dataset(path, format_from_path(path)); }

FileFormat parse_format(const std::string& text) {
    if (text == "binary") return FileFormat::binary;
    if (text == "csv") return FileFormat::csv;
    throw Error(ErrorKind::InvalidConfig, "unknown format '" + text + "'");
}

std::string join(const Eigen::VectorXd& v) {
    std::string out;
    char buf[32];
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s%.6g", i ? " " : "", v[i]);
        out += buf;
    }
    return out;
}

std::string percent(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * *v);
    return buf;
}

void print_grouped(const GroupedAccuracy& g) {
    std::printf("%-8s %10s %10s\n", "group", "instances", "accuracy");
    const char* names[] = {"many", "medium", "few"};
    for (int i = 0; i < 3; ++i) {
        std::printf("%-8s %10zu %10s\n", names[i], g.group_sizes[i], percent(g.group(static_cast<ShotGroup>(i))).c_str());
    }
    const std::size_t total = g.group_sizes[0] + g.group_sizes[1] + g.group_sizes[2];
    std::printf("%-8s %10zu %10s\n", "overall", total, percent(g.overall).c_str());
}

std::vector<std::size_t> parse_counts(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoul(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw Error(ErrorKind::InvalidConfig, "bad count '" + item + "'");
        }
    }
    return out;
}

std::vector<CalibratedDistribution> calibrate(const FeatureDataset& train, const ExperimentConfig& config,
                                              HeadTailPartition& partition) {
    config.calibration.validate();
    partition = partition_head_tail(train.class_counts(), config.mass_ratio);
    const auto stats = all_class_statistics(train, config.threads);
    return calibrate_tail(train, partition, stats, config.calibration, config.threads);
}

int cmd_synth(const ConfigOptions& opts, const std::string& out_flag, const std::string& format_text) {
    auto config = opts.build();
    config.data.train_path.clear();
    config.validate();
    const auto format = parse_format(format_text);
    const auto dir = default_output_dir(out_flag, ".");
    fs::create_directories(dir);
    const auto spec = synthetic_spec_for(config);
    const auto split = generate_synthetic(spec);
    const std::string ext = format == FileFormat::csv ? ".csv" : ".ladc";
    save_dataset(split.train, dir / ("train" + ext), format);
    save_dataset(split.test, dir / ("test" + ext), format);

    nlohmann::json truth;
    truth["seed"] = spec.seed;
    truth["train_counts"] = split.train.class_counts();
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        const auto& mu = spec.true_means[c];
        const auto& cov = spec.true_covariances[c];
        std::vector<std::vector<double>> rows(cov.rows(), std::vector<double>(cov.cols()));
        for (Eigen::Index i = 0; i < cov.rows(); ++i)
            for (Eigen::Index j = 0; j < cov.cols(); ++j) rows[i][j] = cov(i, j);
        truth["classes"].push_back({{"mean", std::vector<double>(mu.data(), mu.data() + mu.size())}, {"covariance", rows}});
    }
    std::ofstream(dir / "truth.json") << truth.dump(2) << '\n';
    std::printf("wrote %s, %s and truth.json to %s\n", ("train" + ext).c_str(), ("test" + ext).c_str(),
                dir.string().c_str());
    return 0;
}

int cmd_stats(const std::string& dataset_path, std::optional<std::uint32_t> class_id) {
    const auto ds = load(dataset_path);
    auto print = [](const ClassStats& s) {
        std::printf("class %u\n  n: %zu\n  mean: %s\n", s.class_id, s.count, join(s.mean).c_str());
        if (s.has_covariance()) {
            std::printf("  var: %s\n", join(s.covariance->diagonal()).c_str());
        } else {
            std::printf("  var: absent (n = 1)\n");
        }
    };
    if (class_id) {
        if (*class_id >= ds.num_classes()) throw Error(ErrorKind::DimensionMismatch, "class out of range");
        print(class_statistics(ds, *class_id));
    } else {
        for (const auto& s : all_class_statistics(ds)) print(s);
    }
    return 0;
}

int cmd_calibrate(const ConfigOptions& opts, const std::string& dataset_path, const std::string& out_path) {
    const auto config = opts.build();
    const auto train = load(dataset_path);
    HeadTailPartition partition;
    const auto calibrations = calibrate(train, config, partition);
    if (out_path.empty() || out_path == "-") {
        write_calibration_dump(std::cout, calibrations);
    } else {
        std::ofstream out(out_path);
        if (!out) throw Error(ErrorKind::Io, "cannot write " + out_path);
        write_calibration_dump(out, calibrations);
        std::fprintf(stderr, "%zu calibrated distributions for %zu tail classes\n", calibrations.size(),
                     partition.tail.size());
    }
    return 0;
}

int cmd_train(const ConfigOptions& opts, const std::string& dataset_path, const std::string& init_path,
              const std::string& out_path, const std::string& sampler) {
    const auto config = opts.build();
    config.validate();
    const auto train_set = load(dataset_path);
    const bool stage2 = !init_path.empty();
    auto train_cfg = stage2 ? config.stage2 : config.stage1;
    train_cfg.seed = mix_seed(config.seed, stage2 ? 2 : 1);

    LinearClassifier start = stage2 ? prepare_stage2(load_checkpoint(init_path), train_cfg.mode)
                                    : LinearClassifier::zeros(train_set.num_classes(), train_set.dim());
    std::unique_ptr<BatchSource> source;
    std::vector<CalibratedDistribution> calibrations;
    HeadTailPartition partition;
    if (sampler == "instance") {
        source = std::make_unique<ShuffledBatchSource>(train_set, train_cfg.batch_size, train_cfg.seed);
    } else if (sampler == "calibrated") {
        calibrations = calibrate(train_set, config, partition);
        auto plan = sampling_probabilities(train_set.class_counts(), config.tau, config.reading);
        source = std::make_unique<CalibratedBatchSampler>(std::move(plan), partition, train_set, calibrations,
                                                          BatchSpec{train_cfg.batch_size, train_cfg.seed, config.epoch_length});
    } else {
        throw Error(ErrorKind::InvalidConfig, "unknown sampler '" + sampler + "'");
    }
    const auto result = ladc::train(start, *source, train_cfg);
    save_checkpoint(result.classifier, out_path);
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) std::printf("epoch %zu loss %.6f\n", e, result.epoch_loss[e]);
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& test_path, const std::string& train_path,
             const std::string& counts_text) {
    const auto classifier = load_checkpoint(checkpoint);
    const auto test = load_dataset(test_path, format_from_path(test_path), classifier.dim(), classifier.num_classes());
    std::vector<std::size_t> counts;
    if (!train_path.empty()) {
        counts = load(train_path).class_counts();
    } else if (!counts_text.empty()) {
        counts = parse_counts(counts_text);
    } else {
        throw Error(ErrorKind::InvalidConfig, "eval needs --train or --counts to assign shot groups");
    }
    const auto predictions = predict_all(classifier, test);
    print_grouped(grouped_accuracy(predictions, test.labels(), counts));
    return 0;
}

int cmd_pipeline(const ConfigOptions& opts, const std::string& out_flag, std::optional<std::size_t> threads) {
    auto config = opts.build();
    if (!out_flag.empty() || config.output_dir.empty()) config.output_dir = default_output_dir(out_flag, "ladc_out");
    if (threads) config.threads = *threads;
    const auto report = run_pipeline(config);
    const auto& b = report.baseline.grouped;
    const auto& l = report.ladc.grouped;
    std::printf("%-10s %8s %8s %8s %8s\n", "arm", "many", "medium", "few", "overall");
    std::printf("%-10s %8s %8s %8s %8s\n", "baseline", percent(b.many).c_str(), percent(b.medium).c_str(),
                percent(b.few).c_str(), percent(b.overall).c_str());
    std::printf("%-10s %8s %8s %8s %8s\n", "ladc", percent(l.many).c_str(), percent(l.medium).c_str(),
                percent(l.few).c_str(), percent(l.overall).c_str());
    std::printf("report: %s\n", (config.output_dir / "report.json").string().c_str());
    return 0;
}

int cmd_scatter(const ConfigOptions& opts, const std::string& dataset_path, const std::string& test_path,
                const std::string& out_flag, std::size_t synthetic_per_class) {
    const auto config = opts.build();
    const auto train = load(dataset_path);
    const auto dir = default_output_dir(out_flag, ".");
    fs::create_directories(dir);

    std::vector<Eigen::VectorXd> features;
    std::vector<std::uint32_t> labels;
    std::vector<PointOrigin> origins;
    for (std::size_t i = 0; i < train.size(); ++i) {
        features.push_back(train.row_vector(i));
        labels.push_back(train.label(i));
        origins.push_back(PointOrigin::real);
    }
    if (synthetic_per_class > 0) {
        HeadTailPartition partition;
        const auto calibrations = calibrate(train, config, partition);
        Rng rng = Rng(config.seed).split(4);
        FactorCache cache;
        std::map<std::uint32_t, std::vector<const CalibratedDistribution*>> by_class;
        for (const auto& c : calibrations) by_class[c.source_class].push_back(&c);
        for (const auto& [cls, list] : by_class) {
            for (std::size_t k = 0; k < synthetic_per_class; ++k) {
                const auto& c = *list[rng.uniform_index(list.size())];
                features.push_back(draw_gaussian(c.posterior_mean, *cache.factor(c), rng));
                labels.push_back(cls);
                origins.push_back(PointOrigin::synthetic);
            }
        }
    }
    if (!test_path.empty()) {
        const auto test = load_dataset(test_path, format_from_path(test_path), train.dim(), train.num_classes());
        for (std::size_t i = 0; i < test.size(); ++i) {
            features.push_back(test.row_vector(i));
            labels.push_back(test.label(i));
            origins.push_back(PointOrigin::test);
        }
    }
    ProjectionFitOptions fit;
    fit.seed = mix_seed(config.seed, 3);
    const auto scatter = project_2d(features, labels, origins, fit_projection(train, fit));
    std::ofstream csv(dir / "scatter.csv"), svg(dir / "scatter.svg");
    if (!csv || !svg) throw Error(ErrorKind::Io, "cannot write scatter files in " + dir.string());
    write_scatter_csv(csv, scatter);
    write_scatter_svg(svg, scatter, "feature projection");
    std::printf("wrote %zu points to %s\n", scatter.points.size(), dir.string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Label-aware distribution calibration for long-tailed classification"};
    app.require_subcommand(1);

    ConfigOptions synth_opts, calib_opts, train_opts, pipe_opts, scatter_opts;
    std::string out_dir, format = "binary", dataset, test, checkpoint, init, out_file, train_path, counts;
    std::string sampler = "instance";
    std::optional<std::uint32_t> class_id;
    std::optional<std::size_t> threads;
    std::size_t synthetic_per_class = 100;

    auto* synth = app.add_subcommand("synth", "Write a synthetic long-tailed train/test pair and its ground truth");
    synth_opts.attach(*synth);
    synth->add_option("--out-dir", out_dir, "Output directory (default $LADC_OUTPUT_DIR or .)");
    synth->add_option("--format", format, "binary or csv")->check(CLI::IsMember({"binary", "csv"}));

    auto* stats = app.add_subcommand("stats", "Per-class n, mean and covariance diagonal");
    stats->add_option("--dataset", dataset, "Feature file (.csv or binary)")->required();
    stats->add_option("--class", class_id, "Only this class");

    auto* calib = app.add_subcommand("calibrate", "Calibrate tail classes and dump the distributions as JSON lines");
    calib_opts.attach(*calib);
    calib->add_option("--dataset", dataset, "Training feature file")->required();
    calib->add_option("--out", out_file, "Output file (default standard output)");

    auto* train = app.add_subcommand("train", "Train one stage and write a checkpoint");
    train_opts.attach(*train);
    train->add_option("--dataset", dataset, "Training feature file")->required();
    train->add_option("--init", init, "Stage-1 checkpoint; trains with the stage2.* settings when given");
    train->add_option("--out", out_file, "Checkpoint to write")->required();
    train->add_option("--sampler", sampler, "instance or calibrated")->check(CLI::IsMember({"instance", "calibrated"}));

    auto* eval = app.add_subcommand("eval", "Grouped accuracy of a checkpoint");
    eval->add_option("--checkpoint", checkpoint, "Classifier checkpoint")->required();
    eval->add_option("--test", test, "Test feature file")->required();
    eval->add_option("--train", train_path, "Training file whose class counts define the shot groups");
    eval->add_option("--counts", counts, "Comma-separated training class counts");

    auto* pipe = app.add_subcommand("pipeline", "Run both stages, evaluate, and write the report");
    pipe_opts.attach(*pipe);
    pipe->add_option("--output-dir", out_dir, "Output directory (default run.output_dir, $LADC_OUTPUT_DIR or ladc_out)");
    pipe->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

    auto* scatter = app.add_subcommand("scatter", "2-D projection of real, synthetic and test features");
    scatter_opts.attach(*scatter);
    scatter->add_option("--dataset", dataset, "Training feature file")->required();
    scatter->add_option("--test", test, "Test feature file to include");
    scatter->add_option("--synthetic", synthetic_per_class, "Calibrated samples per tail class");
    scatter->add_option("--out-dir", out_dir, "Output directory (default $LADC_OUTPUT_DIR or .)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_code_for(ErrorCategory::config);
    }

    try {
        if (*synth) return cmd_synth(synth_opts, out_dir, format);
        if (*stats) return cmd_stats(dataset, class_id);
        if (*calib) return cmd_calibrate(calib_opts, dataset, out_file);
        if (*train) return cmd_train(train_opts, dataset, init, out_file, sampler);
        if (*eval) return cmd_eval(checkpoint, test, train_path, counts);
        if (*pipe) return cmd_pipeline(pipe_opts, out_dir, threads);
        if (*scatter) return cmd_scatter(scatter_opts, dataset, test, out_dir, synthetic_per_class);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e.category());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
