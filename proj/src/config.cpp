#include "ladc/config.hpp"

#include "ladc/error.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace ladc {

TrainConfig ExperimentConfig::default_stage1() {
    TrainConfig c;
    c.epochs = 30;
    c.base_lr = 0.1;
    c.lr_drops = {{20, 0.1}};
    c.mode = TrainMode::plain;
    return c;
}

TrainConfig ExperimentConfig::default_stage2() {
    TrainConfig c;
    c.epochs = 30;
    c.base_lr = 0.1;
    c.lr_drops = {{10, 0.1}, {20, 0.1}};
    c.mode = TrainMode::lws_plus;
    return c;
}

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidConfig, msg); };
    if (data.synthetic()) {
        if (data.classes == 0 || data.dim == 0 || data.max_count == 0) fail("synthetic classes, dim and max_count must be positive");
        if (!(data.imbalance >= 1.0)) fail("imbalance factor must be >= 1");
        if (!(data.geometry.noise_scale > 0.0) || !(data.geometry.anisotropy >= 1.0) ||
            !(data.geometry.tail_offset >= 0.0) || !(data.geometry.head_separation >= 0.0)) {
            fail("synthetic geometry out of range");
        }
    } else if (data.test_path.empty()) {
        fail("data.test is required when data.train is set");
    }
    if (!(mass_ratio > 0.0 && mass_ratio <= 1.0)) fail("mass_ratio must lie in (0, 1]");
    calibration.validate();
    if (!(tau >= 0.0) || !std::isfinite(tau)) fail("tau must be >= 0");
    if (stage1.mode != TrainMode::plain) fail("stage1 mode must be plain");
    stage1.validate();
    stage2.validate();
    if (groups.few_below > groups.many_above + 1) fail("eval.few_below must not exceed eval.many_above + 1");
    if (threads == 0) fail("threads must be >= 1");
}

namespace {

std::string_view unquote(std::string_view v) {
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
    return v;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
    throw Error(ErrorKind::InvalidConfig, "invalid value '" + std::string(value) + "' for " + std::string(key));
}

double to_double(std::string_view key, std::string_view v) {
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) bad_value(key, v);
    return out;
}

template <typename Int>
Int to_int(std::string_view key, std::string_view v) {
    Int out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v);
    return out;
}

bool to_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    bad_value(key, v);
}

std::string fmt(double v) {
    std::array<char, 32> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

struct Field {
    std::function<void(ExperimentConfig&, std::string_view key, std::string_view)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

template <typename Member>
Field number(Member member) {
    using T = std::remove_cvref_t<decltype(std::invoke(member, std::declval<ExperimentConfig&>()))>;
    return {[member](ExperimentConfig& c, std::string_view key, std::string_view v) {
                if constexpr (std::is_floating_point_v<T>) {
                    std::invoke(member, c) = to_double(key, v);
                } else {
                    std::invoke(member, c) = to_int<T>(key, v);
                }
            },
            [member](const ExperimentConfig& c) {
                const auto value = std::invoke(member, const_cast<ExperimentConfig&>(c));
                if constexpr (std::is_floating_point_v<T>) {
                    return fmt(value);
                } else {
                    return std::to_string(value);
                }
            }};
}

// Lambdas are plain accessors; keeps the table below compact.
#define LADC_REF(expr) [](ExperimentConfig& c) -> auto& { return expr; }

const std::vector<std::pair<std::string, Field>>& field_table() {
    static const std::vector<std::pair<std::string, Field>> table = [] {
        std::vector<std::pair<std::string, Field>> t;
        t.emplace_back("data.train", Field{[](ExperimentConfig& c, std::string_view, std::string_view v) { c.data.train_path = std::string(v); },
                                           [](const ExperimentConfig& c) { return c.data.train_path.string(); }});
        t.emplace_back("data.test", Field{[](ExperimentConfig& c, std::string_view, std::string_view v) { c.data.test_path = std::string(v); },
                                          [](const ExperimentConfig& c) { return c.data.test_path.string(); }});
        t.emplace_back("data.classes", number(LADC_REF(c.data.classes)));
        t.emplace_back("data.dim", number(LADC_REF(c.data.dim)));
        t.emplace_back("data.imbalance", number(LADC_REF(c.data.imbalance)));
        t.emplace_back("data.max_count", number(LADC_REF(c.data.max_count)));
        t.emplace_back("data.test_per_class", number(LADC_REF(c.data.test_per_class)));
        t.emplace_back("data.head_separation", number(LADC_REF(c.data.geometry.head_separation)));
        t.emplace_back("data.tail_offset", number(LADC_REF(c.data.geometry.tail_offset)));
        t.emplace_back("data.noise_scale", number(LADC_REF(c.data.geometry.noise_scale)));
        t.emplace_back("data.anisotropy", number(LADC_REF(c.data.geometry.anisotropy)));
        t.emplace_back("partition.mass_ratio", number(LADC_REF(c.mass_ratio)));
        t.emplace_back("calibration.m", number(LADC_REF(c.calibration.m)));
        t.emplace_back("calibration.alpha", number(LADC_REF(c.calibration.alpha)));
        t.emplace_back("calibration.beta", number(LADC_REF(c.calibration.beta)));
        t.emplace_back("calibration.n_s", number(LADC_REF(c.calibration.n_s)));
        t.emplace_back("calibration.mode",
                       Field{[](ExperimentConfig& c, std::string_view, std::string_view v) { c.calibration.mode = parse_calibration_mode(v); },
                             [](const ExperimentConfig& c) { return std::string(to_string(c.calibration.mode)); }});
        t.emplace_back("calibration.weighting",
                       Field{[](ExperimentConfig& c, std::string_view, std::string_view v) { c.calibration.weighting = parse_weighting(v); },
                             [](const ExperimentConfig& c) { return std::string(to_string(c.calibration.weighting)); }});
        t.emplace_back("sampler.tau", number(LADC_REF(c.tau)));
        t.emplace_back("sampler.reading",
                       Field{[](ExperimentConfig& c, std::string_view, std::string_view v) { c.reading = parse_plan_reading(v); },
                             [](const ExperimentConfig& c) { return std::string(to_string(c.reading)); }});
        t.emplace_back("sampler.epoch_length", number(LADC_REF(c.epoch_length)));
        for (const char* stage : {"stage1", "stage2"}) {
            const std::string s = stage;
            auto pick = [s](ExperimentConfig& c) -> TrainConfig& { return s == "stage1" ? c.stage1 : c.stage2; };
            auto cpick = [s](const ExperimentConfig& c) -> const TrainConfig& { return s == "stage1" ? c.stage1 : c.stage2; };
            if (s == "stage2") {
                t.emplace_back(s + ".mode", Field{[pick](ExperimentConfig& c, std::string_view, std::string_view v) { pick(c).mode = parse_train_mode(v); },
                                                  [cpick](const ExperimentConfig& c) { return std::string(to_string(cpick(c).mode)); }});
            }
            t.emplace_back(s + ".epochs", Field{[pick](ExperimentConfig& c, std::string_view k, std::string_view v) { pick(c).epochs = to_int<std::size_t>(k, v); },
                                                [cpick](const ExperimentConfig& c) { return std::to_string(cpick(c).epochs); }});
            t.emplace_back(s + ".lr", Field{[pick](ExperimentConfig& c, std::string_view k, std::string_view v) { pick(c).base_lr = to_double(k, v); },
                                            [cpick](const ExperimentConfig& c) { return fmt(cpick(c).base_lr); }});
            t.emplace_back(s + ".lr_drops", Field{[pick](ExperimentConfig& c, std::string_view, std::string_view v) { pick(c).lr_drops = parse_lr_drops(v); },
                                                  [cpick](const ExperimentConfig& c) { return format_lr_drops(cpick(c).lr_drops); }});
            t.emplace_back(s + ".momentum", Field{[pick](ExperimentConfig& c, std::string_view k, std::string_view v) { pick(c).momentum = to_double(k, v); },
                                                  [cpick](const ExperimentConfig& c) { return fmt(cpick(c).momentum); }});
            t.emplace_back(s + ".weight_decay", Field{[pick](ExperimentConfig& c, std::string_view k, std::string_view v) { pick(c).weight_decay = to_double(k, v); },
                                                      [cpick](const ExperimentConfig& c) { return fmt(cpick(c).weight_decay); }});
            t.emplace_back(s + ".batch_size", Field{[pick](ExperimentConfig& c, std::string_view k, std::string_view v) { pick(c).batch_size = to_int<std::size_t>(k, v); },
                                                    [cpick](const ExperimentConfig& c) { return std::to_string(cpick(c).batch_size); }});
            t.emplace_back(s + ".decay_adjustments",
                           Field{[pick](ExperimentConfig& c, std::string_view k, std::string_view v) { pick(c).decay_adjustments = to_bool(k, v); },
                                 [cpick](const ExperimentConfig& c) { return std::string(cpick(c).decay_adjustments ? "true" : "false"); }});
        }
        t.emplace_back("eval.many_above", number(LADC_REF(c.groups.many_above)));
        t.emplace_back("eval.few_below", number(LADC_REF(c.groups.few_below)));
        t.emplace_back("eval.scatter", Field{[](ExperimentConfig& c, std::string_view k, std::string_view v) { c.scatter = to_bool(k, v); },
                                             [](const ExperimentConfig& c) { return std::string(c.scatter ? "true" : "false"); }});
        t.emplace_back("run.seed", number(LADC_REF(c.seed)));
        t.emplace_back("run.output_dir", Field{[](ExperimentConfig& c, std::string_view, std::string_view v) { c.output_dir = std::string(v); },
                                               [](const ExperimentConfig& c) { return c.output_dir.string(); }});
        return t;
    }();
    return table;
}

#undef LADC_REF

const Field& find_field(std::string_view key) {
    for (const auto& [name, field] : field_table()) {
        if (name == key) return field;
    }
    throw Error(ErrorKind::InvalidConfig, "unknown config key '" + std::string(key) + "'");
}

bool is_string_key(std::string_view key) {
    return key == "data.train" || key == "data.test" || key == "run.output_dir" || key == "calibration.mode" ||
           key == "calibration.weighting" || key == "stage2.mode" || key == "sampler.reading" || key.ends_with(".lr_drops");
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> out;
        for (const auto& [name, field] : field_table()) out.push_back(name);
        return out;
    }();
    return keys;
}

void set_config_value(ExperimentConfig& config, std::string_view key, std::string_view value) {
    find_field(key).set(config, key, unquote(value));
}

std::string get_config_value(const ExperimentConfig& config, std::string_view key) {
    return find_field(key).get(config);
}

std::vector<LrDrop> parse_lr_drops(std::string_view text) {
    std::vector<LrDrop> out;
    text = unquote(text);
    while (!text.empty()) {
        const auto comma = text.find(',');
        auto item = text.substr(0, comma);
        while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
        while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
        const auto colon = item.find(':');
        if (colon == std::string_view::npos) bad_value("lr_drops", item);
        out.push_back({to_int<std::size_t>("lr_drops", item.substr(0, colon)), to_double("lr_drops", item.substr(colon + 1))});
        if (comma == std::string_view::npos) break;
        text.remove_prefix(comma + 1);
    }
    return out;
}

std::string format_lr_drops(const std::vector<LrDrop>& drops) {
    std::string out;
    for (const auto& d : drops) {
        if (!out.empty()) out += ',';
        out += std::to_string(d.epoch) + ':' + fmt(d.factor);
    }
    return out;
}

void apply_config_text(ExperimentConfig& config, std::string_view text) {
    // Boost's INI reader only knows ';' comments, so '#' comments outside quotes are cut here.
    std::istringstream raw{std::string(text)};
    std::ostringstream cleaned;
    std::string line;
    while (std::getline(raw, line)) {
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line.erase(i);
                break;
            }
        }
        cleaned << line << '\n';
    }
    boost::property_tree::ptree tree;
    std::istringstream in(cleaned.str());
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw Error(ErrorKind::InvalidConfig, std::string("config parse error: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            throw Error(ErrorKind::InvalidConfig, "key '" + section + "' outside a section");
        }
        for (const auto& [key, value] : body) {
            set_config_value(config, section + "." + key, value.get_value<std::string>());
        }
    }
}

void apply_config_file(ExperimentConfig& config, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::InvalidConfig, "cannot open config file " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    apply_config_text(config, text.str());
}

std::string config_to_text(const ExperimentConfig& config) {
    std::ostringstream out;
    std::string current;
    for (const auto& [name, field] : field_table()) {
        const auto dot = name.find('.');
        const auto section = name.substr(0, dot);
        if (section != current) {
            out << (current.empty() ? "" : "\n") << '[' << section << "]\n";
            current = section;
        }
        const auto value = field.get(config);
        out << name.substr(dot + 1) << " = ";
        if (is_string_key(name)) {
            out << '"' << value << "\"\n";
        } else {
            out << value << '\n';
        }
    }
    return out.str();
}

}  // namespace ladc
