#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nlt/synth.hpp"
#include "nlt/train.hpp"

namespace nlt {

/// Fully resolved run configuration. Every field has a default; the config
/// file overrides them section by section, and the echoed resolved file
/// reproduces the run bitwise.
struct RunConfig {
    DomainSpec source = default_source_spec();
    DomainSpec target = default_target_spec();
    SplitSizes source_sizes{240, 20, 40};
    SplitSizes target_sizes{80, 20, 40};
    std::string net_config = "desk_small";
    int input_channels = 1;
    TrainConfig train;
    std::uint32_t seed = 1;
    Regime regime = Regime::nlt;
    double fewshot_ratio = 0.1;
    bool scene_reg = true;
    std::string out_dir = "run";
    std::vector<Regime> regimes{Regime::no_adapt, Regime::finetune_all, Regime::nlt};
    std::vector<double> sweep_ratios{0.05, 0.1, 0.3, 0.5};
    std::vector<int> stats_layers{0};
    bool plots = false;

    void validate() const {
        source.validate();
        target.validate();
        if (source_sizes.train < 0 || source_sizes.val < 0 || source_sizes.test < 0 || target_sizes.train < 0 ||
            target_sizes.val < 0 || target_sizes.test < 0)
            throw std::invalid_argument("config: split sizes must be >= 0");
        if (net_config != "desk_small" && net_config != "paper_vgg16")
            throw std::invalid_argument("config: net must be desk_small or paper_vgg16, got '" + net_config + "'");
        if (input_channels != 1) throw std::invalid_argument("config: the synthetic pipeline is single-channel");
        train.validate();
        if (!(fewshot_ratio > 0.0) || fewshot_ratio > 1.0)
            throw std::invalid_argument("config: fewshot_ratio must lie in (0, 1]");
        for (double r : sweep_ratios)
            if (!(r > 0.0) || r > 1.0) throw std::invalid_argument("config: sweep ratios must lie in (0, 1]");
        if (out_dir.empty()) throw std::invalid_argument("config: out_dir must not be empty");
        for (std::size_t i = 0; i < regimes.size(); ++i)
            for (std::size_t j = i + 1; j < regimes.size(); ++j)
                if (regimes[i] == regimes[j])
                    throw std::invalid_argument("config: duplicate regime '" + std::string(regime_name(regimes[i])) +
                                                "' in comparison list");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config: key '" + key + "' expects true/false, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::istringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline void apply_domain_key(DomainSpec& d, const std::string& key, const std::string& v) {
    if (key == "name") d.name = v;
    else if (key == "count_min") d.count_min = std::stoi(v);
    else if (key == "count_max") d.count_max = std::stoi(v);
    else if (key == "blob_sigma") d.blob_sigma_px = std::stof(v);
    else if (key == "brightness") d.brightness = std::stof(v);
    else if (key == "noise_std") d.noise_std = std::stof(v);
    else if (key == "height") d.height = std::stoi(v);
    else if (key == "width") d.width = std::stoi(v);
    else if (key == "background") {
        if (v == "flat") d.background = DomainSpec::Background::flat;
        else if (v == "gradient") d.background = DomainSpec::Background::gradient;
        else throw std::invalid_argument("config: background must be flat or gradient, got '" + v + "'");
    } else {
        throw std::invalid_argument("config: unknown domain key '" + key + "'");
    }
}

inline bool apply_split_key(SplitSizes& s, const std::string& key, const std::string& v) {
    if (key == "train") s.train = std::stoi(v);
    else if (key == "val") s.val = std::stoi(v);
    else if (key == "test") s.test = std::stoi(v);
    else return false;
    return true;
}

inline std::string format_float(float v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

inline std::string format_double_cfg(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline RunConfig parse_run_config(std::istream& in, const std::string& origin = "<stream>") {
    RunConfig cfg;
    std::string section;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        auto fail = [&](const std::string& msg) {
            throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": " + msg);
        };
        if (t.front() == '[') {
            if (t.back() != ']') fail("malformed section header '" + t + "'");
            section = t.substr(1, t.size() - 2);
            if (section != "source" && section != "target" && section != "net" && section != "train" &&
                section != "run")
                fail("unknown section '" + section + "'");
            continue;
        }
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos) fail("expected key = value, got '" + t + "'");
        const std::string key = detail::trim(t.substr(0, eq));
        const std::string value = detail::trim(t.substr(eq + 1));
        if (section.empty()) fail("key '" + key + "' appears before any [section]");
        try {
            if (section == "source" || section == "target") {
                DomainSpec& d = section == "source" ? cfg.source : cfg.target;
                SplitSizes& s = section == "source" ? cfg.source_sizes : cfg.target_sizes;
                if (!detail::apply_split_key(s, key, value)) detail::apply_domain_key(d, key, value);
            } else if (section == "net") {
                if (key == "config") cfg.net_config = value;
                else if (key == "input_channels") cfg.input_channels = std::stoi(value);
                else fail("unknown [net] key '" + key + "'");
            } else if (section == "train") {
                if (key == "alpha") cfg.train.alpha = std::stof(value);
                else if (key == "beta") cfg.train.beta = std::stof(value);
                else if (key == "lambda") cfg.train.lambda = std::stof(value);
                else if (key == "source_batch") cfg.train.source_batch = std::stoi(value);
                else if (key == "target_batch") cfg.train.target_batch = std::stoi(value);
                else if (key == "iterations") cfg.train.iterations = std::stoi(value);
                else if (key == "val_interval") cfg.train.val_interval = std::stoi(value);
                else fail("unknown [train] key '" + key + "'");
            } else if (section == "run") {
                if (key == "seed") cfg.seed = static_cast<std::uint32_t>(std::stoul(value));
                else if (key == "regime") cfg.regime = regime_from_name(value);
                else if (key == "fewshot_ratio") cfg.fewshot_ratio = std::stod(value);
                else if (key == "scene_reg") cfg.scene_reg = detail::parse_bool(value, key);
                else if (key == "out_dir") cfg.out_dir = value;
                else if (key == "plots") cfg.plots = detail::parse_bool(value, key);
                else if (key == "regimes") {
                    cfg.regimes.clear();
                    for (const std::string& name : detail::split_list(value)) cfg.regimes.push_back(regime_from_name(name));
                } else if (key == "sweep_ratios") {
                    cfg.sweep_ratios.clear();
                    for (const std::string& item : detail::split_list(value)) cfg.sweep_ratios.push_back(std::stod(item));
                } else if (key == "stats_layers") {
                    cfg.stats_layers.clear();
                    for (const std::string& item : detail::split_list(value)) cfg.stats_layers.push_back(std::stoi(item));
                } else {
                    fail("unknown [run] key '" + key + "'");
                }
            }
        } catch (const std::invalid_argument&) {
            throw;
        } catch (const std::exception& e) {
            fail("cannot parse value '" + value + "' for key '" + key + "' (" + e.what() + ")");
        }
    }
    cfg.train.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path.string() + "'");
    return parse_run_config(in, path.string());
}

/// Serializes the fully resolved configuration; loading the result yields an
/// identical RunConfig.
inline std::string resolved_config_text(const RunConfig& cfg) {
    std::ostringstream os;
    auto domain = [&](const char* section, const DomainSpec& d, const SplitSizes& s) {
        os << "[" << section << "]\n";
        os << "name = " << d.name << "\n";
        os << "count_min = " << d.count_min << "\n";
        os << "count_max = " << d.count_max << "\n";
        os << "blob_sigma = " << detail::format_float(d.blob_sigma_px) << "\n";
        os << "background = " << (d.background == DomainSpec::Background::flat ? "flat" : "gradient") << "\n";
        os << "brightness = " << detail::format_float(d.brightness) << "\n";
        os << "noise_std = " << detail::format_float(d.noise_std) << "\n";
        os << "height = " << d.height << "\n";
        os << "width = " << d.width << "\n";
        os << "train = " << s.train << "\n";
        os << "val = " << s.val << "\n";
        os << "test = " << s.test << "\n\n";
    };
    domain("source", cfg.source, cfg.source_sizes);
    domain("target", cfg.target, cfg.target_sizes);
    os << "[net]\n";
    os << "config = " << cfg.net_config << "\n";
    os << "input_channels = " << cfg.input_channels << "\n\n";
    os << "[train]\n";
    os << "alpha = " << detail::format_float(cfg.train.alpha) << "\n";
    os << "beta = " << detail::format_float(cfg.train.beta) << "\n";
    os << "lambda = " << detail::format_float(cfg.train.lambda) << "\n";
    os << "source_batch = " << cfg.train.source_batch << "\n";
    os << "target_batch = " << cfg.train.target_batch << "\n";
    os << "iterations = " << cfg.train.iterations << "\n";
    os << "val_interval = " << cfg.train.val_interval << "\n\n";
    os << "[run]\n";
    os << "seed = " << cfg.seed << "\n";
    os << "regime = " << regime_name(cfg.regime) << "\n";
    os << "fewshot_ratio = " << detail::format_double_cfg(cfg.fewshot_ratio) << "\n";
    os << "scene_reg = " << (cfg.scene_reg ? "true" : "false") << "\n";
    os << "out_dir = " << cfg.out_dir << "\n";
    os << "plots = " << (cfg.plots ? "true" : "false") << "\n";
    os << "regimes = ";
    for (std::size_t i = 0; i < cfg.regimes.size(); ++i)
        os << (i ? "," : "") << regime_name(cfg.regimes[i]);
    os << "\n";
    os << "sweep_ratios = ";
    for (std::size_t i = 0; i < cfg.sweep_ratios.size(); ++i)
        os << (i ? "," : "") << detail::format_double_cfg(cfg.sweep_ratios[i]);
    os << "\n";
    os << "stats_layers = ";
    for (std::size_t i = 0; i < cfg.stats_layers.size(); ++i) os << (i ? "," : "") << cfg.stats_layers[i];
    os << "\n";
    return os.str();
}

}  // namespace nlt
