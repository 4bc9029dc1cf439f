// Plain-text key/value experiment configuration: data source, open-world
// split, encoder, and training hyperparameters. Unknown keys are rejected;
// the effective configuration echoes back in schema order so a run can be
// reproduced from its own summary.
#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "openncd/data.hpp"
#include "openncd/encoder.hpp"
#include "openncd/errors.hpp"
#include "openncd/trainer.hpp"

namespace openncd {

struct ExperimentConfig {
    // data source: synthetic blobs or a CSV file
    std::string data_source = "blobs";
    std::string csv_path;
    std::string mask_path;
    bool csv_has_header = false;
    int num_classes = 10;
    int per_class = 200;
    int dim = 16;
    double separation = 6.0;
    double spread = 1.0;
    uint64_t data_seed = 1;

    bool split_enabled = true;
    SplitConfig split;

    TrainConfig train;  // carries the encoder config
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

inline long long to_int(const std::string& key, const std::string& value) {
    long long out = 0;
    const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size())
        throw ConfigError("config: '" + key + "' expects an integer, got '" + value + "'");
    return out;
}

inline double to_real(const std::string& key, const std::string& value) {
    double out = 0.0;
    const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size())
        throw ConfigError("config: '" + key + "' expects a number, got '" + value + "'");
    return out;
}

inline bool to_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("config: '" + key + "' expects true or false, got '" + value + "'");
}

inline std::vector<int> to_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    if (detail::trim(value).empty()) return out;
    std::stringstream ss(value);
    std::string cell;
    while (std::getline(ss, cell, ','))
        out.push_back(static_cast<int>(to_int(key, detail::trim(cell))));
    return out;
}

inline std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(v[i]);
    }
    return s;
}

}  // namespace detail

inline void config_set(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    using namespace detail;
    if (key == "data.source") {
        if (value != "blobs" && value != "csv")
            throw ConfigError("config: data.source must be 'blobs' or 'csv'");
        cfg.data_source = value;
    } else if (key == "data.csv_path") {
        cfg.csv_path = value;
    } else if (key == "data.mask_path") {
        cfg.mask_path = value;
    } else if (key == "data.csv_has_header") {
        cfg.csv_has_header = to_bool(key, value);
    } else if (key == "data.num_classes") {
        cfg.num_classes = static_cast<int>(to_int(key, value));
    } else if (key == "data.per_class") {
        cfg.per_class = static_cast<int>(to_int(key, value));
    } else if (key == "data.dim") {
        cfg.dim = static_cast<int>(to_int(key, value));
    } else if (key == "data.separation") {
        cfg.separation = to_real(key, value);
    } else if (key == "data.spread") {
        cfg.spread = to_real(key, value);
    } else if (key == "data.seed") {
        cfg.data_seed = static_cast<uint64_t>(to_int(key, value));
    } else if (key == "split.enabled") {
        cfg.split_enabled = to_bool(key, value);
    } else if (key == "split.known_class_fraction") {
        cfg.split.known_class_fraction = to_real(key, value);
    } else if (key == "split.label_fraction") {
        cfg.split.label_fraction = to_real(key, value);
    } else if (key == "split.seed") {
        cfg.split.seed = static_cast<uint64_t>(to_int(key, value));
    } else if (key == "encoder.hidden_dims") {
        cfg.train.encoder.hidden_dims = to_int_list(key, value);
    } else if (key == "encoder.embed_dim") {
        cfg.train.encoder.embed_dim = static_cast<int>(to_int(key, value));
    } else if (key == "encoder.activation") {
        cfg.train.encoder.activation = activation_from_string(value);
    } else if (key == "encoder.init") {
        cfg.train.encoder.init = encoder_init_from_string(value);
    } else if (key == "encoder.seed") {
        cfg.train.encoder.seed = static_cast<uint64_t>(to_int(key, value));
    } else if (key == "train.epochs") {
        cfg.train.epochs = static_cast<int>(to_int(key, value));
    } else if (key == "train.batch_size") {
        cfg.train.batch_size = static_cast<int>(to_int(key, value));
    } else if (key == "train.learning_rate") {
        cfg.train.learning_rate = to_real(key, value);
    } else if (key == "train.temperature") {
        cfg.train.temperature = to_real(key, value);
    } else if (key == "train.reg_weight") {
        cfg.train.reg_weight = to_real(key, value);
    } else if (key == "train.ce_weight") {
        cfg.train.ce_weight = to_real(key, value);
    } else if (key == "train.top_k") {
        cfg.train.top_k = static_cast<int>(to_int(key, value));
    } else if (key == "train.num_prototypes") {
        cfg.train.num_prototypes = static_cast<int>(to_int(key, value));
    } else if (key == "train.warmup_epochs") {
        cfg.train.warmup_epochs = static_cast<int>(to_int(key, value));
    } else if (key == "train.noise_std") {
        cfg.train.noise_std = to_real(key, value);
    } else if (key == "train.threshold_grid") {
        cfg.train.threshold_grid = static_cast<int>(to_int(key, value));
    } else if (key == "train.seed") {
        cfg.train.seed = static_cast<uint64_t>(to_int(key, value));
    } else {
        throw ConfigError("config: unknown key '" + key + "'");
    }
}

// Effective configuration in schema order; parseable back via config_set.
inline std::vector<std::pair<std::string, std::string>> config_echo(const ExperimentConfig& cfg) {
    using namespace detail;
    std::vector<std::pair<std::string, std::string>> kv;
    kv.emplace_back("data.source", cfg.data_source);
    kv.emplace_back("data.csv_path", cfg.csv_path);
    kv.emplace_back("data.mask_path", cfg.mask_path);
    kv.emplace_back("data.csv_has_header", cfg.csv_has_header ? "true" : "false");
    kv.emplace_back("data.num_classes", std::to_string(cfg.num_classes));
    kv.emplace_back("data.per_class", std::to_string(cfg.per_class));
    kv.emplace_back("data.dim", std::to_string(cfg.dim));
    kv.emplace_back("data.separation", format_double(cfg.separation));
    kv.emplace_back("data.spread", format_double(cfg.spread));
    kv.emplace_back("data.seed", std::to_string(cfg.data_seed));
    kv.emplace_back("split.enabled", cfg.split_enabled ? "true" : "false");
    kv.emplace_back("split.known_class_fraction", format_double(cfg.split.known_class_fraction));
    kv.emplace_back("split.label_fraction", format_double(cfg.split.label_fraction));
    kv.emplace_back("split.seed", std::to_string(cfg.split.seed));
    kv.emplace_back("encoder.hidden_dims", join_ints(cfg.train.encoder.hidden_dims));
    kv.emplace_back("encoder.embed_dim", std::to_string(cfg.train.encoder.embed_dim));
    kv.emplace_back("encoder.activation", to_string(cfg.train.encoder.activation));
    kv.emplace_back("encoder.init", to_string(cfg.train.encoder.init));
    kv.emplace_back("encoder.seed", std::to_string(cfg.train.encoder.seed));
    kv.emplace_back("train.epochs", std::to_string(cfg.train.epochs));
    kv.emplace_back("train.batch_size", std::to_string(cfg.train.batch_size));
    kv.emplace_back("train.learning_rate", format_double(cfg.train.learning_rate));
    kv.emplace_back("train.temperature", format_double(cfg.train.temperature));
    kv.emplace_back("train.reg_weight", format_double(cfg.train.reg_weight));
    kv.emplace_back("train.ce_weight", format_double(cfg.train.ce_weight));
    kv.emplace_back("train.top_k", std::to_string(cfg.train.top_k));
    kv.emplace_back("train.num_prototypes", std::to_string(cfg.train.num_prototypes));
    kv.emplace_back("train.warmup_epochs", std::to_string(cfg.train.warmup_epochs));
    kv.emplace_back("train.noise_std", format_double(cfg.train.noise_std));
    kv.emplace_back("train.threshold_grid", std::to_string(cfg.train.threshold_grid));
    kv.emplace_back("train.seed", std::to_string(cfg.train.seed));
    return kv;
}

// `key = value` lines; '#' starts a comment; blank lines ignored.
inline ExperimentConfig parse_config_text(std::istream& in, const std::string& origin) {
    ExperimentConfig cfg;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        config_set(cfg, key, value);
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_config_text(in, path);
}

// `key=value` as given on the command line.
inline void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override '" + assignment + "' must look like key=value");
    config_set(cfg, detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

// One seed to vary a whole run: data draw, split, encoder init, training.
inline void set_master_seed(ExperimentConfig& cfg, uint64_t seed) {
    cfg.data_seed = seed;
    cfg.split.seed = seed;
    cfg.train.encoder.seed = seed;
    cfg.train.seed = seed;
}

inline bool is_sweepable(const std::string& key) {
    return key == "train.reg_weight" || key == "train.ce_weight" || key == "train.temperature" ||
           key == "train.top_k" || key == "train.num_prototypes" || key == "train.noise_std" ||
           key == "train.learning_rate";
}

}  // namespace openncd
