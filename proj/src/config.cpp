// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0

#include "cmt/config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace cmt::pipe {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: bad numeric value for '" + key + "': " + v);
    }
}

long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long d = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer value for '" + key + "': " + v);
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long d = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: bad unsigned value for '" + key + "': " + v);
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError("config: bad boolean for '" + key + "' (want true/false): " + v);
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& key, const std::string& v, F elem) {
    std::vector<T> out;
    for (const std::string& item : split_commas(v)) {
        if (item.empty()) throw ConfigError("config: empty list element in '" + key + "'");
        out.push_back(elem(key, item));
    }
    if (out.empty()) throw ConfigError("config: empty list for '" + key + "'");
    return out;
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ",";
        out += items[i];
    }
    return out;
}

}  // namespace

nets::NetworkConfig RunConfig::network_config(std::size_t num_classes) const {
    nets::NetworkConfig net;
    net.feature_dim = feature_dim;
    net.num_classes = num_classes;
    net.n_gen = n_gen;
    net.point_mlp_widths = point_mlp_widths;
    net.grouped_stage = grouped_stage;
    net.cnn_channels = cnn_channels;
    net.classifier_widths = {feature_dim, classifier_hidden, num_classes};
    net.cmpg_widths = {feature_dim};
    for (std::size_t wdt : cmpg_hidden) net.cmpg_widths.push_back(wdt);
    net.cmpg_widths.push_back(3 * n_gen);
    net.image_h = image_size;
    net.image_w = image_size;
    net.validate();
    return net;
}

void RunConfig::validate() const {
    auto positive = [](long long v, const char* name) {
        if (v <= 0) throw ConfigError(std::string("config: ") + name + " must be positive");
    };
    if (stage1_epochs < 0 || stage2_epochs < 0 || stage3_epochs < 0)
        throw ConfigError("config: epoch counts must be non-negative");
    positive(batch_size, "batch_size");
    positive(static_cast<long long>(feature_dim), "feature_dim");
    positive(static_cast<long long>(n_gen), "n_gen");
    positive(static_cast<long long>(classifier_hidden), "classifier_hidden");
    positive(synth_train_per_class, "synth_train_per_class");
    positive(synth_test_per_class, "synth_test_per_class");
    if (synth_points < 64) throw ConfigError("config: synth_points must be at least 64");
    if (alpha < 0.0 || beta < 0.0) throw ConfigError("config: alpha/beta must be non-negative");
    if (kl_temperature <= 0.0) throw ConfigError("config: kl_temperature must be positive");
    if (views != 6 && views != 20) throw ConfigError("config: views must be 6 or 20");
    if (!(cam_distance > 1.0)) throw ConfigError("config: cam_distance must exceed 1");
    if (image_size < 8) throw ConfigError("config: image_size must be at least 8");
    if (point_mlp_widths.empty() || point_mlp_widths.back() != feature_dim)
        throw ConfigError("config: point_mlp_widths must end at feature_dim");
    if (cmpg_hidden.size() != 2)
        throw ConfigError("config: cmpg_hidden must list exactly two widths (three-layer generator)");
    if (harness_seeds.empty()) throw ConfigError("config: harness_seeds must not be empty");
    for (double f : fractions)
        if (!(f > 0.0 && f <= 1.0)) throw ConfigError("config: fractions must lie in (0, 1]");
    for (const std::string& m : kd_methods)
        if (m != "baseline" && m != "hinton" && m != "normalize1_mse" && m != "normalize2_mse" &&
            m != "pointcmt")
            throw ConfigError("config: unknown kd method '" + m + "'");
    for (const std::string& dir : {train_dir, test_dir})
        if (!dir.empty() && !std::filesystem::exists(dir))
            throw ConfigError("config: dataset path does not exist: " + dir);
    if (train_dir.empty() != test_dir.empty())
        throw ConfigError("config: train_dir and test_dir must be set together");
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: " + origin + ":" + std::to_string(line_no) +
                              ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));

        auto size_list = [](const std::string& k, const std::string& v) {
            const long long x = parse_int(k, v);
            if (x <= 0) throw ConfigError("config: list element must be positive in '" + k + "'");
            return static_cast<std::size_t>(x);
        };

        if (key == "seed") cfg.seed = parse_u64(key, val);
        else if (key == "stage1_epochs") cfg.stage1_epochs = static_cast<int>(parse_int(key, val));
        else if (key == "stage2_epochs") cfg.stage2_epochs = static_cast<int>(parse_int(key, val));
        else if (key == "stage3_epochs") cfg.stage3_epochs = static_cast<int>(parse_int(key, val));
        else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_int(key, val));
        else if (key == "sgd_lr") cfg.sgd_lr = parse_double(key, val);
        else if (key == "sgd_momentum") cfg.sgd_momentum = parse_double(key, val);
        else if (key == "adam_lr") cfg.adam_lr = parse_double(key, val);
        else if (key == "alpha") cfg.alpha = parse_double(key, val);
        else if (key == "beta") cfg.beta = parse_double(key, val);
        else if (key == "kl_temperature") cfg.kl_temperature = parse_double(key, val);
        else if (key == "feature_dim") cfg.feature_dim = size_list(key, val);
        else if (key == "n_gen") cfg.n_gen = size_list(key, val);
        else if (key == "point_mlp_widths")
            cfg.point_mlp_widths = parse_list<std::size_t>(key, val, size_list);
        else if (key == "cnn_channels")
            cfg.cnn_channels = parse_list<std::size_t>(key, val, size_list);
        else if (key == "classifier_hidden") cfg.classifier_hidden = size_list(key, val);
        else if (key == "cmpg_hidden") cfg.cmpg_hidden = parse_list<std::size_t>(key, val, size_list);
        else if (key == "grouped_stage") cfg.grouped_stage = parse_bool(key, val);
        else if (key == "views") cfg.views = static_cast<int>(parse_int(key, val));
        else if (key == "cam_distance") cfg.cam_distance = parse_double(key, val);
        else if (key == "image_size") cfg.image_size = size_list(key, val);
        else if (key == "emd_reduction") {
            if (val == "sum") cfg.emd_reduction = emd::Reduction::Sum;
            else if (val == "mean") cfg.emd_reduction = emd::Reduction::Mean;
            else throw ConfigError("config: emd_reduction must be sum or mean");
        } else if (key == "emd_solver") {
            if (val == "exact") cfg.emd_solver = emd::Solver::Exact;
            else if (val == "auction") cfg.emd_solver = emd::Solver::Auction;
            else if (val == "auto") cfg.emd_solver = emd::Solver::Auto;
            else throw ConfigError("config: emd_solver must be exact, auction or auto");
        } else if (key == "train_dir") cfg.train_dir = val;
        else if (key == "test_dir") cfg.test_dir = val;
        else if (key == "out_dir") cfg.out_dir = val;
        else if (key == "synth_train_per_class")
            cfg.synth_train_per_class = static_cast<int>(parse_int(key, val));
        else if (key == "synth_test_per_class")
            cfg.synth_test_per_class = static_cast<int>(parse_int(key, val));
        else if (key == "synth_points") cfg.synth_points = static_cast<int>(parse_int(key, val));
        else if (key == "harness_seeds")
            cfg.harness_seeds = parse_list<std::uint64_t>(key, val, parse_u64);
        else if (key == "fractions")
            cfg.fractions = parse_list<double>(key, val, parse_double);
        else if (key == "kd_methods")
            cfg.kd_methods = parse_list<std::string>(
                key, val, [](const std::string&, const std::string& v) { return v; });
        else
            throw ConfigError("config: " + origin + ":" + std::to_string(line_no) +
                              ": unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

std::string serialize_config(const RunConfig& cfg) {
    std::ostringstream out;
    auto kv = [&](const char* k, const std::string& v) { out << k << " = " << v << "\n"; };
    kv("seed", std::to_string(cfg.seed));
    kv("stage1_epochs", std::to_string(cfg.stage1_epochs));
    kv("stage2_epochs", std::to_string(cfg.stage2_epochs));
    kv("stage3_epochs", std::to_string(cfg.stage3_epochs));
    kv("batch_size", std::to_string(cfg.batch_size));
    kv("sgd_lr", fmt_double(cfg.sgd_lr));
    kv("sgd_momentum", fmt_double(cfg.sgd_momentum));
    kv("adam_lr", fmt_double(cfg.adam_lr));
    kv("alpha", fmt_double(cfg.alpha));
    kv("beta", fmt_double(cfg.beta));
    kv("kl_temperature", fmt_double(cfg.kl_temperature));
    kv("feature_dim", std::to_string(cfg.feature_dim));
    kv("n_gen", std::to_string(cfg.n_gen));
    {
        std::vector<std::string> w;
        for (auto x : cfg.point_mlp_widths) w.push_back(std::to_string(x));
        kv("point_mlp_widths", join(w));
    }
    {
        std::vector<std::string> w;
        for (auto x : cfg.cnn_channels) w.push_back(std::to_string(x));
        kv("cnn_channels", join(w));
    }
    kv("classifier_hidden", std::to_string(cfg.classifier_hidden));
    {
        std::vector<std::string> w;
        for (auto x : cfg.cmpg_hidden) w.push_back(std::to_string(x));
        kv("cmpg_hidden", join(w));
    }
    kv("grouped_stage", cfg.grouped_stage ? "true" : "false");
    kv("views", std::to_string(cfg.views));
    kv("cam_distance", fmt_double(cfg.cam_distance));
    kv("image_size", std::to_string(cfg.image_size));
    kv("emd_reduction", cfg.emd_reduction == emd::Reduction::Sum ? "sum" : "mean");
    kv("emd_solver", cfg.emd_solver == emd::Solver::Exact
                         ? "exact"
                         : (cfg.emd_solver == emd::Solver::Auction ? "auction" : "auto"));
    kv("train_dir", cfg.train_dir);
    kv("test_dir", cfg.test_dir);
    kv("out_dir", cfg.out_dir);
    kv("synth_train_per_class", std::to_string(cfg.synth_train_per_class));
    kv("synth_test_per_class", std::to_string(cfg.synth_test_per_class));
    kv("synth_points", std::to_string(cfg.synth_points));
    {
        std::vector<std::string> w;
        for (auto x : cfg.harness_seeds) w.push_back(std::to_string(x));
        kv("harness_seeds", join(w));
    }
    {
        std::vector<std::string> w;
        for (auto x : cfg.fractions) w.push_back(fmt_double(x));
        kv("fractions", join(w));
    }
    kv("kd_methods", join(cfg.kd_methods));
    return out.str();
}

std::string config_hash(const RunConfig& cfg) {
    const std::string s = serialize_config(cfg);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace cmt::pipe
