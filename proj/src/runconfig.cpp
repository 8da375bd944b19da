#include "sparsebif/runconfig.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace sparsebif {

namespace {

// Every key the tool understands; parsing rejects anything else so typos
// fail loudly instead of silently using a default.
const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "system.kind", "system.mu_star", "system.omega", "system.transverse_dims",
        "system.transverse_rate", "system.n_h", "system.lift_gain", "system.seed",
        "system.param_min", "system.param_max", "system.param_count", "system.params",
        "grid.t0", "grid.dt", "grid.count", "grid.stop_tol",
        "pod.local_delta", "pod.local_rank", "pod.global_delta", "pod.global_rank",
        "ae.encoder_hidden", "ae.decoder_hidden", "ae.latent_dim", "ae.epochs",
        "ae.learning_rate", "ae.batch_size", "ae.seed", "ae.shuffle",
        "ae.lambda1", "ae.lambda2", "ae.lambda3",
        "ae.window_t0", "ae.window_t1", "ae.resample_dt", "ae.train_fraction",
        "ae.finetune_epochs", "ae.finetune_lr",
        "sindy.state_degree", "sindy.param_degree", "sindy.include_bias",
        "sindy.threshold", "sindy.ridge", "sindy.max_iter",
        "sindy.ensemble_models", "sindy.sample_fraction", "sindy.library_drop",
        "sindy.aggregation", "sindy.seed",
        "analysis.qoi", "analysis.field", "analysis.index", "analysis.mode",
        "analysis.window_fraction", "analysis.weights",
        "io.threads",
    };
    return keys;
}

std::string trim(const std::string& s) {
    auto a = s.find_first_not_of(" \t\r");
    auto b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

bool parse_number(const std::string& text, double& out) {
    const char* begin = text.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    return end != begin && *end == '\0' && std::isfinite(out);
}

RunConfig::Value parse_value(const std::string& raw, int line) {
    RunConfig::Value v;
    v.line = line;
    if (raw.empty()) throw ConfigError("config line " + std::to_string(line) + ": empty value");
    if (raw.front() == '[') {
        if (raw.back() != ']')
            throw ConfigError("config line " + std::to_string(line) + ": unterminated array");
        v.kind = RunConfig::Value::Kind::array;
        std::stringstream ss(raw.substr(1, raw.size() - 2));
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            double num = 0.0;
            if (!parse_number(item, num))
                throw ConfigError("config line " + std::to_string(line) +
                                  ": array entries must be numbers");
            v.array.push_back(num);
        }
        return v;
    }
    if (raw.front() == '"') {
        if (raw.size() < 2 || raw.back() != '"')
            throw ConfigError("config line " + std::to_string(line) + ": unterminated string");
        v.kind = RunConfig::Value::Kind::string;
        v.text = raw.substr(1, raw.size() - 2);
        return v;
    }
    if (parse_number(raw, v.number)) {
        v.kind = RunConfig::Value::Kind::number;
        return v;
    }
    // Bare identifiers (true, pitchfork, median, ...) read as strings.
    v.kind = RunConfig::Value::Kind::string;
    v.text = raw;
    return v;
}

}  // namespace

RunConfig RunConfig::parse_string(const std::string& text) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        // Strip comments, respecting quoted strings.
        bool in_quote = false;
        std::string body;
        for (char c : line) {
            if (c == '"') in_quote = !in_quote;
            if (c == '#' && !in_quote) break;
            body.push_back(c);
        }
        body = trim(body);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(body.substr(0, eq));
        if (key.empty() || key.find('.') == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": keys have the form section.key");
        if (known_keys().count(key) == 0)
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" +
                              key + "'");
        if (cfg.values_.count(key))
            throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" +
                              key + "'");
        cfg.values_[key] = parse_value(trim(body.substr(eq + 1)), lineno);
    }
    return cfg;
}

RunConfig RunConfig::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) > 0; }

const RunConfig::Value& RunConfig::fetch(const std::string& key, Value::Kind kind) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: missing required key '" + key + "'");
    if (it->second.kind != kind)
        throw ConfigError("config line " + std::to_string(it->second.line) + ": key '" + key +
                          "' has the wrong type");
    return it->second;
}

double RunConfig::get_number(const std::string& key) const {
    return fetch(key, Value::Kind::number).number;
}

double RunConfig::get_number(const std::string& key, double fallback) const {
    return has(key) ? get_number(key) : fallback;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
    const double v = get_number(key);
    const auto i = static_cast<std::int64_t>(std::llround(v));
    if (static_cast<double>(i) != v)
        throw ConfigError("config: key '" + key + "' must be an integer");
    return i;
}

std::int64_t RunConfig::get_int(const std::string& key, std::int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
}

std::uint64_t RunConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const auto v = get_int(key);
    if (v < 0) throw ConfigError("config: key '" + key + "' must be nonnegative");
    return static_cast<std::uint64_t>(v);
}

std::string RunConfig::get_string(const std::string& key) const {
    return fetch(key, Value::Kind::string).text;
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? get_string(key) : fallback;
}

std::vector<double> RunConfig::get_array(const std::string& key) const {
    return fetch(key, Value::Kind::array).array;
}

std::vector<double> RunConfig::get_array(const std::string& key,
                                         const std::vector<double>& fallback) const {
    return has(key) ? get_array(key) : fallback;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = values_.at(key);
    if (v.kind == Value::Kind::number) return v.number != 0.0;
    if (v.kind == Value::Kind::string) {
        if (v.text == "true") return true;
        if (v.text == "false") return false;
    }
    throw ConfigError("config: key '" + key + "' must be true/false or 0/1");
}

void RunConfig::require(const std::vector<std::string>& keys) const {
    std::string missing;
    for (const auto& k : keys) {
        if (!has(k)) {
            if (!missing.empty()) missing += ", ";
            missing += k;
        }
    }
    if (!missing.empty()) throw ConfigError("config: missing required keys: " + missing);
}

}  // namespace sparsebif
