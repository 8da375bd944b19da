#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sparsebif/errors.hpp"

namespace sparsebif {

/// Plain-text run configuration.
///
/// Grammar, one entry per line:
///   section.key = value        # trailing comments allowed
/// Values are numbers (1.5, 1e-6), strings ("quoted" or bare identifiers),
/// or arrays of numbers ([8, 4]). Sections are fixed (system, grid, pod, ae,
/// sindy, analysis, io) and unknown keys are rejected.
class RunConfig {
public:
    struct Value {
        enum class Kind { number, string, array };
        Kind kind = Kind::number;
        double number = 0.0;
        std::string text;
        std::vector<double> array;
        int line = 0;
    };

    static RunConfig parse_file(const std::filesystem::path& path);
    static RunConfig parse_string(const std::string& text);

    bool has(const std::string& key) const;

    double get_number(const std::string& key) const;
    double get_number(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::vector<double> get_array(const std::string& key) const;
    std::vector<double> get_array(const std::string& key,
                                  const std::vector<double>& fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    /// Throws ConfigError listing every missing key.
    void require(const std::vector<std::string>& keys) const;

    const std::map<std::string, Value>& entries() const { return values_; }

private:
    const Value& fetch(const std::string& key, Value::Kind kind) const;
    std::map<std::string, Value> values_;
};

}  // namespace sparsebif
