#pragma once

#include <stdexcept>
#include <string>

namespace leocvae {

// User-facing configuration problems: bad flags, bad file contents,
// impossible parameter combinations. CLI maps these to exit code 1.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file (CSV cell that does not parse, missing column).
class ParseError : public ConfigError {
public:
    explicit ParseError(const std::string& msg) : ConfigError(msg) {}
};

// Shape contract violations between matrices. CLI maps to exit code 2.
class DimensionError : public std::runtime_error {
public:
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values, diverging optimization, undefined metrics.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Metric has no defined value on the given labels (e.g. AUC with one class).
class UndefinedMetricError : public NumericError {
public:
    explicit UndefinedMetricError(const std::string& msg) : NumericError(msg) {}
};

// API misuse (e.g. backward on an already consumed tape).
class UsageError : public std::logic_error {
public:
    explicit UsageError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace leocvae
