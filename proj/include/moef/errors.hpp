#pragma once

#include <stdexcept>
#include <string>

namespace moef {

// Error taxonomy used across the engine. The CLI maps these to exit codes:
// ConfigError -> 2, DataError -> 3, NumericError -> 4.

// Invalid configuration value, unknown config key, inconsistent hyperparameters.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable/malformed input files, schema mismatches, missing snapshots.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape disagreement. Message names both offending shapes.
class DimensionError : public std::runtime_error {
public:
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// API contract violation (non-scalar loss, double backward, empty batch).
class ContractError : public std::runtime_error {
public:
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf detected in a forward pass or metric.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace moef
