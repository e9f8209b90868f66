#pragma once

#include <stdexcept>
#include <string>

namespace vitfreeze {

// Shape mismatches, bad ranks, non-divisible pooling dims, etc.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration values (bad JSON, out-of-range hyperparameters,
// unknown keys, inconsistent preset overrides).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric failures detected at runtime (NaN/Inf in losses or gradients).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / serialization failures (unwritable out dir, bad checkpoint).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace vitfreeze
