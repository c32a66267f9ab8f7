#pragma once

#include <stdexcept>
#include <string>

namespace coe {

// Base for all typed errors raised by the library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape disagreement between operands (matmul, optimizer slots, ...).
struct DimensionError : Error {
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf where a finite value is required: diverged training state,
// non-finite gradient, non-finite loss at a finite-difference probe point.
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Bad on-disk data: missing files, schema violations, checkpoint mismatch.
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
};

// Inconsistent configuration (e.g. more evidence queries than frames).
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

}  // namespace coe
