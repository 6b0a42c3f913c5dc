#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ridgeless {

// Base class for everything thrown by this library.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad user input: malformed specs, out-of-range parameters, shape mismatches.
struct invalid_spec : error {
    using error::error;
};

// Gram matrix numerically singular at lambda = 0.
struct singular_gram_error : error {
    singular_gram_error(const std::string& msg, double cond)
        : error(msg), condition_estimate(cond) {}
    double condition_estimate;
};

// Non-finite values produced during a numeric computation.
struct numeric_error : error {
    numeric_error(const std::string& msg, std::int64_t row = -1, std::int64_t col = -1)
        : error(msg), row(row), col(col) {}
    std::int64_t row;
    std::int64_t col;
};

// Malformed IDX payload; offset points at the violating byte.
struct idx_format_error : error {
    idx_format_error(const std::string& msg, std::uint64_t offset)
        : error(msg), offset(offset) {}
    std::uint64_t offset;
};

}  // namespace ridgeless
