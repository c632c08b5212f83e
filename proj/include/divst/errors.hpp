#pragma once

#include <stdexcept>
#include <string>

namespace divst {

// Common base so callers can catch every library error in one handler.
struct DivstError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape/dimension mismatches between matrices or between data and labels.
struct ShapeError : DivstError {
    using DivstError::DivstError;
};

// Numerical failures: singular systems, eigensolver non-convergence.
struct NumericError : DivstError {
    using DivstError::DivstError;
};

// Bad user-facing configuration (quotas, ranges, missing sweeps...).
struct ConfigError : DivstError {
    using DivstError::DivstError;
};

// Malformed input values (labels out of range, confidences outside [0,1],
// rows not on the simplex, empty batches).
struct InputError : DivstError {
    using DivstError::DivstError;
};

// File-format problems, reported with a line number where possible.
struct ParseError : DivstError {
    using DivstError::DivstError;
};

} // namespace divst
