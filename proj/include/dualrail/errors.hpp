#pragma once

#include <stdexcept>

namespace dualrail {

// Bad user-supplied parameters or malformed input files.
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Numerical failure detected at runtime (broken consistency check,
// degenerate data, non-convergence treated as fatal by the caller).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A lossless operation would move probability across the Fock cutoff.
struct TruncationError : NumericError {
    using NumericError::NumericError;
};

// Data assigns counts to an outcome the model gives non-positive probability.
struct DegenerateSupportError : NumericError {
    using NumericError::NumericError;
};

}  // namespace dualrail
