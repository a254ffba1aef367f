#pragma once

#include <stdexcept>
#include <string>

namespace homtest {

// Error hierarchy; the CLI maps these onto distinct exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad user input: non-finite values, dimension mismatches, invalid
// configuration, unbound schema roles. Exit code 2.
struct ValidationError : Error {
    using Error::Error;
};

// Binomial response with a single class.
struct DegenerateResponseError : ValidationError {
    using ValidationError::ValidationError;
};

// A cross-fitting training cell (d, z, fold) is empty.
struct InsufficientCellError : ValidationError {
    using ValidationError::ValidationError;
};

// Sample became unusable at run time (all observations trimmed,
// zero score variance). Exit code 3.
struct DegenerateSampleError : Error {
    using Error::Error;
};

struct DegenerateVarianceError : DegenerateSampleError {
    using DegenerateSampleError::DegenerateSampleError;
};

// A propensity of zero survived trimming.
struct OverlapError : Error {
    using Error::Error;
};

// File system problems. Exit code 4.
struct IoError : Error {
    using Error::Error;
};

}  // namespace homtest
