// Error types shared across the library. Contract violations signal caller
// bugs (bad shapes, invalid arguments); the runtime_error family signals
// data- or state-dependent failures the caller may want to handle.
#pragma once

#include <stdexcept>
#include <string>

namespace openncd {

// Precondition/shape violations. These indicate a bug at the call site.
struct ContractViolation : std::invalid_argument {
    explicit ContractViolation(const std::string& what) : std::invalid_argument(what) {}
};

// A vector whose norm fell below the degeneracy floor; carries the row or
// prototype index when one applies (-1 otherwise).
struct DegenerateVectorError : std::runtime_error {
    int index;
    DegenerateVectorError(const std::string& what, int idx = -1)
        : std::runtime_error(what), index(idx) {}
};

// Non-finite value encountered during training; aborts the run.
struct TrainingAbortError : std::runtime_error {
    explicit TrainingAbortError(const std::string& what) : std::runtime_error(what) {}
};

// The finite-difference oracle hit a non-finite function evaluation.
struct OracleError : std::runtime_error {
    int coordinate;
    OracleError(const std::string& what, int coord) : std::runtime_error(what), coordinate(coord) {}
};

// Malformed input file; carries the 1-based line number where known.
struct ParseError : std::runtime_error {
    long line;
    ParseError(const std::string& what, long line_no = -1) : std::runtime_error(what), line(line_no) {}
};

// Synthetic data generation could not satisfy its separation constraint.
struct GenerationError : std::runtime_error {
    explicit GenerationError(const std::string& what) : std::runtime_error(what) {}
};

// Open-world split could not be realized (e.g. a known class with no labels).
struct SplitError : std::runtime_error {
    explicit SplitError(const std::string& what) : std::runtime_error(what) {}
};

// Fewer groups than known classes: no injective class-to-group map exists.
struct InfeasibleMatchingError : std::runtime_error {
    explicit InfeasibleMatchingError(const std::string& what) : std::runtime_error(what) {}
};

// Bad configuration file or override key/value.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace openncd
