#pragma once

#include <stdexcept>
#include <string>

namespace cascade {

/// Malformed configuration text; message carries line number and key.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A spec invariant was violated; message names the invariant.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical failure inside a solver; message names regime and step.
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace cascade
