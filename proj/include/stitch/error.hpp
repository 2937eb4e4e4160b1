#pragma once

#include <stdexcept>
#include <string>

namespace stitch {

/// Shape or dimension mismatch between arguments.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A documented precondition was violated by the caller.
struct PreconditionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Training divergence, non-finite samples, or similar numerical aborts.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed config, unknown keys, invalid values. Maps to CLI exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed or unreadable on-disk artifact.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace stitch
