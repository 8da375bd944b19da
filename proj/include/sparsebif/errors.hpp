#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace sparsebif {

/// Precondition or shape violation on an operation's inputs.
class InvalidInput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numeric kernel failed (non-finite result, no convergence).
class NumericalFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Query outside the valid domain (e.g. spline evaluation past the knots).
class OutOfRange : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad or inconsistent run configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File-level I/O failure (missing path, write refusal).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed on-disk data; byte_offset points at the first bad byte when known.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& msg, std::size_t byte_offset = 0)
        : std::runtime_error(msg), byte_offset(byte_offset) {}
    std::size_t byte_offset;
};

/// File is well-formed but written by an incompatible version.
class VersionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Time integration produced a non-finite state. Rows [0, last_valid_index]
/// of `partial` hold the states computed before the blow-up.
class DivergedTrajectory : public std::runtime_error {
public:
    DivergedTrajectory(const std::string& msg, Eigen::Index last_valid_index,
                       Eigen::MatrixXd partial = {})
        : std::runtime_error(msg),
          last_valid_index(last_valid_index),
          partial(std::move(partial)) {}
    Eigen::Index last_valid_index;
    Eigen::MatrixXd partial;
};

}  // namespace sparsebif
