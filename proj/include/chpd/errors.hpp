#pragma once

#include <stdexcept>
#include <string>

namespace chpd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent configuration document. `path()` names the
/// offending location in the document, e.g. `devices.batteries[0].bus`.
class ConfigError : public Error {
public:
    ConfigError(std::string path, const std::string& message)
        : Error(path + ": " + message), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// The system cannot be compiled into a state-space model.
class StructuralError : public Error {
public:
    using Error::Error;
};

/// Fixed-point or iterative numerical procedure failed to converge.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// A constraint set became empty or an optimization problem has no solution.
class InfeasibleError : public Error {
public:
    using Error::Error;
};

}  // namespace chpd
