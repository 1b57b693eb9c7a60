#pragma once

#include <stdexcept>
#include <string>

namespace mrc {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad user input: node counts, parameter ranges, malformed config files.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Surface is not a valid star-shaped boundary (non-positive radius, bad preset).
class GeometryError : public Error {
public:
    using Error::Error;
};

/// Point or direction outside the domain where an evaluation is defined.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Gradient requested exactly on the polar axis, where the angular frame degenerates.
class PoleEvaluationError : public DomainError {
public:
    using DomainError::DomainError;
};

/// Inconsistent inputs handed to the least-squares assembly.
class AssemblyError : public Error {
public:
    using Error::Error;
};

/// Every singular value of the design matrix fell below the truncation threshold.
class DegenerateSystemError : public Error {
public:
    using Error::Error;
};

} // namespace mrc
