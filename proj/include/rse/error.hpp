#pragma once

#include <stdexcept>
#include <string>

namespace rse {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid or unknown configuration value.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Grid geometry cannot represent the requested density.
class GeometryError : public Error {
public:
    using Error::Error;
};

/// Mass escaped the grid support during propagation.
class SupportOverflowError : public Error {
public:
    using Error::Error;
};

/// Conditioning on an event of (numerically) zero probability.
class DegenerateConditioningError : public Error {
public:
    using Error::Error;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Lookup outside the domain of a policy or chain.
class DomainError : public Error {
public:
    using Error::Error;
};

/// File could not be read or written.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace rse
