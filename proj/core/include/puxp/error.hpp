#pragma once

#include <stdexcept>
#include <string>

namespace puxp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape or width disagreement between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Index outside the addressed range.
class IndexError : public Error {
public:
    using Error::Error;
};

/// Invalid user configuration (ratio, unit kind, flags, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite values or divergence during computation.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Malformed file content or failed IO.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace puxp
