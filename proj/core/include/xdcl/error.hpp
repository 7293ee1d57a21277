#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace xdcl {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shape / dimension disagreement.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value (bad hyperparameter, unknown key, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent input data (feature tables, head dumps, ...).
class DataError : public Error {
public:
    using Error::Error;
};

/// Numeric precondition violated at runtime (non-finite value, PSD
/// violation, out-of-range label, missing gradient).
class ValueError : public Error {
public:
    using Error::Error;
};

/// Renders a shape as "[2x3]" for error messages.
std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace xdcl
