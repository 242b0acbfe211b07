#pragma once

#include <stdexcept>
#include <string>

namespace rhc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or out-of-contract arguments (dimension mismatch, NaN, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Not enough samples to estimate a quantity.
class InsufficientData : public Error {
 public:
  using Error::Error;
};

/// Factorization failure or non-finite intermediate values.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Configuration file or command-line problems.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace rhc
