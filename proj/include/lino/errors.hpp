#pragma once

#include <stdexcept>
#include <string>

namespace lino {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents disagree with what an operation or config expects.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameters, flags or config files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or insufficient input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced by a forward op, a gradient, or a diverging loss.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint header, version or checksum problems.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

}  // namespace lino
