#pragma once

#include <stdexcept>
#include <string>

namespace tsd {

// Error taxonomy, mapped to CLI exit codes:
//   UsageError -> 1, ConfigError/DataError -> 2, NumericalError -> 3.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape/dimension mismatches raised by tensor ops.
struct ShapeError : ConfigError {
  using ConfigError::ConfigError;
};

// Zero-variance draw; recoverable, generators catch it and redraw.
struct DegenerateSignalError : DataError {
  using DataError::DataError;
};

}  // namespace tsd
