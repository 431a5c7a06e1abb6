#pragma once

#include <stdexcept>
#include <string>

namespace scorelab {

/// Invalid configuration or input (CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numeric failure: divergence, NaN, singular systems (CLI exit code 3).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularMatrixError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace scorelab
