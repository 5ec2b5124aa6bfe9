#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace switchnet {

/// Invalid configuration or user input. The CLI maps this to exit code 1.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Array or layer shapes that do not line up.
class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Numerical failure (singular pivot, NaN loss, ...). The CLI maps this to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularPivotError : public NumericalError {
 public:
  explicit SingularPivotError(std::size_t pivot)
      : NumericalError("numerically singular pivot at index " + std::to_string(pivot)),
        pivot_(pivot) {}
  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

}  // namespace switchnet
