#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace icl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A decomposition failed or produced non-finite output.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// An input lies outside the mathematical domain of an operation
/// (non-PSD covariance, dimension mismatch, invalid scalar knob).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be inverted is singular.
class SingularityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Evaluation requested at (or too close to) a pole of a closed-form
/// expression.
class PoleError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// An iteration left the representable range. `step()` is the index of the
/// first offending iterate.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : NumericalError(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Invalid training or experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace icl
