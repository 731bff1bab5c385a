#pragma once

#include <stdexcept>
#include <string>

namespace asam {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A row (hidden state) collapsed to (near) zero norm.
class DegenerateRowError : public Error {
 public:
  using Error::Error;
};

/// Iterative routine failed or produced non-finite values.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, int iterations = 0)
      : Error(what), iterations_(iterations) {}
  int iterations() const noexcept { return iterations_; }

 private:
  int iterations_;
};

/// A ForwardCache no longer matches the parameters of the model.
class CacheInvalidError : public Error {
 public:
  using Error::Error;
};

/// Objective function returned a non-finite value during a gradient check.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration, precondition, or usage.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input document.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input document that violates a data invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Edit request or edit sequence that cannot be applied.
class InvalidEditError : public Error {
 public:
  using Error::Error;
};

/// Singular values closer than the gap tolerance in strict backward mode.
class DegenerateSpectrumError : public Error {
 public:
  using Error::Error;
};

/// Discriminator produced NaN.
class DiscriminatorError : public Error {
 public:
  using Error::Error;
};

/// Base-model training diverged.
class TrainingFailure : public Error {
 public:
  using Error::Error;
};

/// Reading or writing a file failed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace asam
