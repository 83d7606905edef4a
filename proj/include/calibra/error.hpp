#pragma once

#include <stdexcept>
#include <string>

namespace calibra {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: malformed files, priors that do not sum to one, schemes that
/// fail validation, arguments outside an operation's domain.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A mathematical precondition does not hold (e.g. hazard rate where F(v) = 1).
class DomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Numerical machinery failed to produce a trustworthy answer.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class QuadratureError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class IterationLimitError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace calibra
