#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ssn {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument or configuration value was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A computation produced a non-finite value or a matrix lost definiteness.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Cholesky factorization failed or the matrix is too close to singular.
class NotPositiveDefinite : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Malformed dataset or configuration input.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace ssn
