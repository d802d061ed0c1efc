#pragma once

#include <stdexcept>
#include <string>

namespace attnpool {

// Every library failure derives from Error. The CLI maps the concrete type
// onto its exit code (ShapeError/ValidationError/ConfigError -> 3, IoError -> 2).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Raised when training produces a non-finite loss or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace attnpool
