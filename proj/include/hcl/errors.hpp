#pragma once

#include <stdexcept>
#include <string>

namespace hcl {

// Root of every error the library throws.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not fit together.
class DimensionError : public Error {
public:
  using Error::Error;
};

// Caller violated an operation's precondition.
class PreconditionError : public Error {
public:
  using Error::Error;
};

// Misuse of an API contract (e.g. backward on a non-scalar).
class ContractError : public Error {
public:
  using Error::Error;
};

// log/exp outside their domain, NaN during training.
class NumericalError : public Error {
public:
  using Error::Error;
};

// Errors raised while reading user data. The CLI maps all of these to exit code 2.
class DataError : public Error {
public:
  using Error::Error;
};

class ParseError : public DataError {
public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : DataError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

class IndexError : public DataError {
public:
  using DataError::DataError;
};

class ConflictError : public DataError {
public:
  using DataError::DataError;
};

class IoError : public DataError {
public:
  using DataError::DataError;
};

// Checkpoint does not match the model the config describes.
class VersionError : public DataError {
public:
  using DataError::DataError;
};

// Bad configuration key or value.
class ConfigError : public Error {
public:
  using Error::Error;
};

}  // namespace hcl
