#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace trimix {

// Base of every error raised by the library. The CLI maps NumericError to
// exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

// Operand is not recorded on the tape it is being differentiated against.
class DetachedError : public ContractError {
 public:
  using ContractError::ContractError;
};

class BatchParityError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Zero-variance slice, zero-norm row, constant feature bank.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class ArchMismatchError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace trimix
