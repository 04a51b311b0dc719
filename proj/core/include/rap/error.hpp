#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rap {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand extents do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input is well-shaped but numerically unusable (e.g. a zero-norm row).
class DegenerateInputError : public Error {
 public:
  DegenerateInputError(std::string what, std::size_t row)
      : Error(std::move(what)), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// A NaN/Inf or otherwise impossible value surfaced during a computation.
class NumericFault : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A precondition on the caller's data was violated.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Bad user input at the API boundary (empty split, missing ground truth...).
class InputError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Errors while decoding the corpus or checkpoint container formats.
class FormatError : public Error {
 public:
  enum class Kind { kMalformedHeader, kTruncated, kVersionMismatch };

  FormatError(Kind kind, std::string what) : Error(std::move(what)), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace rap
