#pragma once

#include <stdexcept>
#include <string>

namespace ltts {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor or vector dimension mismatch.
struct ShapeError : Error {
  using Error::Error;
};

// Non-finite value where a finite one is required.
struct NumericError : Error {
  using Error::Error;
};

// Invalid configuration or argument combination.
struct ConfigError : Error {
  using Error::Error;
};

// Filesystem-level failure.
struct IoError : Error {
  using Error::Error;
};

// On-disk container violation. One kind per failure mode so callers can
// distinguish a wrong file from a damaged one.
class FormatError : public Error {
 public:
  enum class Kind { BadMagic, BadVersion, Truncated, ChecksumMismatch, Malformed };

  FormatError(Kind kind, const std::string& msg) : Error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace ltts
