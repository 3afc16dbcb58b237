#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wave {

// Root of every error thrown by the library. The CLI maps subclasses onto
// exit codes (see cli.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Bad user input: out-of-range labels, invalid configuration values, missing paths.
class InputError : public Error {
 public:
  using Error::Error;
};

// A backward function was called without the forward cache it needs.
class StateError : public Error {
 public:
  using Error::Error;
};

// A bank and a target configuration cannot be combined (template size does
// not divide some weight dimension).
class IncompatibleError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss during training.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t step)
      : Error(what + " at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

enum class FormatErrorKind { bad_magic, version, truncated, checksum, malformed };

class FormatError : public Error {
 public:
  FormatError(FormatErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
  FormatErrorKind kind() const { return kind_; }

 private:
  FormatErrorKind kind_;
};

}  // namespace wave
