#pragma once

#include <stdexcept>
#include <string>

namespace spncf {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller-supplied input is unusable: bad arguments, malformed files,
// out-of-range class indices. The CLI maps these to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

class FormatError : public InputError {
 public:
  using InputError::InputError;
};

class VersionMismatchError : public FormatError {
 public:
  VersionMismatchError(int found, int expected)
      : FormatError("unsupported format_version " + std::to_string(found) +
                    " (expected " + std::to_string(expected) + ")"),
        found_(found) {}
  int found() const { return found_; }

 private:
  int found_;
};

// A computation produced NaN or infinity where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace spncf
