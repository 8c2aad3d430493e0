#pragma once

#include <stdexcept>
#include <string>

namespace mvseg {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated a documented precondition (bad dimensions, bad config).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// On-disk data is malformed or truncated.
class FormatError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw PreconditionError(msg);
}

}  // namespace mvseg
