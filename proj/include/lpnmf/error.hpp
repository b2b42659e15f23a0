#pragma once

#include <stdexcept>
#include <string>

namespace lpnmf {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: malformed files, out-of-range parameters, violated preconditions.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// The numerics failed on otherwise valid input (degenerate designs,
// iteration caps, repeated bootstrap failures).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace lpnmf
