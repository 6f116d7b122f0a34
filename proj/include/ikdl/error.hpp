#pragma once

#include <stdexcept>
#include <string>

namespace ikdl {

// Bad shapes, malformed files, invalid configuration. Maps to CLI exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical routine could not produce a usable result. Maps to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ikdl
