#pragma once

#include <stdexcept>
#include <string>

namespace duohash {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration or malformed input files. The CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or another numerical breakdown. The CLI maps this to exit code 3.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace duohash
