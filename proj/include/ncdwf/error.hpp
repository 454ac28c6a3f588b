#pragma once

#include <stdexcept>
#include <string>

namespace ncdwf {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dimension or structural mismatch in tensor/graph operations.
struct ShapeError : Error {
  using Error::Error;
};

// A computation produced NaN or Inf.
struct NumericError : Error {
  using Error::Error;
};

// Invalid run configuration (bad key, bad value, inconsistent spec).
struct ConfigError : Error {
  using Error::Error;
};

// File input/output problems: missing files, malformed formats.
struct IoError : Error {
  using Error::Error;
};

}  // namespace ncdwf
