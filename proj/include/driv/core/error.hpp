#pragma once

#include <stdexcept>
#include <string>

namespace driv {

// Base class for all toolkit errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad configuration, unparseable option or malformed config file (CLI exit 2).
struct ConfigError : Error {
  using Error::Error;
};

// Missing, unreadable or inconsistent data on disk (CLI exit 3).
struct DataError : Error {
  using Error::Error;
};

// Mismatched tensor/mask dimensions between call arguments.
struct ShapeError : Error {
  using Error::Error;
};

}  // namespace driv
