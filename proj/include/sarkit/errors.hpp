#pragma once

#include <stdexcept>
#include <string>

namespace sarkit {

// Base class for every error raised by the library. The CLI maps the
// concrete type onto its exit-code contract.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A caller violated a precondition (empty sentence, out-of-range index, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// An object was used in the wrong lifecycle state (e.g. a tape replayed).
class StateError : public Error {
 public:
  using Error::Error;
};

// Malformed input file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Well-formed input with unusable content (missing labels, bad tag, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value or unknown configuration key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A training regime was asked to run without the pools it needs.
class RegimeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace sarkit
