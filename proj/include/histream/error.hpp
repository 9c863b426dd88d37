#pragma once

#include <stdexcept>
#include <string>

namespace histream {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or unknown option.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// An object was used in the wrong lifecycle state.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values appeared during generation or training.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace histream
