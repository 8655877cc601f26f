#pragma once

#include <stdexcept>
#include <string>

namespace kslab {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition was violated by the caller.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A model or scenario configuration is incomplete or malformed.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A requested quantity does not exist (e.g. no coupling reaches a phase).
class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// Internal consistency failure: a condition the theory rules out was hit.
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace kslab
