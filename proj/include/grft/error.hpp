#pragma once

#include <stdexcept>
#include <string>

namespace grft {

// Base of all library errors. The CLI maps categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

// Raised when an exhaustive oracle is asked to enumerate too much.
class GuardError : public Error {
 public:
  using Error::Error;
};

}  // namespace grft
