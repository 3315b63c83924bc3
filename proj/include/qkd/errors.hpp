#pragma once

#include <stdexcept>
#include <string>

namespace qkd {

/// Base of every error raised by the library. The CLI maps subclasses to exit
/// codes (see cli/exit_codes.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// log of a non-positive value, division by zero and friends.
class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed files: WAV, checkpoints, CSV tables.
class FormatError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

/// Misuse of stateful objects (consumed graph, unfrozen teacher, ...).
class StateError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Dataset content that contradicts its manifest.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace qkd
