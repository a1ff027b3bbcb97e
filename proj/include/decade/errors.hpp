#pragma once

#include <stdexcept>
#include <string>

namespace decade {

// Base of every error the toolkit throws. The CLI maps the concrete type
// to a process exit code (see exit_code()).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration: missing paths, invalid hyperparameters, layer sizes
// that do not conform, unmet pipeline prerequisites.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class DependencyError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Tensor shapes that disagree at an operation boundary.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Operation called in the wrong lifecycle state (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

// Loss or weights turned non-finite during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DegenerateBoxError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

// Aggregating an empty set (a metric over zero samples is undefined, never 0).
class EmptySetError : public Error {
 public:
  using Error::Error;
};

// End-to-end evaluation found no detection matching any annotation.
class EmptyMatchError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointShapeError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

// Exit codes: 0 success, 2 configuration, 3 data/parse, 4 numeric/training.
inline int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return 2;
  if (dynamic_cast<const DimensionError*>(&e) != nullptr ||
      dynamic_cast<const StateError*>(&e) != nullptr ||
      dynamic_cast<const NumericError*>(&e) != nullptr) {
    return 4;
  }
  if (dynamic_cast<const Error*>(&e) != nullptr) return 3;
  return 4;
}

}  // namespace decade
