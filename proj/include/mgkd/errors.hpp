#pragma once

#include <stdexcept>
#include <string>

namespace mgkd {

/// Root of every error raised by the library. Each subclass maps onto one
/// CLI exit code (see cli/commands.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes of the operands do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An object was used in a state it does not support (stale cache, missing snapshot).
class StateError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf or a zero norm where a finite, nonzero quantity is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A hyperparameter or option is outside its domain.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed delimited input; the message carries the line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Invalid data for the requested operation (missing feature block, single-class split).
class DataError : public Error {
 public:
  using Error::Error;
};

class SplitError : public DataError {
 public:
  using DataError::DataError;
};

class MetricError : public DataError {
 public:
  using DataError::DataError;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// A file the command depends on (teacher weights, dataset) does not exist.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

}  // namespace mgkd
