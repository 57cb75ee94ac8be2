#pragma once

#include <stdexcept>
#include <string>

namespace fieldgen {

// Shape or extent mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Out-of-range scalar argument (timestep, blend weight, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf produced or detected; the current step must be aborted.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A metric or statistic is undefined for the given input.
class UndefinedError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Anything wrong with on-disk data. Subclasses narrow the cause.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CorruptionError : public DataError {
 public:
  using DataError::DataError;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace fieldgen
