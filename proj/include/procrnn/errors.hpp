// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace procrnn {

/// Invalid hyperparameters or inconsistent inputs to an operation.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data (CSV rows, headers, timestamps).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Header-level problem: missing or duplicated column.
class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

/// A single bad row; `line()` is the 1-based physical line where the record starts.
class RowError : public DataError {
 public:
  RowError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Failure to read or interpret a model file.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedVersionError : public ModelError {
 public:
  UnsupportedVersionError(unsigned found, unsigned supported)
      : ModelError("model format version " + std::to_string(found) +
                   " is not supported (this build reads version " +
                   std::to_string(supported) + ")"),
        found_(found),
        supported_(supported) {}
  unsigned found() const noexcept { return found_; }
  unsigned supported() const noexcept { return supported_; }

 private:
  unsigned found_;
  unsigned supported_;
};

/// Truncated or corrupted model file.
class IntegrityError : public ModelError {
 public:
  using ModelError::ModelError;
};

}  // namespace procrnn
