#pragma once

#include <stdexcept>
#include <string>

namespace cmg {

// Bad input: shapes, ranges, malformed files, unknown keys. Maps to CLI exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Failure while doing valid work (divergence, I/O, network). Maps to CLI exit code 3.
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class MagicMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedPayloadError : public FormatError {
 public:
  TruncatedPayloadError(std::size_t expected, std::size_t actual)
      : FormatError("truncated payload: expected " + std::to_string(expected) +
                    " bytes, got " + std::to_string(actual)),
        expected_bytes(expected),
        actual_bytes(actual) {}
  std::size_t expected_bytes;
  std::size_t actual_bytes;
};

class HeaderMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class UnsupportedVersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Schema violation carrying the JSON path of the offending node, e.g. "$.groups[1].members".
class SchemaError : public FormatError {
 public:
  SchemaError(std::string json_path, const std::string& what)
      : FormatError(json_path + ": " + what), path(std::move(json_path)) {}
  std::string path;
};

}  // namespace cmg
