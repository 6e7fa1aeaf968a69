#pragma once

#include <stdexcept>
#include <string>

namespace segzsl {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes that do not chain (matrix products, layer inputs, label counts).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf encountered in a loss, gradient or loaded payload.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Binary file format errors. Each failure mode has its own type so callers
// and tests can tell them apart.
class FormatError : public Error {
 public:
  using Error::Error;
};
class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};
class UnsupportedVersionError : public FormatError {
 public:
  using FormatError::FormatError;
};
class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};
class NonFiniteEntryError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Dataset layout or invariant violation (missing file, overlapping split...).
class DatasetError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training diverged or produced a non-finite loss.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace segzsl
