#pragma once

#include <stdexcept>
#include <string>

namespace sprobe {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad shape, out-of-range count, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Training data does not contain both classes.
class SingleClassError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class DimensionMismatch : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Structural problems with an on-disk file. Each subclass is a distinct failure.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

class BadMagicError : public FormatError {
 public:
  BadMagicError() : FormatError("bad magic") {}
};

class VersionMismatchError : public FormatError {
 public:
  explicit VersionMismatchError(unsigned v)
      : FormatError("version mismatch: got " + std::to_string(v)), found(v) {}
  unsigned found;
};

class TruncatedPayloadError : public FormatError {
 public:
  TruncatedPayloadError() : FormatError("truncated payload") {}
};

class ShapeError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// A regime cannot be realised with the examples available.
class InfeasibleRegime : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

}  // namespace sprobe
