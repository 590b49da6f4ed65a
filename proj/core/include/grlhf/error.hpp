#pragma once

#include <stdexcept>
#include <string>

namespace grlhf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition of an operation was violated by the caller.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Input widths (observation, action, network input) do not agree.
class DimensionError : public UsageError {
 public:
  using UsageError::UsageError;
};

/// Training produced non-finite values.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// A persisted file (snapshot, checkpoint, log) could not be read back.
class CorruptDataError : public Error {
 public:
  using Error::Error;
};

/// A selection strategy ran out of candidates.
class ExhaustedError : public Error {
 public:
  using Error::Error;
};

}  // namespace grlhf
