// Error types shared across the tracker library.
#pragma once

#include <stdexcept>
#include <string>

namespace rgbt {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A dataset directory is missing or lacks a required subdirectory/file.
class MissingDirectoryError : public Error {
 public:
  using Error::Error;
};

/// RGB and thermal frame counts (or annotation line counts) disagree.
class CountMismatchError : public Error {
 public:
  using Error::Error;
};

/// An annotation line could not be parsed; carries the 1-based line number.
class MalformedAnnotationError : public Error {
 public:
  MalformedAnnotationError(const std::string& what, int line)
      : Error(what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// A box lies fully outside the frame (or is otherwise unusable).
class DegenerateBoxError : public Error {
 public:
  using Error::Error;
};

/// Rejection sampling exceeded its attempt budget.
class SamplingExhaustedError : public Error {
 public:
  using Error::Error;
};

/// Tensor/image dimensions do not match what an operation expects.
class ShapeMismatchError : public Error {
 public:
  using Error::Error;
};

/// Input gradients were requested from a network in no-gradient mode.
class GradientUnavailableError : public Error {
 public:
  using Error::Error;
};

/// A model was used before fit()/train() was called.
class NotFittedError : public Error {
 public:
  using Error::Error;
};

/// A training routine received no data.
class EmptyDatasetError : public Error {
 public:
  using Error::Error;
};

/// Prediction and ground-truth tracks have different lengths.
class LengthMismatchError : public Error {
 public:
  using Error::Error;
};

/// A configuration file or value is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace rgbt
