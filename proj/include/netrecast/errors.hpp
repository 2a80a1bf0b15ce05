#pragma once

#include <stdexcept>
#include <string>

namespace netrecast {

// Base of every error the library throws. Catch this to handle any failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that cannot be combined by an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// API misuse: backward on an unrecorded tensor, tap out of range, etc.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Batch norm in train mode over a single element per channel.
class DegenerateVarianceError : public Error {
 public:
  using Error::Error;
};

// Network or block description violating a structural invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A recasting plan that does not fit its teacher or the allowed recast pairs.
class PlanError : public Error {
 public:
  using Error::Error;
};

// Optimizer invoked on a parameter without a gradient.
class MissingGradientError : public Error {
 public:
  using Error::Error;
};

// Class label outside [0, num_classes).
class LabelError : public Error {
 public:
  using Error::Error;
};

// File-level decode failures.
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

// A stored tensor whose extents disagree with the structure it belongs to.
class ShapeMismatchError : public FormatError {
 public:
  ShapeMismatchError(std::string tensor, const std::string& what)
      : FormatError(what), tensor_(std::move(tensor)) {}
  const std::string& tensor() const noexcept { return tensor_; }

 private:
  std::string tensor_;
};

// Bad command-line or config-file input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace netrecast
