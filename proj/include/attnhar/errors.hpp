#pragma once

#include <stdexcept>
#include <string>

namespace attnhar {

// Dimension/shape violations in numeric kernels and model plumbing.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid argument values: empty vectors, negative sizes, malformed
// probability vectors, bad enum names.
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Non-finite values where finite arithmetic is required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Problems with dataset files or their contents.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Problems with run-configuration files.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training failures (divergence and friends).
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checkpoint file problems, discriminated by kind so callers can react to
// bad magic vs. version vs. truncation vs. shape mismatches.
struct CheckpointError : std::runtime_error {
  enum class Kind { bad_magic, version, truncated, shape, io };

  CheckpointError(Kind k, const std::string& msg)
      : std::runtime_error(msg), kind(k) {}

  Kind kind;
};

// Invariant breaches that indicate a bug in the caller (e.g. a forward
// cache replayed against a different input).
struct InternalError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace attnhar
