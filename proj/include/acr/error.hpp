#pragma once

#include <stdexcept>
#include <string>

namespace acr {

/// Invalid argument: bad extents, out-of-range k/j, label out of range.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input is well-formed but admits no answer (all entries masked, empty selection).
class DegenerateInputError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed on-disk artifact.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration key or value.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace acr
