#pragma once

#include <stdexcept>
#include <string>

namespace swinfree {

/// Extents of two operands (or of an operand and a declared geometry) disagree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A model, stage or window configuration violates one of its constraints.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Bad command-line usage such as an unknown report format.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed files: weight archives, tensor blobs, manifests.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace swinfree
