#pragma once

#include <stdexcept>
#include <string>

namespace mcmpg {

/// Two masks (or a mask and a grid) disagree on height/width.
class ShapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A propagator (built-in or external plugin) could not produce a mask.
class PropagationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid pipeline configuration. Maps to exit code 2 in the CLI.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed manifest, unreadable image, schema violation. Exit code 3.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mcmpg
