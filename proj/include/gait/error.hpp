#pragma once

#include <stdexcept>
#include <string>

namespace gait {

/// Invalid user-supplied configuration (bad keys, values out of range).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing, malformed or inconsistent dataset / sidecar / checkpoint input.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or broken numeric preconditions during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gait
