#pragma once

#include <stdexcept>
#include <string>

namespace asyncbev {

// Timestamp or query outside the valid interval of a scenario / trajectory.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Invalid configuration value (sensor, grid, latency or run config).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Two grids that should share a GridSpec do not.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A value outside the domain an operation accepts (e.g. non-binary IoU input).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace asyncbev
