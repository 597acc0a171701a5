#pragma once

#include <stdexcept>
#include <string>

namespace steerode {

// Invalid user-supplied configuration (bad flag value, violated precondition
// that the caller can fix). CLI maps this to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Internal API misuse: wrong shapes, mismatched grids, out-of-range ids.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Non-finite value produced by numeric code.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Adaptive solve stopped making progress: step underflow or step budget
// exhausted, typically stiffness or a diverging field.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, double t, double h, long steps)
      : std::runtime_error(what), t(t), h(h), steps(steps) {}
  double t;
  double h;
  long steps;
};

// The sampled integration end time collapsed onto or below the start time.
class SamplerDegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace steerode
