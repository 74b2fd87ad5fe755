#pragma once

#include <stdexcept>
#include <string>

namespace delaypo {

// Error taxonomy used across the library. The CLI maps ConfigError to exit
// code 2 and NumericError to exit code 3.

// Invalid user-supplied parameters (negative delay, gamma <= 0, bad config).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Inconsistent shapes or misuse of a stateful component (double drain,
// empty cost list, mismatched table sizes).
struct StructuralError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN/inf reached a numeric table, or a floating-point invariant broke
// beyond tolerance.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A hard resource cap was exceeded (simulator call budget).
struct ResourceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace delaypo
