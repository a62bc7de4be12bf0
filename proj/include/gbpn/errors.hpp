#pragma once

#include <stdexcept>
#include <string>

namespace gbpn {

// Caller handed us something malformed (bad shape, id out of range, ...).
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A computation produced NaN/inf where a finite value was required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The request is valid but exceeds a hard resource guard.
struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// On-disk artifact missing or malformed; message carries file (and line).
struct LoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gbpn
