#pragma once

#include <stdexcept>
#include <string>

namespace driftmeta {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dimension disagreement between tensors / matrices.
struct ShapeError : Error {
  using Error::Error;
};

// Numerically or semantically invalid values (zero norms, non-finite
// gradients, division by a zero scale, ...).
struct ValueError : Error {
  using Error::Error;
};

// Bad experiment configuration; maps to process exit code 2.
struct ConfigError : Error {
  using Error::Error;
};

// Filesystem / serialization problems.
struct IoError : Error {
  using Error::Error;
};

// A label was read before the evaluation clock unlocked it.
struct LookaheadError : Error {
  using Error::Error;
};

}  // namespace driftmeta
