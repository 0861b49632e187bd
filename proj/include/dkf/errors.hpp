#pragma once

#include <stdexcept>
#include <string>

namespace dkf {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A principal window of a covariance band failed its Cholesky factorization.
struct SingularWindowError : Error {
  SingularWindowError(int index_, const std::string& where)
      : Error(where + ": singular principal window at index " + std::to_string(index_)),
        index(index_) {}
  int index;
};

// Collapse step hit a non-positive or singular pivot block.
struct CollapsePivotError : Error {
  CollapsePivotError(int anchor_, const std::string& where)
      : Error(where + ": singular collapse pivot anchored at index " + std::to_string(anchor_)),
        anchor(anchor_) {}
  int anchor;
};

struct ConvergenceError : Error {
  ConvergenceError(const std::string& what, double residual_)
      : Error(what + " (residual " + std::to_string(residual_) + ")"), residual(residual_) {}
  double residual;
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace dkf
