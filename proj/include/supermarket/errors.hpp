#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace supermarket {

/// Matrix or vector dimensions incompatible with the requested operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Model parameters outside the stable operating region (e.g. rho >= 1).
class StabilityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A required linear solve failed: singular matrix or reducible truncation.
class LinearSolveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative solver stopped without meeting its tolerance. Carries the
/// last iterate and its residual so callers can inspect how far it got.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> last_iterate = {},
                   double residual = 0.0)
      : std::runtime_error(what),
        last_iterate_(std::move(last_iterate)),
        residual_(residual) {}

  const std::vector<double>& last_iterate() const { return last_iterate_; }
  double residual() const { return residual_; }

 private:
  std::vector<double> last_iterate_;
  double residual_;
};

/// A model description file failed schema validation.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace supermarket
