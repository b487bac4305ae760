#pragma once

#include <stdexcept>
#include <string>

namespace flatcmc {

/// Mismatched vector/matrix sizes or out-of-range indices.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value violates an operation's precondition (sign, range, positivity).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or out-of-range scenario configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Base for failures that arise while computing, not from bad input.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// |K|^2 vanished somewhere, so the lapse equation has no unique solution.
class DegenerateLapseError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// A metric scale factor became non-positive (focal point / collapse).
class DegenerationError : public NumericalError {
 public:
  DegenerationError(const std::string& what, double tau)
      : NumericalError(what), tau_(tau) {}
  double tau() const { return tau_; }

 private:
  double tau_;
};

/// An iterative solver ran out of iterations or line-search steps.
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, double residual)
      : NumericalError(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// A height field stopped being spacelike (|grad phi| >= 1).
class SpacelikeViolation : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace flatcmc
