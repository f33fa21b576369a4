#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace discfb {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A discontinuous coefficient model was evaluated at x = 0.
class OriginEvaluationError : public Error {
 public:
  using Error::Error;
};

/// 1 + epsilon <= 0: the coefficient matrix is not uniformly elliptic.
class EllipticityError : public Error {
 public:
  using Error::Error;
};

/// Grid too coarse, malformed, or not covering a requested window.
class GridError : public Error {
 public:
  using Error::Error;
};

/// Invalid parameter (p, epsilon, step, ...) for an operation.
class ParameterRangeError : public Error {
 public:
  using Error::Error;
};

/// Configuration failed validation (schema or invariants).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Quadrature failed to reach its tolerance.
class QuadratureError : public Error {
 public:
  QuadratureError(const std::string& what, double achieved)
      : Error(what), achieved_(achieved) {}
  double achieved() const noexcept { return achieved_; }

 private:
  double achieved_;
};

/// The angular ODE did not return to zero within the search window.
class NonReturnError : public Error {
 public:
  using Error::Error;
};

/// Fewer than the required number of resolved dyadic levels.
class DegenerateWindowError : public Error {
 public:
  using Error::Error;
};

/// One entry of a nonlinear-solver iteration log.
struct IterationRecord {
  int stage = 0;
  int iteration = 0;
  double delta = 0.0;
  double residual = 0.0;
  double step_norm = 0.0;
  double damping = 1.0;
  int repairs = 0;     // re-solves with raised secant slopes before the step was accepted
  std::string method;  // "newton", "newton-secant" or "picard"
};

/// A penalized solve did not converge; carries the diagnostic log.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, int stage,
                   std::vector<IterationRecord> log)
      : Error(what), stage_(stage), log_(std::move(log)) {}
  int stage() const noexcept { return stage_; }
  const std::vector<IterationRecord>& log() const noexcept { return log_; }

 private:
  int stage_;
  std::vector<IterationRecord> log_;
};

}  // namespace discfb
