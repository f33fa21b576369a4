#pragma once

#include <cmath>

#include "discfb/errors.hpp"

namespace discfb {

/// Smoothed right-hand side phi_delta approximating s^p (and the indicator
/// of {s > 0} when p = 0):
///
///   phi(s) = 0                    s <= 0
///   phi(s) = s^p sigma(s / delta) otherwise
///
/// with sigma the quintic smoothstep 6x^5 - 15x^4 + 10x^3 on [0, 1], which is
/// C^2, monotone, 0 at 0 and 1 beyond 1. Hence phi = s^p for s >= delta and
/// phi is C^2 and nondecreasing on the whole line.
class PenaltyFamily {
 public:
  PenaltyFamily(double delta, double p) : delta_(delta), p_(p) {
    if (!(delta > 0.0) || !std::isfinite(delta)) throw ParameterRangeError("delta must be positive");
    if (!(p >= 0.0 && p < 1.0)) throw ParameterRangeError("p must lie in [0, 1)");
  }

  double delta() const noexcept { return delta_; }
  double p() const noexcept { return p_; }

  static double smoothstep(double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    return x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
  }
  static double smoothstep_prime(double x) {
    if (x <= 0.0 || x >= 1.0) return 0.0;
    const double y = x * (1.0 - x);
    return 30.0 * y * y;
  }

  double operator()(double s) const {
    if (!(s > 0.0)) return 0.0;
    const double sig = smoothstep(s / delta_);
    return p_ == 0.0 ? sig : std::pow(s, p_) * sig;
  }

  double derivative(double s) const {
    if (!(s > 0.0)) return 0.0;
    const double x = s / delta_;
    if (p_ == 0.0) return smoothstep_prime(x) / delta_;
    const double sp = std::pow(s, p_);
    return p_ * sp / s * smoothstep(x) + sp * smoothstep_prime(x) / delta_;
  }

 private:
  double delta_;
  double p_;
};

}  // namespace discfb
