#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

// Boost 1.74's pchip calls isnan unqualified.
namespace boost::math::interpolators {
using std::isnan;
}
#include <boost/math/interpolators/pchip.hpp>

#include "discfb/errors.hpp"

namespace discfb {

/// Monotone piecewise-cubic (Fritsch-Carlson) interpolant on increasing abscissae.
class MonotoneCubic {
 public:
  MonotoneCubic(std::vector<double> x, std::vector<double> y) {
    if (x.size() != y.size() || x.size() < 4) {
      throw ParameterRangeError("monotone cubic needs at least 4 matching samples");
    }
    lo_ = x.front();
    hi_ = x.back();
    spline_.emplace(std::move(x), std::move(y));
  }

  double operator()(double x) const { return (*spline_)(std::clamp(x, lo_, hi_)); }

 private:
  double lo_ = 0.0;
  double hi_ = 0.0;
  std::optional<boost::math::interpolators::pchip<std::vector<double>>> spline_;
};

/// Linear interpolation of samples on the uniform periodic partition of [0, 2 pi).
inline double periodic_linear(std::span<const double> samples, double theta) {
  const std::size_t n = samples.size();
  const double two_pi = 2.0 * std::numbers::pi;
  double u = std::fmod(theta, two_pi);
  if (u < 0.0) u += two_pi;
  const double pos = u / two_pi * static_cast<double>(n);
  std::size_t j = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(j);
  j %= n;
  return (1.0 - frac) * samples[j] + frac * samples[(j + 1) % n];
}

/// Linear interpolation on increasing, possibly nonuniform abscissae; zero
/// outside [x.front(), x.back()].
inline double linear_or_zero(std::span<const double> x, std::span<const double> y, double at) {
  if (x.empty() || at < x.front() || at > x.back()) return 0.0;
  auto it = std::upper_bound(x.begin(), x.end(), at);
  if (it == x.end()) return y.back();
  const std::size_t k = static_cast<std::size_t>(it - x.begin());
  if (k == 0) return y.front();
  const double x0 = x[k - 1];
  const double x1 = x[k];
  const double s = (at - x0) / (x1 - x0);
  return (1.0 - s) * y[k - 1] + s * y[k];
}

}  // namespace discfb
