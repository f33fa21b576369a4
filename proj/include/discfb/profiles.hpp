#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "discfb/errors.hpp"
#include "discfb/grid.hpp"
#include "discfb/polar_operator.hpp"

namespace discfb {

enum class Provenance { ClosedForm, OdeShooting, Quadrature };

inline std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::ClosedForm:
      return "closed_form";
    case Provenance::OdeShooting:
      return "ode_shooting";
    case Provenance::Quadrature:
      return "quadrature";
  }
  return "unknown";
}

/// Angular profile g of a degree-beta homogeneous solution v = r^beta g(theta)
/// of the planar model, positive on the arc (0, alpha) and zero elsewhere.
/// g solves beta (beta + eps) g + (1 + eps) g'' = g^p on the arc with
/// g(0) = g'(0) = 0.
struct HomogeneousProfile {
  double p = 0.0;
  double epsilon = 0.0;
  double beta = 2.0;
  std::optional<double> a_eps;      // p = 0 only
  std::optional<double> omega_eps;  // p = 0 only
  double alpha = 0.0;
  std::vector<double> theta;
  std::vector<double> g;
  std::vector<double> gprime;
  Provenance provenance = Provenance::ClosedForm;

  /// g at an arbitrary angle (periodic), zero off the positivity arc.
  double value(double angle) const {
    const double two_pi = 2.0 * std::numbers::pi;
    double u = std::fmod(angle, two_pi);
    if (u < 0.0) u += two_pi;
    if (!(u > 0.0 && u < alpha)) return 0.0;
    if (provenance == Provenance::ClosedForm) return *a_eps * (1.0 - std::cos(*omega_eps * u));
    // Cubic Hermite on the (g, g') samples.
    auto it = std::upper_bound(theta.begin(), theta.end(), u);
    if (it == theta.begin() || it == theta.end()) return 0.0;
    const std::size_t k = static_cast<std::size_t>(it - theta.begin());
    const double x0 = theta[k - 1];
    const double h = theta[k] - x0;
    const double s = (u - x0) / h;
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
    const double h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s);
    const double h11 = s * s * (s - 1);
    return std::max(0.0, h00 * g[k - 1] + h10 * h * gprime[k - 1] + h01 * g[k] +
                             h11 * h * gprime[k]);
  }
};

namespace detail {

inline void check_profile_params(double p, double epsilon) {
  if (!(p >= 0.0 && p < 1.0)) throw ParameterRangeError("p must lie in [0, 1)");
  if (!std::isfinite(epsilon) || !(1.0 + epsilon > 0.0)) {
    throw ParameterRangeError("profile requires 1 + epsilon > 0");
  }
}

}  // namespace detail

/// a_eps = 1 / (2 (2 + eps)).
inline double cone_amplitude(double epsilon) { return 1.0 / (2.0 * (2.0 + epsilon)); }

/// omega_eps = sqrt(2 (2 + eps) / (1 + eps)).
inline double cone_frequency(double epsilon) {
  if (!(1.0 + epsilon > 0.0)) throw ParameterRangeError("omega_eps requires 1 + epsilon > 0");
  return std::sqrt(2.0 * (2.0 + epsilon) / (1.0 + epsilon));
}

/// Maximum of the profile, where the radicand of the first integral vanishes:
/// g_max = [2 / ((p + 1) beta (beta + eps))]^{1 / (1 - p)}.
inline double profile_peak(double p, double epsilon) {
  detail::check_profile_params(p, epsilon);
  const double beta = beta_of(p);
  return std::pow(2.0 / ((p + 1.0) * beta * (beta + epsilon)), 1.0 / (1.0 - p));
}

/// The p = 0 profile g = a_eps (1 - cos(omega_eps theta)) on (0, 2 pi / omega_eps).
inline HomogeneousProfile closed_form_p0(double epsilon, std::size_t n_samples = 4097) {
  if (!(1.0 + epsilon > 0.0) || !(2.0 + epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw ParameterRangeError("closed-form profile requires 1 + epsilon > 0 and 2 + epsilon > 0");
  }
  if (n_samples < 3) throw ParameterRangeError("closed-form profile needs at least 3 samples");
  HomogeneousProfile prof;
  prof.p = 0.0;
  prof.epsilon = epsilon;
  prof.beta = 2.0;
  const double a = cone_amplitude(epsilon);
  const double w = cone_frequency(epsilon);
  prof.a_eps = a;
  prof.omega_eps = w;
  prof.alpha = 2.0 * std::numbers::pi / w;
  prof.provenance = Provenance::ClosedForm;
  prof.theta.resize(n_samples);
  prof.g.resize(n_samples);
  prof.gprime.resize(n_samples);
  for (std::size_t k = 0; k < n_samples; ++k) {
    const double th = prof.alpha * static_cast<double>(k) / static_cast<double>(n_samples - 1);
    prof.theta[k] = th;
    prof.g[k] = a * (1.0 - std::cos(w * th));
    prof.gprime[k] = a * w * std::sin(w * th);
  }
  prof.theta.back() = prof.alpha;
  prof.g.back() = 0.0;
  prof.gprime.back() = 0.0;
  return prof;
}

/// Integrates the angular ODE from the degenerate state g(0) = g'(0) = 0 on
/// its nontrivial branch. Near zero the only power balance is
/// g ~ c0 theta^beta with (1 + eps) c0 beta (beta - 1) = c0^p; the series is
/// carried to the next order and used up to theta0 = 10 step, after which a
/// classical RK4 step of size `step` takes over.
///
/// The arc length is located through the profile's reflection symmetry:
/// alpha = 2 theta*, where g'(theta*) = 0 is found by Hermite interpolation
/// of g' inside the step that brackets it. Integration then continues until
/// g returns to zero or theta reaches alpha.
inline HomogeneousProfile ode_integrate(double p, double epsilon, double step) {
  detail::check_profile_params(p, epsilon);
  if (!(step > 0.0 && step <= 1e-2)) throw ParameterRangeError("step must lie in (0, 1e-2]");
  const double beta = beta_of(p);
  const double K = beta * (beta + epsilon);
  const double m = 1.0 + epsilon;
  const double c0 = std::pow(m * beta * (beta - 1.0), -1.0 / (1.0 - p));
  const double c1 = -K * c0 / (m * ((beta + 2.0) * (beta + 1.0) - p * beta * (beta - 1.0)));

  using State = std::array<double, 2>;
  auto rhs = [&](const State& y) -> State {
    return {y[1], (positive_power(y[0], p) - K * y[0]) / m};
  };
  auto series = [&](double th) -> State {
    return {c0 * std::pow(th, beta) + c1 * std::pow(th, beta + 2.0),
            c0 * beta * std::pow(th, beta - 1.0) + c1 * (beta + 2.0) * std::pow(th, beta + 1.0)};
  };

  HomogeneousProfile prof;
  prof.p = p;
  prof.epsilon = epsilon;
  prof.beta = beta;
  prof.provenance = Provenance::OdeShooting;
  if (p == 0.0) {
    prof.a_eps = cone_amplitude(epsilon);
    prof.omega_eps = cone_frequency(epsilon);
  }

  constexpr int kLiftOffSteps = 10;
  for (int k = 0; k <= kLiftOffSteps; ++k) {
    const double th = step * k;
    const State y = k == 0 ? State{0.0, 0.0} : series(th);
    prof.theta.push_back(th);
    prof.g.push_back(y[0]);
    prof.gprime.push_back(y[1]);
  }

  State y{prof.g.back(), prof.gprime.back()};
  std::size_t k = kLiftOffSteps;
  const double theta_limit = 4.0 * std::numbers::pi;
  std::optional<double> alpha;
  for (;;) {
    const double th = step * static_cast<double>(k);
    if (th > theta_limit) {
      throw NonReturnError("angular ODE did not return to zero by theta = 4 pi (p = " +
                           std::to_string(p) + ", eps = " + std::to_string(epsilon) + ")");
    }
    // Near the lift-off g ~ theta^beta varies on the scale theta / beta, so the
    // first steps are split until that scale is resolved; otherwise the
    // relative error made there shifts alpha by O(step).
    const int n_sub = std::max(1, static_cast<int>(std::ceil(200.0 * beta * step / th)));
    const double hs = step / n_sub;
    State yn = y;
    for (int s = 0; s < n_sub; ++s) {
      const State k1 = rhs(yn);
      const State k2 = rhs({yn[0] + 0.5 * hs * k1[0], yn[1] + 0.5 * hs * k1[1]});
      const State k3 = rhs({yn[0] + 0.5 * hs * k2[0], yn[1] + 0.5 * hs * k2[1]});
      const State k4 = rhs({yn[0] + hs * k3[0], yn[1] + hs * k3[1]});
      yn = {yn[0] + hs / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            yn[1] + hs / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])};
    }
    const double thn = th + step;

    if (!alpha && y[1] > 0.0 && yn[1] <= 0.0) {
      // Cubic Hermite model of g' on [th, thn] using g'' from the ODE.
      const double d0 = y[1];
      const double d1 = yn[1];
      const double s0 = rhs(y)[1] * step;
      const double s1 = rhs(yn)[1] * step;
      auto gp = [&](double s) {
        const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
        const double h10 = s * (1 - s) * (1 - s);
        const double h01 = s * s * (3 - 2 * s);
        const double h11 = s * s * (s - 1);
        return h00 * d0 + h10 * s0 + h01 * d1 + h11 * s1;
      };
      double lo = 0.0;
      double hi = 1.0;
      for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
        const double mid = 0.5 * (lo + hi);
        (gp(mid) > 0.0 ? lo : hi) = mid;
      }
      alpha = 2.0 * (th + 0.5 * (lo + hi) * step);
    }

    if (alpha && (thn >= *alpha || yn[0] <= 0.0)) break;
    prof.theta.push_back(thn);
    prof.g.push_back(yn[0]);
    prof.gprime.push_back(yn[1]);
    y = yn;
    ++k;
  }
  prof.alpha = *alpha;
  prof.theta.push_back(prof.alpha);
  prof.g.push_back(0.0);
  prof.gprime.push_back(0.0);
  return prof;
}

namespace detail {

/// Pieces of the separable integral theta(g) = sqrt(1 + eps) * int_0^g ds / sqrt(F(s)),
/// F(g) = 2/(p+1) g^{p+1} - beta (beta + eps) g^2 = K g_max^2 s^{p+1} (1 - s^{1-p}),
/// s = g / g_max. Both endpoint singularities are removed by substitution:
///   lower half: s = sigma^q, q = 2 / (1 - p)   (integrand finite at sigma = 0)
///   upper half: s = 1 - tau^2                   (integrand finite at tau = 0)
struct SeparableIntegral {
  double p;
  double K;
  double gmax;
  double q;

  SeparableIntegral(double p_, double epsilon)
      : p(p_), K(beta_of(p_) * (beta_of(p_) + epsilon)), gmax(profile_peak(p_, epsilon)),
        q(2.0 / (1.0 - p_)) {}

  double radicand(double s, double one_minus) const {
    return K * gmax * gmax * std::pow(s, p + 1.0) * one_minus;
  }

  double lower(double sigma) const {
    if (sigma <= 0.0) sigma = 1e-300;
    const double s = std::pow(sigma, q);
    const double one_minus = 1.0 - std::pow(s, 1.0 - p);
    return gmax * q * std::pow(sigma, q - 1.0) / std::sqrt(radicand(s, one_minus));
  }

  double upper(double tau) const {
    if (tau <= 0.0) tau = 1e-300;
    const double s = 1.0 - tau * tau;
    const double one_minus = -std::expm1((1.0 - p) * std::log1p(-tau * tau));
    return 2.0 * gmax * tau / std::sqrt(radicand(s, one_minus));
  }

  double sigma_split() const { return std::pow(0.5, 1.0 / q); }
  double tau_split() const { return std::sqrt(0.5); }
};

inline double gk_integrate(auto&& f, double a, double b, double& error) {
  double l1 = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, 1e-12,
                                                                        &error, &l1);
}

/// One Gauss-Kronrod panel without subdivision, for the short cells of the
/// cumulative profile inversion (adaptive refinement there only chases
/// rounding noise).
inline double gk_panel(auto&& f, double a, double b) {
  double error = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 0, 0.0, &error);
}

}  // namespace detail

/// Arc length of the positivity set from the separable first integral,
///   alpha = 2 sqrt(1 + eps) int_0^{g_max} dg / sqrt(2/(p+1) g^{p+1} - beta (beta + eps) g^2),
/// by adaptive Gauss-Kronrod quadrature after removing both endpoint singularities.
inline double arc_length_quadrature(double p, double epsilon) {
  detail::check_profile_params(p, epsilon);
  const detail::SeparableIntegral I(p, epsilon);
  double e1 = 0.0;
  double e2 = 0.0;
  const double lower =
      detail::gk_integrate([&](double s) { return I.lower(s); }, 0.0, I.sigma_split(), e1);
  const double upper =
      detail::gk_integrate([&](double t) { return I.upper(t); }, 0.0, I.tau_split(), e2);
  const double alpha = 2.0 * std::sqrt(1.0 + epsilon) * (lower + upper);
  const double err = 2.0 * std::sqrt(1.0 + epsilon) * (e1 + e2);
  if (!std::isfinite(alpha) || err > 1e-10 * alpha) {
    throw QuadratureError("arc-length quadrature missed its tolerance", err);
  }
  return alpha;
}

/// Profile built by inverting the separable integral: theta(g) on the rising
/// half, mirrored about alpha / 2. `n_half` levels are clustered at both ends.
inline HomogeneousProfile quadrature_profile(double p, double epsilon, std::size_t n_half = 8000) {
  detail::check_profile_params(p, epsilon);
  if (n_half < 4) throw ParameterRangeError("quadrature profile needs at least 4 levels");
  const detail::SeparableIntegral I(p, epsilon);
  const double alpha = arc_length_quadrature(p, epsilon);
  const double root = std::sqrt(1.0 + epsilon);
  const double beta = beta_of(p);

  std::vector<double> th(n_half + 1);
  std::vector<double> gv(n_half + 1);
  std::vector<double> gd(n_half + 1);
  std::vector<double> level(n_half + 1);
  for (std::size_t k = 0; k <= n_half; ++k) {
    level[k] = 0.5 * (1.0 - std::cos(std::numbers::pi * static_cast<double>(k) /
                                     static_cast<double>(n_half)));
  }
  // theta(s) accumulated cell by cell: from 0 upward on the lower half
  // (sigma variable) and from alpha / 2 downward on the upper half (tau).
  th[0] = 0.0;
  th[n_half] = 0.5 * alpha;
  double prev_sigma = 0.0;
  double acc = 0.0;
  for (std::size_t k = 1; k < n_half && level[k] <= 0.5; ++k) {
    const double sigma = std::pow(level[k], 1.0 / I.q);
    acc += detail::gk_panel([&](double x) { return I.lower(x); }, prev_sigma, sigma);
    prev_sigma = sigma;
    th[k] = root * acc;
  }
  double prev_tau = 0.0;
  acc = 0.0;
  for (std::size_t k = n_half - 1; k > 0 && level[k] > 0.5; --k) {
    const double tau = std::sqrt(1.0 - level[k]);
    acc += detail::gk_panel([&](double x) { return I.upper(x); }, prev_tau, tau);
    prev_tau = tau;
    th[k] = 0.5 * alpha - root * acc;
  }
  for (std::size_t k = 0; k <= n_half; ++k) {
    const double s = level[k];
    gv[k] = I.gmax * s;
    const double one_minus = -std::expm1((1.0 - p) * std::log(std::max(s, 1e-300)));
    gd[k] = k == 0 ? 0.0 : std::sqrt(std::max(0.0, I.radicand(s, one_minus)) / (1.0 + epsilon));
  }
  gd[n_half] = 0.0;

  HomogeneousProfile prof;
  prof.p = p;
  prof.epsilon = epsilon;
  prof.beta = beta;
  prof.alpha = alpha;
  prof.provenance = Provenance::Quadrature;
  if (p == 0.0) {
    prof.a_eps = cone_amplitude(epsilon);
    prof.omega_eps = cone_frequency(epsilon);
  }
  for (std::size_t k = 0; k <= n_half; ++k) {
    prof.theta.push_back(th[k]);
    prof.g.push_back(gv[k]);
    prof.gprime.push_back(gd[k]);
  }
  for (std::size_t k = n_half; k-- > 0;) {
    prof.theta.push_back(alpha - th[k]);
    prof.g.push_back(gv[k]);
    prof.gprime.push_back(-gd[k]);
  }
  prof.g.back() = 0.0;
  prof.theta.back() = alpha;
  return prof;
}

/// sup over the arc interior of |beta (beta + eps) g + (1 + eps) g'' - g^p|.
/// Closed-form profiles use the exact g''; sampled profiles use three-point
/// differences of g, skipping a layer of relative width `margin` at each end
/// where the lift-off behaviour g ~ theta^beta makes differences inaccurate.
inline double angular_ode_residual(const HomogeneousProfile& prof, double margin = 0.02) {
  const double K = prof.beta * (prof.beta + prof.epsilon);
  const double m = 1.0 + prof.epsilon;
  double sup = 0.0;
  const std::size_t n = prof.theta.size();
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double th = prof.theta[k];
    double g2;
    if (prof.provenance == Provenance::ClosedForm) {
      g2 = *prof.a_eps * *prof.omega_eps * *prof.omega_eps * std::cos(*prof.omega_eps * th);
    } else {
      if (th < margin * prof.alpha || th > (1.0 - margin) * prof.alpha) continue;
      const double hm = th - prof.theta[k - 1];
      const double hp = prof.theta[k + 1] - th;
      g2 = 2.0 * ((prof.g[k + 1] - prof.g[k]) / hp - (prof.g[k] - prof.g[k - 1]) / hm) / (hp + hm);
    }
    const double res = K * prof.g[k] + m * g2 - positive_power(prof.g[k], prof.p);
    sup = std::max(sup, std::abs(res));
  }
  return sup;
}

enum class ConeLabel { Acute, Obtuse, Flat };

inline std::string to_string(ConeLabel label) {
  switch (label) {
    case ConeLabel::Acute:
      return "acute";
    case ConeLabel::Obtuse:
      return "obtuse";
    case ConeLabel::Flat:
      return "flat";
  }
  return "unknown";
}

struct ConeAngles {
  double positivity_arc;
  double coincidence_cone;
  ConeLabel label;  // shape of the coincidence cone
};

/// Opening angles of the p = 0 homogeneous solution.
inline ConeAngles cone_angles(double epsilon) {
  const double arc = 2.0 * std::numbers::pi / cone_frequency(epsilon);
  const double cone = 2.0 * std::numbers::pi - arc;
  ConeLabel label = ConeLabel::Flat;
  if (cone < std::numbers::pi) label = ConeLabel::Acute;
  if (cone > std::numbers::pi) label = ConeLabel::Obtuse;
  return {arc, cone, label};
}

struct RigidityEntry {
  double epsilon;
  double omega;
  long nearest_integer;
  double distance;
  bool hit;
};

struct RigidityRoot {
  long k;          // omega_eps = k
  double epsilon;  // location of the root
};

struct RigidityReport {
  std::vector<RigidityEntry> entries;
  std::vector<double> hits;                   // grid points with omega_eps in Z
  std::vector<RigidityRoot> bracketed_roots;  // sign changes of omega - k between grid points
  std::vector<RigidityRoot> branch_roots;     // eps_k = (4 - k^2)/(k^2 - 2) inside the range
  bool strictly_decreasing = true;
  double hit_tolerance = 1e-12;

  std::optional<double> unique_hit() const {
    if (hits.size() == 1) return hits.front();
    return std::nullopt;
  }
};

/// Integer condition on omega_eps forced by a homogeneous solution with a
/// differentiable free boundary (arc alpha = k pi, k in {1, 2}), scanned
/// over an epsilon grid.
inline RigidityReport rigidity_scan(const std::vector<double>& epsilon_grid,
                                    double hit_tolerance = 1e-12) {
  RigidityReport rep;
  rep.hit_tolerance = hit_tolerance;
  for (double eps : epsilon_grid) {
    if (!(eps > -1.0) || !std::isfinite(eps)) {
      throw ParameterRangeError("rigidity scan needs epsilon > -1");
    }
    const double w = cone_frequency(eps);
    const long k = std::lround(w);
    const double d = std::abs(w - static_cast<double>(k));
    const bool hit = d <= hit_tolerance;
    rep.entries.push_back({eps, w, k, d, hit});
    if (hit) rep.hits.push_back(eps);
  }
  for (std::size_t i = 1; i < rep.entries.size(); ++i) {
    const auto& a = rep.entries[i - 1];
    const auto& b = rep.entries[i];
    if (b.epsilon > a.epsilon && !(b.omega < a.omega)) rep.strictly_decreasing = false;
    const long klo = static_cast<long>(std::ceil(std::min(a.omega, b.omega)));
    const long khi = static_cast<long>(std::floor(std::max(a.omega, b.omega)));
    for (long k = klo; k <= khi; ++k) {
      if (a.hit || b.hit) continue;
      double lo = a.epsilon;
      double hi = b.epsilon;
      const double sign_lo = cone_frequency(lo) - static_cast<double>(k);
      for (int it = 0; it < 200 && std::abs(hi - lo) > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double f = cone_frequency(mid) - static_cast<double>(k);
        ((f > 0.0) == (sign_lo > 0.0) ? lo : hi) = mid;
      }
      rep.bracketed_roots.push_back({k, 0.5 * (lo + hi)});
    }
  }
  if (!rep.entries.empty()) {
    const auto [lo_it, hi_it] = std::minmax_element(
        epsilon_grid.begin(), epsilon_grid.end());
    // omega_eps decreases from +inf (eps -> -1) to sqrt(2) (eps -> inf), so
    // omega = k has a root only for k >= 2.
    for (long k = 2; k < 100000; ++k) {
      const double kk = static_cast<double>(k * k);
      const double eps_k = (4.0 - kk) / (kk - 2.0);
      if (eps_k < *lo_it) break;
      if (eps_k <= *hi_it) rep.branch_roots.push_back({k, eps_k});
    }
  }
  return rep;
}

}  // namespace discfb
