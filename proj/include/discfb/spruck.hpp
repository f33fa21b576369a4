#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "discfb/blowup.hpp"
#include "discfb/errors.hpp"
#include "discfb/grid.hpp"
#include "discfb/profiles.hpp"

namespace discfb {

struct Annulus {
  double r_outer = 0.0;
  double r_inner = 0.0;
  double contribution = 0.0;
  double running_total = 0.0;  // sum from r = 1/2 inward, this annulus included
};

struct MonitorReport {
  double total_functional = 0.0;
  std::vector<Annulus> annuli;  // ordered from r = 1/2 toward the origin
  std::optional<double> energy_residual_sup;
  // total / sup|v|^2: the functional scales quadratically with v, so this is
  // the size-free empirical constant of the integral bound.
  double bound_estimate = 0.0;
  double r_min = 0.0;
};

enum class SpruckVariables {
  LogPolar,  // integral of (d_t w)^2 dt dtheta
  Radial,    // (beta v / r^beta - v_r / r^(beta-1))^2 dr dtheta / r, differenced in r
};

namespace detail {

inline std::vector<double> ring_integrand_radial(const PolarField& field, double beta) {
  const PolarGrid& g = field.grid();
  const std::size_t nr = g.n_r();
  std::vector<double> r(nr);
  for (std::size_t i = 0; i < nr; ++i) r[i] = g.r(i);
  std::vector<double> q(nr, 0.0);
  std::vector<double> ray(nr);
  std::vector<double> dr;
  for (std::size_t j = 0; j < g.n_theta(); ++j) {
    for (std::size_t i = 0; i < nr; ++i) ray[i] = field(i, j);
    dt_along_ray(r, ray, dr);
    for (std::size_t i = 0; i < nr; ++i) {
      const double f = beta * ray[i] / std::pow(r[i], beta) - dr[i] / std::pow(r[i], beta - 1.0);
      q[i] += f * f / r[i] * g.dtheta();
    }
  }
  return q;
}

}  // namespace detail

/// The weighted homogeneity functional over B_{1/2} minus the core r < r_min,
/// by trapezoid quadrature in both variables. Annuli are the cells between
/// consecutive radial nodes; when 1/2 is not a node the outermost annulus
/// starts at 1/2 with the integrand interpolated linearly.
inline MonitorReport spruck_functional(const PolarField& field, double beta,
                                       SpruckVariables vars = SpruckVariables::LogPolar) {
  detail::require_v(field, "spruck_functional");
  const PolarGrid& g = field.grid();
  constexpr double kOuter = 0.5;
  if (!(g.r_min() < kOuter) || g.r_max() < kOuter * (1.0 - detail::kRadiusSlack) || g.n_r() < 3) {
    throw GridError("field does not cover r in [r_min, 1/2]");
  }
  const std::vector<double> q = vars == SpruckVariables::LogPolar ? detail::ring_integrand(field, beta)
                                                                  : detail::ring_integrand_radial(field, beta);
  // Integration variable: t for the log-polar form, r for the radial one.
  auto coord = [&](double r) { return vars == SpruckVariables::LogPolar ? -std::log(r) : r; };

  MonitorReport rep;
  rep.r_min = g.r_min();
  std::size_t top = 0;  // first node strictly inside r < 1/2 (up to slack)
  while (top < g.n_r() && detail::inside(g.r(top), kOuter)) ++top;
  // top - 1 is the last node with r <= 1/2.
  const std::size_t last = top - 1;
  double running = 0.0;
  auto push = [&](double r_out, double q_out, double r_in, double q_in) {
    const double c = 0.5 * (q_out + q_in) * std::abs(coord(r_in) - coord(r_out));
    running += c;
    rep.annuli.push_back({r_out, r_in, c, running});
  };
  if (g.r(last) < kOuter * (1.0 - detail::kRadiusSlack) && top < g.n_r()) {
    const double s = (coord(kOuter) - coord(g.r(last))) / (coord(g.r(top)) - coord(g.r(last)));
    push(kOuter, (1.0 - s) * q[last] + s * q[top], g.r(last), q[last]);
  }
  for (std::size_t i = last; i > 0; --i) push(g.r(i), q[i], g.r(i - 1), q[i - 1]);
  rep.total_functional = running;
  double vmax = 0.0;
  for (double v : field.values()) vmax = std::max(vmax, std::abs(v));
  rep.bound_estimate = vmax > 0.0 ? rep.total_functional / (vmax * vmax) : 0.0;
  return rep;
}

/// First integral of the angular equation with zero constant:
/// sup |(1+eps) g'^2 + beta (beta+eps) g^2 - 2/(p+1) g^(p+1)| over the samples.
inline double energy_identity_residual(const HomogeneousProfile& prof) {
  double worst = 0.0;
  const double e = prof.epsilon;
  const double b = prof.beta;
  for (std::size_t k = 0; k < prof.g.size(); ++k) {
    const double g = std::max(prof.g[k], 0.0);
    const double gp = prof.gprime[k];
    const double r = (1.0 + e) * gp * gp + b * (b + e) * g * g - 2.0 / (prof.p + 1.0) * std::pow(g, prof.p + 1.0);
    worst = std::max(worst, std::abs(r));
  }
  return worst;
}

}  // namespace discfb
