#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "discfb/errors.hpp"
#include "discfb/grid.hpp"

namespace discfb {

namespace detail {
// Radii are compared with a relative slack so that nominally aligned nodes
// (r = 2^-k on a grid with step ln 2 / m) are not lost to rounding.
constexpr double kRadiusSlack = 1e-10;

inline bool inside(double r, double bound) { return r <= bound * (1.0 + kRadiusSlack); }

inline void require_v(const PolarField& field, const char* what) {
  if (field.meta().quantity != Quantity::V) throw ParameterRangeError(std::string(what) + " expects a v-field");
}
}  // namespace detail

/// Blow-up rescaling about the origin: v_r(x) = v(r x) / r^beta, restricted
/// to the nodes of the source grid inside B_r. Node radii are divided by r, so
/// the result is exact (no interpolation) on either grid type.
inline PolarField rescale(const PolarField& field, double r, double beta) {
  detail::require_v(field, "rescale");
  const PolarGrid& g = field.grid();
  if (!(r > g.r_min() && detail::inside(r, 1.0))) {
    throw GridError("rescaling radius outside the resolvable window (r_min, 1]");
  }
  std::size_t keep = 0;
  while (keep < g.n_r() && detail::inside(g.r(keep), r)) ++keep;
  if (keep < 3) throw GridError("rescaling radius leaves fewer than 3 radial rows");

  std::vector<double> primary(keep);
  const double log_r = std::log(r);
  for (std::size_t i = 0; i < keep; ++i) {
    primary[i] = g.logarithmic() ? g.t(i) + log_r : g.r(i) / r;
  }
  PolarGrid out = PolarGrid::from_primary(g.spacing(), std::move(primary), g.n_theta());
  const std::size_t nt = g.n_theta();
  const double scale = std::pow(r, -beta);
  std::vector<double> values(keep * nt);
  for (std::size_t k = 0; k < values.size(); ++k) values[k] = field.values()[k] * scale;
  FieldMeta meta = field.meta();
  meta.beta = beta;
  meta.first_valid_row = std::min(meta.first_valid_row, keep - 1);
  meta.last_valid_row = std::min(meta.last_valid_row, keep - 1);
  return PolarField(std::move(out), std::move(values), std::move(meta));
}

struct DyadicReport {
  std::vector<int> k_values;
  std::vector<double> S_values;  // S(k) = max of v over nodes with r <= 2^-k
  double beta = 2.0;
  double M = 0.0;  // sup of v over the whole field (= S(0) when r_max = 1)
  double C = 1.0;  // smallest C >= 1 with S(k+1) <= max{C M 2^{-beta k}, S(k)/2}
  std::optional<double> fitted_beta;
  std::pair<int, int> fit_window{1, 0};
  bool degenerate = false;  // S(k) 2^{beta k} dropped below threshold * S(0)
  std::optional<int> degenerate_at;
  double degeneracy_threshold = 1e-6;
};

/// Least-squares slope of log2 S(k) against -k over k in [k_lo, k_hi], using
/// the levels with S(k) above the floor; at least 4 are required.
inline double growth_exponent(const DyadicReport& report, int k_lo, int k_hi, double floor = 1e-12) {
  double sx = 0.0;
  double sy = 0.0;
  double sxx = 0.0;
  double sxy = 0.0;
  int n = 0;
  for (std::size_t idx = 0; idx < report.k_values.size(); ++idx) {
    const int k = report.k_values[idx];
    if (k < k_lo || k > k_hi || !(report.S_values[idx] > floor)) continue;
    const double x = -static_cast<double>(k);
    const double y = std::log2(report.S_values[idx]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 4) throw DegenerateWindowError("fewer than 4 dyadic levels above the floor in the fit window");
  const double nn = static_cast<double>(n);
  return (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
}

inline double growth_exponent(const DyadicReport& report) {
  return growth_exponent(report, report.fit_window.first, report.fit_window.second);
}

/// Dyadic suprema S(0..k_max) of a v-field about the origin, the empirical
/// constant of the dyadic decay estimate, a growth fit over [1, k_max] and a
/// degeneracy flag.
inline DyadicReport dyadic_sup(const PolarField& field, int k_max, double degeneracy_threshold = 1e-6) {
  detail::require_v(field, "dyadic_sup");
  const PolarGrid& g = field.grid();
  if (k_max < 1) throw ParameterRangeError("k_max must be at least 1");
  if (!detail::inside(g.r_min(), std::ldexp(1.0, -k_max))) {
    throw GridError("grid does not resolve r = 2^-k_max");
  }
  DyadicReport rep;
  rep.beta = field.require_beta();
  rep.degeneracy_threshold = degeneracy_threshold;
  const std::size_t nt = g.n_theta();
  std::vector<double> row_max(g.n_r(), 0.0);
  for (std::size_t i = 0; i < g.n_r(); ++i) {
    for (std::size_t j = 0; j < nt; ++j) row_max[i] = std::max(row_max[i], field(i, j));
  }
  rep.M = *std::max_element(row_max.begin(), row_max.end());
  for (int k = 0; k <= k_max; ++k) {
    const double bound = std::ldexp(1.0, -k);
    double s = 0.0;
    for (std::size_t i = 0; i < g.n_r() && detail::inside(g.r(i), bound); ++i) s = std::max(s, row_max[i]);
    rep.k_values.push_back(k);
    rep.S_values.push_back(s);
  }
  for (int k = 0; k < k_max; ++k) {
    const double next = rep.S_values[static_cast<std::size_t>(k + 1)];
    const double half = 0.5 * rep.S_values[static_cast<std::size_t>(k)];
    if (next > half && rep.M > 0.0) {
      rep.C = std::max(rep.C, next * std::pow(2.0, rep.beta * k) / rep.M);
    }
  }
  const double s0 = rep.S_values.front();
  for (int k = 1; k <= k_max; ++k) {
    const double scaled = rep.S_values[static_cast<std::size_t>(k)] * std::pow(2.0, rep.beta * k);
    if (!(scaled >= degeneracy_threshold * s0) || s0 == 0.0) {
      rep.degenerate = true;
      rep.degenerate_at = k;
      break;
    }
  }
  rep.fit_window = {1, k_max};
  try {
    rep.fitted_beta = growth_exponent(rep);
  } catch (const DegenerateWindowError&) {
    rep.fitted_beta.reset();
  }
  return rep;
}

namespace detail {

/// d w / d t at every node of one ray (second order; one-sided at the ends),
/// for possibly nonuniform t.
inline void dt_along_ray(const std::vector<double>& t, const std::vector<double>& w, std::vector<double>& out) {
  const std::size_t n = t.size();
  out.assign(n, 0.0);
  if (n < 2) return;
  if (n == 2) {
    out[0] = out[1] = (w[1] - w[0]) / (t[1] - t[0]);
    return;
  }
  auto three_point = [&](std::size_t a, std::size_t b, std::size_t c, double at) {
    // Derivative at `at` of the quadratic through (t_a, w_a), (t_b, w_b), (t_c, w_c).
    const double ta = t[a];
    const double tb = t[b];
    const double tc = t[c];
    return w[a] * (2.0 * at - tb - tc) / ((ta - tb) * (ta - tc)) +
           w[b] * (2.0 * at - ta - tc) / ((tb - ta) * (tb - tc)) +
           w[c] * (2.0 * at - ta - tb) / ((tc - ta) * (tc - tb));
  };
  out[0] = three_point(0, 1, 2, t[0]);
  for (std::size_t i = 1; i + 1 < n; ++i) out[i] = three_point(i - 1, i, i + 1, t[i]);
  out[n - 1] = three_point(n - 3, n - 2, n - 1, t[n - 1]);
}

/// Q_i = integral over theta of (d_t w)^2 at every radial node, w = v / r^beta.
inline std::vector<double> ring_integrand(const PolarField& field, double beta) {
  const PolarGrid& g = field.grid();
  const std::size_t nr = g.n_r();
  const std::size_t nt = g.n_theta();
  std::vector<double> t(nr);
  for (std::size_t i = 0; i < nr; ++i) t[i] = g.t(i);
  std::vector<double> q(nr, 0.0);
  std::vector<double> w(nr);
  std::vector<double> dw;
  for (std::size_t j = 0; j < nt; ++j) {
    for (std::size_t i = 0; i < nr; ++i) w[i] = field(i, j) / std::pow(g.r(i), beta);
    dt_along_ray(t, w, dw);
    for (std::size_t i = 0; i < nr; ++i) q[i] += dw[i] * dw[i] * g.dtheta();
  }
  return q;
}

}  // namespace detail

/// L2 norm over the annulus r_lo <= r <= r_hi of beta v / r^beta - v_r / r^(beta-1)
/// with respect to dx / |x|^2, i.e. sqrt of the integral of (d_t w)^2 dt dtheta.
/// The window is restricted to the nodes inside it.
inline double homogeneity_deviation(const PolarField& field, double beta, double r_lo, double r_hi) {
  detail::require_v(field, "homogeneity_deviation");
  if (!(r_lo > 0.0 && r_lo < r_hi)) throw ParameterRangeError("deviation window must satisfy 0 < r_lo < r_hi");
  const PolarGrid& g = field.grid();
  const std::vector<double> q = detail::ring_integrand(field, beta);
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i + 1 < g.n_r(); ++i) {
    const bool a = g.r(i) >= r_lo * (1.0 - detail::kRadiusSlack) && detail::inside(g.r(i), r_hi);
    const bool b = g.r(i + 1) >= r_lo * (1.0 - detail::kRadiusSlack) && detail::inside(g.r(i + 1), r_hi);
    if (a) ++used;
    if (a && b) total += 0.5 * (q[i] + q[i + 1]) * (g.t(i) - g.t(i + 1));
  }
  if (used < 2) throw GridError("deviation window holds fewer than 2 radial rows");
  return std::sqrt(total);
}

struct BlowupStep {
  int k = 0;
  double r = 0.0;
  double deviation = 0.0;       // homogeneity deviation of v_r on the window
  double profile_change = 0.0;  // sup |w(r_k, .) - w(r_{k-1}, .)|, 0 for the first step
};

struct BlowupReport {
  std::vector<BlowupStep> steps;
  std::vector<double> limit_profile;  // w(r, theta) at the deepest step
  bool converged = false;             // last profile change below tolerance
  double tolerance = 1e-3;
};

/// Blow-up sequence along r_k = 2^-k: the homogeneity deviation of each
/// rescaling over rho in [window_lo, 1], and the angular profile w = v / r^beta
/// at the outer edge of each rescaled ball.
inline BlowupReport blowup_sequence(const PolarField& field, double beta, const std::vector<int>& k_values,
                                    double window_lo = 0.25, double tolerance = 1e-3) {
  BlowupReport rep;
  rep.tolerance = tolerance;
  std::vector<double> previous;
  for (int k : k_values) {
    const double r = std::ldexp(1.0, -k);
    const PolarField vr = rescale(field, r, beta);
    const PolarGrid& g = vr.grid();
    BlowupStep step;
    step.k = k;
    step.r = r;
    step.deviation = homogeneity_deviation(vr, beta, window_lo, 1.0);
    const std::size_t outer = g.n_r() - 1;
    const double s = std::pow(g.r(outer), -beta);
    std::vector<double> profile(g.n_theta());
    for (std::size_t j = 0; j < g.n_theta(); ++j) profile[j] = vr(outer, j) * s;
    if (!previous.empty()) {
      for (std::size_t j = 0; j < profile.size(); ++j) {
        step.profile_change = std::max(step.profile_change, std::abs(profile[j] - previous[j]));
      }
    }
    previous = profile;
    rep.steps.push_back(step);
  }
  rep.limit_profile = previous;
  rep.converged = rep.steps.size() >= 2 && rep.steps.back().profile_change < tolerance;
  return rep;
}

}  // namespace discfb
