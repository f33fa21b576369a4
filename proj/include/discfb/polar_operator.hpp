#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "discfb/coefficients.hpp"
#include "discfb/grid.hpp"
#include "discfb/interpolation.hpp"
#include "discfb/parallel.hpp"

namespace discfb {

/// s^p with the convention s^0 = 1 on {s > 0}; zero for s <= 0.
inline double positive_power(double s, double p) {
  if (!(s > 0.0)) return 0.0;
  return p == 0.0 ? 1.0 : std::pow(s, p);
}

/// Five-point stencil of L_h at one radial row, acting on v:
///   (L_h v)_{i,j} = west v_{i-1,j} + east v_{i+1,j}
///                 + angular (v_{i,j-1} + v_{i,j+1}) + center v_{i,j}.
struct StencilRow {
  double west = 0.0;
  double east = 0.0;
  double angular = 0.0;
  double center = 0.0;
  bool upwinded = false;
};

/// Second-order centered stencil of L v = a v_rr + b v_r/r + c v_thth/r^2 at
/// interior row i. On logarithmic grids the radial part is differenced in
/// s = ln r, where r^2 L v = a v_ss + (b - a) v_s + c v_thth.
///
/// When a centered first-derivative weight would make a neighbour
/// coefficient negative, that row falls back to a one-sided upwind
/// difference so that -L_h stays an M-matrix for every eps with 1 + eps > 0.
inline StencilRow stencil_row(const PolarGrid& grid, const PolarCoefficients& k, std::size_t i,
                              std::optional<double> fitted_beta = std::nullopt) {
  const double h = grid.radial_step();
  const double ri = grid.r(i);
  const double dth2 = grid.dtheta() * grid.dtheta();
  double second;  // coefficient of the radial second difference
  double first;   // coefficient of the radial first derivative
  double scale;   // overall row factor
  if (grid.logarithmic()) {
    second = k.a;
    first = k.b - k.a;
    scale = 1.0 / (ri * ri);
  } else {
    second = k.a;
    first = k.b / ri;
    scale = 1.0;
  }
  StencilRow row;
  double d2 = second / (h * h);
  double d1 = first / (2.0 * h);
  if (fitted_beta && grid.logarithmic() && *fitted_beta > 0.0) {
    const double x = *fitted_beta * h;
    d2 *= x * x / (2.0 * (std::cosh(x) - 1.0));
    d1 *= x / std::sinh(x);
  }
  if (d2 - std::abs(d1) >= 0.0) {
    row.west = d2 - d1;
    row.east = d2 + d1;
    row.center = -2.0 * d2;
  } else if (first > 0.0) {
    row.west = d2;
    row.east = d2 + first / h;
    row.center = -2.0 * d2 - first / h;
    row.upwinded = true;
  } else {
    row.west = d2 - first / h;
    row.east = d2;
    row.center = -2.0 * d2 + first / h;
    row.upwinded = true;
  }
  const double ang = grid.logarithmic() ? k.c / dth2 : k.c / (ri * ri * dth2);
  row.angular = ang;
  row.center -= 2.0 * ang;
  row.west *= scale;
  row.east *= scale;
  row.angular *= scale;
  row.center *= scale;
  return row;
}

namespace detail {
inline void check_resolvable(const PolarGrid& grid) {
  if (grid.n_r() < 3 || grid.n_theta() < PolarGrid::kMinTheta) {
    throw GridError("grid too coarse for the five-point polar stencil");
  }
}
}  // namespace detail

/// L_h v at interior rows; the first and last radial rows are set to zero
/// and flagged invalid in the result's metadata.
inline PolarField apply_polar(const PolarField& field, const CoefficientModel& model) {
  const PolarGrid& grid = field.grid();
  detail::check_resolvable(grid);
  const PolarCoefficients k = polar_coefficients(model);
  const std::size_t nr = grid.n_r();
  const std::size_t nt = grid.n_theta();
  std::vector<double> out(grid.size(), 0.0);
  const auto& v = field.values();
  parallel_for(1, nr - 1, [&](std::size_t i) {
    const StencilRow s = stencil_row(grid, k, i, field.meta().beta);
    for (std::size_t j = 0; j < nt; ++j) {
      const std::size_t jm = (j + nt - 1) % nt;
      const std::size_t jp = (j + 1) % nt;
      out[i * nt + j] = s.west * v[(i - 1) * nt + j] + s.east * v[(i + 1) * nt + j] +
                        s.angular * (v[i * nt + jm] + v[i * nt + jp]) + s.center * v[i * nt + j];
    }
  });
  FieldMeta meta = field.meta();
  meta.epsilon = model.epsilon();
  meta.description = "L_h applied to " + (meta.description.empty() ? "field" : meta.description);
  meta.first_valid_row = 1;
  meta.last_valid_row = nr - 2;
  return PolarField(grid, std::move(out), std::move(meta));
}

/// w(t, theta) = v(r, theta) / r^beta on the (t, theta) cylinder. Logarithmic
/// grids transform pointwise; uniform-in-r grids are resampled onto the
/// logarithmic grid with the same node count and radial range, interpolating
/// w along each ray with a monotone cubic in ln r.
inline PolarField to_logpolar(const PolarField& field) {
  if (field.meta().quantity != Quantity::V) throw ParameterRangeError("to_logpolar expects a v-field");
  const double beta = field.require_beta();
  const PolarGrid& src = field.grid();
  const std::size_t nr = src.n_r();
  const std::size_t nt = src.n_theta();
  FieldMeta meta = field.meta();
  meta.beta = beta;
  meta.quantity = Quantity::W;

  std::vector<double> w(src.size());
  for (std::size_t i = 0; i < nr; ++i) {
    const double scale = std::pow(src.r(i), -beta);
    for (std::size_t j = 0; j < nt; ++j) w[i * nt + j] = field(i, j) * scale;
  }
  if (src.logarithmic()) return PolarField(src, std::move(w), std::move(meta));

  if (nr < 4) throw GridError("resampling needs at least 4 radial nodes");
  PolarGrid dst = PolarGrid::log_polar_t(nr, nt, -std::log(src.r_max()),
                                         std::log(src.r_max() / src.r_min()) /
                                             static_cast<double>(nr - 1));
  std::vector<double> out(dst.size());
  std::vector<double> log_r(nr);
  for (std::size_t i = 0; i < nr; ++i) log_r[i] = std::log(src.r(i));
  for (std::size_t j = 0; j < nt; ++j) {
    std::vector<double> ray(nr);
    for (std::size_t i = 0; i < nr; ++i) ray[i] = w[i * nt + j];
    MonotoneCubic interp(log_r, std::move(ray));
    for (std::size_t i = 0; i < nr; ++i) out[i * nt + j] = interp(-dst.t(i));
  }
  meta.first_valid_row = 0;
  meta.last_valid_row = nr - 1;
  return PolarField(std::move(dst), std::move(out), std::move(meta));
}

/// Coefficients of the cylinder operator
///   R(w) = tt w_tt - t1 w_t + th w_thth + zero w - w^p,
/// obtained from r^{2 - beta} (L v - v^p) with v = r^beta w, r = e^{-t}.
/// For the planar model: w_tt - (2 beta + eps) w_t + (1 + eps) w_thth
/// + beta (beta + eps) w - w^p.
struct CylinderCoefficients {
  double tt;
  double t1;
  double th;
  double zero;
};

inline CylinderCoefficients cylinder_coefficients(const CoefficientModel& model, double beta) {
  const PolarCoefficients k = polar_coefficients(model);
  const double A = k.a;
  const double B = k.b - k.a;
  return {A, 2.0 * beta * A + B, k.c, A * beta * beta + B * beta};
}

/// Residual of the cylinder equation on a logarithmic w-field, centered
/// differences in t and theta. Boundary rows are zero and flagged invalid.
inline PolarField w_residual(const PolarField& wfield, const CoefficientModel& model, double p) {
  const PolarGrid& grid = wfield.grid();
  detail::check_resolvable(grid);
  if (!grid.logarithmic()) throw GridError("w_residual needs a logarithmic grid");
  if (wfield.meta().quantity != Quantity::W) throw ParameterRangeError("w_residual expects a w-field");
  const double beta = beta_of(p);
  const CylinderCoefficients c = cylinder_coefficients(model, beta);
  const std::size_t nr = grid.n_r();
  const std::size_t nt = grid.n_theta();
  const double h = grid.radial_step();
  const double dth2 = grid.dtheta() * grid.dtheta();
  const auto& w = wfield.values();
  std::vector<double> out(grid.size(), 0.0);
  // Row i + 1 lies at smaller t (larger r): w_t = -(w_{i+1} - w_{i-1}) / (2h).
  parallel_for(1, nr - 1, [&](std::size_t i) {
    for (std::size_t j = 0; j < nt; ++j) {
      const std::size_t jm = (j + nt - 1) % nt;
      const std::size_t jp = (j + 1) % nt;
      const double wc = w[i * nt + j];
      const double wn = w[(i + 1) * nt + j];
      const double ws = w[(i - 1) * nt + j];
      const double w_tt = (wn - 2.0 * wc + ws) / (h * h);
      const double w_t = -(wn - ws) / (2.0 * h);
      const double w_thth = (w[i * nt + jm] - 2.0 * wc + w[i * nt + jp]) / dth2;
      out[i * nt + j] = c.tt * w_tt - c.t1 * w_t + c.th * w_thth + c.zero * wc -
                        positive_power(wc, p);
    }
  });
  FieldMeta meta = wfield.meta();
  meta.p = p;
  meta.beta = beta;
  meta.epsilon = model.epsilon();
  meta.description = "cylinder residual";
  meta.first_valid_row = 1;
  meta.last_valid_row = nr - 2;
  return PolarField(grid, std::move(out), std::move(meta));
}

}  // namespace discfb
