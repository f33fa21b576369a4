#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "discfb/errors.hpp"

namespace discfb {

enum class RadialSpacing {
  Uniform,      // uniform in r
  Logarithmic,  // uniform in t = -ln r
};

/// Structured polar grid. Radii are stored in increasing order; the angular
/// direction is a uniform periodic partition of [0, 2 pi).
///
/// The primary radial coordinate is r for uniform grids and t = -ln r for
/// logarithmic grids; the other one is derived from it, so a grid rebuilt
/// from its primary coordinates is bitwise identical.
class PolarGrid {
 public:
  static constexpr std::size_t kMinTheta = 8;

  /// n_r nodes uniform in r on [r_min, 1].
  static PolarGrid r_uniform(std::size_t n_r, std::size_t n_theta, double r_min) {
    check_counts(n_r, n_theta);
    if (!(r_min > 0.0 && r_min < 1.0)) throw GridError("r_min must lie in (0, 1)");
    const double dr = (1.0 - r_min) / static_cast<double>(n_r - 1);
    std::vector<double> r(n_r);
    for (std::size_t i = 0; i < n_r; ++i) r[i] = r_min + dr * static_cast<double>(i);
    r.back() = 1.0;
    return from_primary(RadialSpacing::Uniform, std::move(r), n_theta);
  }

  /// n_r nodes uniform in t on [0, -ln r_min] (outermost node at r = 1).
  static PolarGrid log_polar(std::size_t n_r, std::size_t n_theta, double r_min) {
    check_counts(n_r, n_theta);
    if (!(r_min > 0.0 && r_min < 1.0)) throw GridError("r_min must lie in (0, 1)");
    const double t_max = -std::log(r_min);
    return log_polar_t(n_r, n_theta, 0.0, t_max / static_cast<double>(n_r - 1));
  }

  /// Logarithmic grid with nodes t_k = t_outer + k dt, k = 0..n_r-1.
  static PolarGrid log_polar_t(std::size_t n_r, std::size_t n_theta, double t_outer, double dt) {
    check_counts(n_r, n_theta);
    if (!(dt > 0.0)) throw GridError("dt must be positive");
    std::vector<double> t(n_r);
    for (std::size_t i = 0; i < n_r; ++i) {
      const std::size_t k = n_r - 1 - i;
      t[i] = t_outer + dt * static_cast<double>(k);
    }
    return from_primary(RadialSpacing::Logarithmic, std::move(t), n_theta);
  }

  /// Rebuilds a grid from its primary radial coordinates (r for uniform
  /// grids, t for logarithmic ones), listed in order of increasing r.
  static PolarGrid from_primary(RadialSpacing spacing, std::vector<double> primary,
                                std::size_t n_theta) {
    check_counts(primary.size(), n_theta);
    PolarGrid g;
    g.spacing_ = spacing;
    g.n_theta_ = n_theta;
    g.dtheta_ = 2.0 * std::numbers::pi / static_cast<double>(n_theta);
    g.theta_.resize(n_theta);
    for (std::size_t j = 0; j < n_theta; ++j) g.theta_[j] = g.dtheta_ * static_cast<double>(j);
    const std::size_t n_r = primary.size();
    g.r_.resize(n_r);
    g.t_.resize(n_r);
    if (spacing == RadialSpacing::Uniform) {
      g.r_ = std::move(primary);
      for (std::size_t i = 0; i < n_r; ++i) g.t_[i] = -std::log(g.r_[i]);
    } else {
      g.t_ = std::move(primary);
      for (std::size_t i = 0; i < n_r; ++i) g.r_[i] = std::exp(-g.t_[i]);
    }
    for (std::size_t i = 0; i < n_r; ++i) {
      if (!(g.r_[i] > 0.0) || !std::isfinite(g.r_[i])) throw GridError("radii must be positive");
      if (i > 0 && !(g.r_[i] > g.r_[i - 1])) throw GridError("radii must increase strictly");
    }
    if (spacing == RadialSpacing::Uniform) {
      g.step_ = (g.r_.back() - g.r_.front()) / static_cast<double>(n_r - 1);
    } else {
      g.step_ = (g.t_.front() - g.t_.back()) / static_cast<double>(n_r - 1);
    }
    const auto& coord = g.primary();
    for (std::size_t i = 1; i < n_r; ++i) {
      const double d = std::abs(coord[i] - coord[i - 1]);
      if (std::abs(d - g.step_) > 1e-9 * std::max(1.0, g.step_)) {
        throw GridError("radial coordinates are not uniformly spaced");
      }
    }
    return g;
  }

  RadialSpacing spacing() const noexcept { return spacing_; }
  bool logarithmic() const noexcept { return spacing_ == RadialSpacing::Logarithmic; }
  std::size_t n_r() const noexcept { return r_.size(); }
  std::size_t n_theta() const noexcept { return n_theta_; }
  std::size_t size() const noexcept { return r_.size() * n_theta_; }

  const std::vector<double>& r() const noexcept { return r_; }
  const std::vector<double>& t() const noexcept { return t_; }
  const std::vector<double>& theta() const noexcept { return theta_; }
  const std::vector<double>& primary() const noexcept {
    return spacing_ == RadialSpacing::Uniform ? r_ : t_;
  }
  double r(std::size_t i) const { return r_[i]; }
  double t(std::size_t i) const { return t_[i]; }
  double theta(std::size_t j) const { return theta_[j]; }
  double r_min() const { return r_.front(); }
  double r_max() const { return r_.back(); }

  /// dr for uniform grids, dt for logarithmic grids.
  double radial_step() const noexcept { return step_; }
  double dtheta() const noexcept { return dtheta_; }
  /// Mesh parameter h = max(radial step, dtheta).
  double h() const noexcept { return std::max(step_, dtheta_); }

  friend bool operator==(const PolarGrid&, const PolarGrid&) = default;

 private:
  PolarGrid() = default;

  static void check_counts(std::size_t n_r, std::size_t n_theta) {
    if (n_r < 3) throw GridError("grid needs at least 3 radial nodes");
    if (n_theta < kMinTheta) throw GridError("grid needs at least 8 angular nodes");
  }

  RadialSpacing spacing_ = RadialSpacing::Uniform;
  std::vector<double> r_;
  std::vector<double> t_;
  std::vector<double> theta_;
  std::size_t n_theta_ = 0;
  double step_ = 0.0;
  double dtheta_ = 0.0;
};

/// Growth exponent beta = 2 / (1 - p).
inline double beta_of(double p) {
  if (!(p >= 0.0 && p < 1.0)) throw ParameterRangeError("p must lie in [0, 1)");
  return 2.0 / (1.0 - p);
}

enum class Quantity {
  V,  // v(r, theta)
  W,  // w(t, theta) = v / r^beta
};

struct FieldMeta {
  std::optional<double> p;
  std::optional<double> epsilon;
  std::optional<double> beta;
  Quantity quantity = Quantity::V;
  std::string description;
  // Rows [first_valid_row, last_valid_row] carry meaningful values; operator
  // outputs leave boundary rows at zero and mark them invalid here.
  std::size_t first_valid_row = 0;
  std::size_t last_valid_row = static_cast<std::size_t>(-1);

  friend bool operator==(const FieldMeta&, const FieldMeta&) = default;
};

/// Scalar samples on a polar grid, stored row-major (radius-major).
class PolarField {
 public:
  PolarField(PolarGrid grid, std::vector<double> values, FieldMeta meta = {})
      : grid_(std::move(grid)), values_(std::move(values)), meta_(std::move(meta)) {
    if (values_.size() != grid_.size()) throw GridError("field size does not match its grid");
    if (meta_.last_valid_row == static_cast<std::size_t>(-1) ||
        meta_.last_valid_row >= grid_.n_r()) {
      meta_.last_valid_row = grid_.n_r() - 1;
    }
    for (double v : values_) {
      if (!std::isfinite(v)) throw GridError("field values must be finite");
    }
    if (meta_.p && meta_.beta && std::abs(*meta_.beta - beta_of(*meta_.p)) > 1e-12 * *meta_.beta) {
      throw ParameterRangeError("field metadata: beta must equal 2/(1-p)");
    }
  }

  /// Samples f(r, theta) at every node.
  template <typename F>
  static PolarField sample(const PolarGrid& grid, F&& f, FieldMeta meta = {}) {
    std::vector<double> values(grid.size());
    for (std::size_t i = 0; i < grid.n_r(); ++i) {
      for (std::size_t j = 0; j < grid.n_theta(); ++j) {
        values[i * grid.n_theta() + j] = f(grid.r(i), grid.theta(j));
      }
    }
    return PolarField(grid, std::move(values), std::move(meta));
  }

  const PolarGrid& grid() const noexcept { return grid_; }
  const std::vector<double>& values() const noexcept { return values_; }
  const FieldMeta& meta() const noexcept { return meta_; }
  FieldMeta& meta() noexcept { return meta_; }

  double operator()(std::size_t i, std::size_t j) const { return values_[i * grid_.n_theta() + j]; }
  std::size_t index(std::size_t i, std::size_t j) const { return i * grid_.n_theta() + j; }

  bool row_valid(std::size_t i) const {
    return i >= meta_.first_valid_row && i <= meta_.last_valid_row;
  }

  double require_beta() const {
    if (meta_.beta) return *meta_.beta;
    if (meta_.p) return beta_of(*meta_.p);
    throw ParameterRangeError("field metadata does not record beta");
  }

  friend bool operator==(const PolarField&, const PolarField&) = default;

 private:
  PolarGrid grid_;
  std::vector<double> values_;
  FieldMeta meta_;
};

}  // namespace discfb
