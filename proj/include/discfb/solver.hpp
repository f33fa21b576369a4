#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#if defined(DISCFB_HAVE_UMFPACK)
#include <Eigen/UmfPackSupport>
#else
#include <Eigen/SparseLU>
#endif

#include "discfb/coefficients.hpp"
#include "discfb/errors.hpp"
#include "discfb/grid.hpp"
#include "discfb/penalty.hpp"
#include "discfb/polar_operator.hpp"
#include "discfb/profiles.hpp"

namespace discfb {

struct GridSpec {
  RadialSpacing spacing = RadialSpacing::Logarithmic;
  std::size_t n_r = 128;
  std::size_t n_theta = 256;
  double r_min = 1e-3;

  PolarGrid build() const {
    return spacing == RadialSpacing::Logarithmic ? PolarGrid::log_polar(n_r, n_theta, r_min)
                                                 : PolarGrid::r_uniform(n_r, n_theta, r_min);
  }
};

enum class BoundaryKind {
  Zero,
  HomogeneousProfile,  // trace of the homogeneous profile for (p, eps)
  DiscreteProfile,     // the same profile corrected to the discrete angular equation
  HalfPlane,           // trace of c (x2^+)^beta, the one-dimensional solution for eps = 0
  Tabulated,           // periodic table theta -> g(theta)
};

/// Dirichlet data at r = 1: scale * g(theta - rotation).
struct BoundaryData {
  BoundaryKind kind = BoundaryKind::Zero;
  double scale = 1.0;
  double rotation = 0.0;
  std::vector<double> theta;  // Tabulated only: increasing, within [0, 2 pi)
  std::vector<double> g;
  double ode_step = 1e-4;  // HomogeneousProfile with p > 0
};

/// Coefficient of the one-dimensional solution c x2^beta of Delta v = v^p:
/// c = [beta (beta - 1)]^{-1/(1-p)}.
inline double half_plane_coefficient(double p) {
  const double beta = beta_of(p);
  return std::pow(beta * (beta - 1.0), -1.0 / (1.0 - p));
}

inline std::function<double(double)> make_trace(const BoundaryData& data, double p,
                                                const CoefficientModel& model) {
  std::function<double(double)> base;
  switch (data.kind) {
    case BoundaryKind::Zero:
      base = [](double) { return 0.0; };
      break;
    case BoundaryKind::HalfPlane: {
      const double c = half_plane_coefficient(p);
      const double beta = beta_of(p);
      base = [c, beta](double th) {
        const double s = std::sin(th);
        return s > 0.0 ? c * std::pow(s, beta) : 0.0;
      };
      break;
    }
    case BoundaryKind::HomogeneousProfile:
    case BoundaryKind::DiscreteProfile: {
      if (model.kind() == ModelKind::RadialND) {
        throw ConfigError("homogeneous profile data is defined for the planar and identity models");
      }
      auto prof = std::make_shared<HomogeneousProfile>(
          p == 0.0 ? closed_form_p0(model.epsilon())
                   : ode_integrate(p, model.epsilon(), data.ode_step));
      if (prof->alpha >= 2.0 * std::numbers::pi) {
        throw ConfigError("homogeneous profile arc exceeds the full circle");
      }
      base = [prof](double th) { return prof->value(th); };
      break;
    }
    case BoundaryKind::Tabulated: {
      if (data.theta.size() != data.g.size() || data.theta.size() < 2) {
        throw ConfigError("tabulated boundary data needs matching theta/g arrays (>= 2 entries)");
      }
      for (std::size_t k = 0; k < data.theta.size(); ++k) {
        if (k > 0 && !(data.theta[k] > data.theta[k - 1])) {
          throw ConfigError("tabulated theta values must increase");
        }
        if (data.theta[k] < 0.0 || data.theta[k] >= 2.0 * std::numbers::pi) {
          throw ConfigError("tabulated theta values must lie in [0, 2 pi)");
        }
        if (!(data.g[k] >= 0.0)) throw ConfigError("boundary data must be nonnegative");
      }
      auto th = std::make_shared<std::vector<double>>(data.theta);
      auto gv = std::make_shared<std::vector<double>>(data.g);
      base = [th, gv](double angle) {
        const double two_pi = 2.0 * std::numbers::pi;
        double u = std::fmod(angle, two_pi);
        if (u < 0.0) u += two_pi;
        const auto& x = *th;
        const auto& y = *gv;
        auto it = std::upper_bound(x.begin(), x.end(), u);
        std::size_t hi = static_cast<std::size_t>(it - x.begin());
        double x0;
        double x1;
        double y0;
        double y1;
        if (hi == 0 || hi == x.size()) {
          x0 = x.back() - (hi == 0 ? two_pi : 0.0);
          x1 = x.front() + (hi == 0 ? 0.0 : two_pi);
          y0 = y.back();
          y1 = y.front();
        } else {
          x0 = x[hi - 1];
          x1 = x[hi];
          y0 = y[hi - 1];
          y1 = y[hi];
        }
        const double s = (u - x0) / (x1 - x0);
        return (1.0 - s) * y0 + s * y1;
      };
      break;
    }
  }
  const double scale = data.scale;
  const double rot = data.rotation;
  return [base, scale, rot](double th) { return scale * base(th - rot); };
}

enum class InnerBoundary {
  Homogeneous,  // v(r_0) = (r_0 / r_1)^beta v(r_1)
  Zero,         // v(r_0) = 0
};

enum class FreeBoundaryMethod {
  RootExtrapolation,  // v^{1/beta} extrapolated to zero from the two nodes past the threshold crossing
  Threshold,          // linear interpolation of the crossing of v - threshold
};

struct SolverTolerances {
  double residual_tol = 1e-8;
  int max_iters = 200;  // per penalty stage
  double damping = 1.0;
};

struct SolveConfig {
  CoefficientModel model = CoefficientModel::planar(0.0);
  double p = 0.0;
  GridSpec grid;
  BoundaryData boundary;
  std::vector<double> penalty_schedule{1e-1, 1e-2, 1e-3, 1e-4};
  SolverTolerances tolerances;
  InnerBoundary inner = InnerBoundary::Homogeneous;
  double kappa = 1.0;
  FreeBoundaryMethod free_boundary_method = FreeBoundaryMethod::RootExtrapolation;

  void validate() const {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("p must lie in [0, 1)");
    polar_coefficients(model);  // planar models only
    if (!(grid.r_min > 0.0 && grid.r_min <= 0.05)) throw ConfigError("r_min must lie in (0, 0.05]");
    if (grid.n_r < 4) throw ConfigError("grid needs at least 4 radial nodes");
    if (grid.n_theta < PolarGrid::kMinTheta) throw ConfigError("grid needs at least 8 angular nodes");
    if (penalty_schedule.empty()) throw ConfigError("penalty schedule is empty");
    for (std::size_t k = 0; k < penalty_schedule.size(); ++k) {
      if (!(penalty_schedule[k] > 0.0)) throw ConfigError("penalty values must be positive");
      if (k > 0 && !(penalty_schedule[k] < penalty_schedule[k - 1])) {
        throw ConfigError("penalty schedule must decrease strictly");
      }
    }
    if (!(tolerances.residual_tol > 0.0)) throw ConfigError("residual_tol must be positive");
    if (tolerances.max_iters < 1) throw ConfigError("max_iters must be >= 1");
    if (!(tolerances.damping > 0.0 && tolerances.damping <= 1.0)) {
      throw ConfigError("damping must lie in (0, 1]");
    }
    if (!(kappa > 0.0)) throw ConfigError("kappa must be positive");
  }
};

/// The discrete operator as assembled for the solver, in v variables and in
/// M-matrix sign convention: interior rows hold -L_h, the inner row holds the
/// inner boundary condition and the outer row the Dirichlet identity.
struct AssembledOperator {
  PolarGrid grid = PolarGrid::log_polar(4, PolarGrid::kMinTheta, 0.5);
  PolarCoefficients coefficients;
  std::vector<StencilRow> rows;  // L_h stencil per radial row (interior rows only)
  Eigen::SparseMatrix<double, Eigen::RowMajor> matrix;
  double beta = 2.0;

  /// L_h v at interior rows (boundary rows zero).
  std::vector<double> apply(const std::vector<double>& v) const {
    const std::size_t nr = grid.n_r();
    const std::size_t nt = grid.n_theta();
    std::vector<double> out(grid.size(), 0.0);
    for (std::size_t i = 1; i + 1 < nr; ++i) {
      const StencilRow& s = rows[i];
      for (std::size_t j = 0; j < nt; ++j) {
        const std::size_t jm = (j + nt - 1) % nt;
        const std::size_t jp = (j + 1) % nt;
        out[i * nt + j] = s.west * v[(i - 1) * nt + j] + s.east * v[(i + 1) * nt + j] +
                          s.angular * (v[i * nt + jm] + v[i * nt + jp]) + s.center * v[i * nt + j];
      }
    }
    return out;
  }

  /// Off-diagonals <= 0, diagonal > 0, and nonnegative row sums.
  bool is_m_matrix() const {
    for (int k = 0; k < matrix.outerSize(); ++k) {
      double sum = 0.0;
      bool diag = false;
      for (decltype(matrix)::InnerIterator it(matrix, k); it; ++it) {
        sum += it.value();
        if (it.col() == it.row()) {
          if (!(it.value() > 0.0)) return false;
          diag = true;
        } else if (it.value() > 0.0) {
          return false;
        }
      }
      if (!diag || sum < -1e-9 * std::abs(matrix.coeff(k, k))) return false;
    }
    return true;
  }
};

inline AssembledOperator assemble_operator(const SolveConfig& config) {
  config.validate();
  AssembledOperator op;
  op.grid = config.grid.build();
  op.coefficients = polar_coefficients(config.model);
  op.beta = beta_of(config.p);
  const std::size_t nr = op.grid.n_r();
  const std::size_t nt = op.grid.n_theta();
  op.rows.assign(nr, StencilRow{});
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(op.grid.size() * 5);
  auto id = [nt](std::size_t i, std::size_t j) { return static_cast<int>(i * nt + j); };
  const double ratio = std::pow(op.grid.r(0) / op.grid.r(1), op.beta);
  for (std::size_t j = 0; j < nt; ++j) {
    trip.emplace_back(id(0, j), id(0, j), 1.0);
    if (config.inner == InnerBoundary::Homogeneous) trip.emplace_back(id(0, j), id(1, j), -ratio);
    trip.emplace_back(id(nr - 1, j), id(nr - 1, j), 1.0);
  }
  for (std::size_t i = 1; i + 1 < nr; ++i) {
    const StencilRow s = stencil_row(op.grid, op.coefficients, i, op.beta);
    op.rows[i] = s;
    for (std::size_t j = 0; j < nt; ++j) {
      trip.emplace_back(id(i, j), id(i - 1, j), -s.west);
      trip.emplace_back(id(i, j), id(i + 1, j), -s.east);
      trip.emplace_back(id(i, j), id(i, (j + nt - 1) % nt), -s.angular);
      trip.emplace_back(id(i, j), id(i, (j + 1) % nt), -s.angular);
      trip.emplace_back(id(i, j), id(i, j), -s.center);
    }
  }
  op.matrix.resize(static_cast<int>(op.grid.size()), static_cast<int>(op.grid.size()));
  op.matrix.setFromTriplets(trip.begin(), trip.end());
  return op;
}

struct StageRecord {
  double delta = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct PenalizedResult {
  PolarField field;  // v, unclamped
  StageRecord stage;
  std::vector<IterationRecord> log;
  std::vector<std::string> warnings;
};

namespace detail {

/// Penalized system in blow-up units. With v = r^beta w the interior rows
/// are r^{2-beta} (L_h v - phi_delta(v; r)) = (scaled L_h) w - phi_delta(w),
/// so that the smoothing scale delta is measured relative to the natural
/// size r^beta of a solution at radius r. Unknowns are w on rows 0..n_r-2;
/// the outer row is Dirichlet data (r = 1, so w = v there).
/// Row-constant solutions of the scaled system: with the exponentially fitted
/// radial stencil, w_ij = g_j solves every interior row iff
///   ang (g_{j-1} - 2 g_j + g_{j+1}) + zero g_j = phi(g_j)
/// on the periodic theta lattice. Newton from a nearby continuous profile,
/// with backtracking on the sup norm of the residual.
inline std::vector<double> discrete_homogeneous_trace(std::vector<double> g, double ang, double zero,
                                                      const PenaltyFamily& phi) {
  const auto n = static_cast<Eigen::Index>(g.size());
  auto residual = [&](const std::vector<double>& x) {
    Eigen::VectorXd f(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto k = static_cast<std::size_t>(j);
      const double west = x[(k + g.size() - 1) % g.size()];
      const double east = x[(k + 1) % g.size()];
      f(j) = ang * (west - 2.0 * x[k] + east) + zero * x[k] - phi(x[k]);
    }
    return f;
  };
  Eigen::VectorXd f = residual(g);
  double res = f.lpNorm<Eigen::Infinity>();
  const double tol = 1e-13 * std::max(1.0, ang);
  for (int it = 0; it < 100 && res > tol; ++it) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(3 * n));
    for (Eigen::Index j = 0; j < n; ++j) {
      trip.emplace_back(j, (j + n - 1) % n, ang);
      trip.emplace_back(j, (j + 1) % n, ang);
      trip.emplace_back(j, j, -2.0 * ang + zero - phi.derivative(g[static_cast<std::size_t>(j)]));
    }
    Eigen::SparseMatrix<double> jac(n, n);
    jac.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(jac);
    if (lu.info() != Eigen::Success) break;
    const Eigen::VectorXd step = lu.solve(-f);
    if (!step.allFinite()) break;
    double lambda = 1.0;
    bool improved = false;
    for (int k = 0; k < 40 && !improved; ++k, lambda *= 0.5) {
      std::vector<double> trial(g);
      for (Eigen::Index j = 0; j < n; ++j) trial[static_cast<std::size_t>(j)] += lambda * step(j);
      Eigen::VectorXd ft = residual(trial);
      const double rt = ft.lpNorm<Eigen::Infinity>();
      if (rt < res) {
        g = std::move(trial);
        f = std::move(ft);
        res = rt;
        improved = true;
      }
    }
    if (!improved) break;
  }
  if (!(res <= 1e-9 * std::max(1.0, ang))) {
    // Typically a resonant coincidence arc: its length is a multiple of the
    // half period of the linear part, and the lattice problem is singular.
    throw ConvergenceError("discrete homogeneous profile did not converge", 0, {});
  }
  // Not clamped: the lattice solution may dip slightly below zero off the
  // positivity arc, and clamping here would break exact homogeneity. The
  // solver clamps the whole field at the end, which commutes with scaling.
  return g;
}

class ScaledSystem {
 public:
  using Matrix = Eigen::SparseMatrix<double>;

  ScaledSystem(const SolveConfig& config, const AssembledOperator& op)
      : grid_(op.grid), p_(config.p), beta_(op.beta) {
    const std::size_t nr = grid_.n_r();
    const std::size_t nt = grid_.n_theta();
    n_ = (nr - 1) * nt;
    auto trace = make_trace(config.boundary, config.p, config.model);
    outer_.resize(nt);
    for (std::size_t j = 0; j < nt; ++j) {
      outer_[j] = trace(grid_.theta(j));
      if (!(outer_[j] >= 0.0) || !std::isfinite(outer_[j])) {
        throw ConfigError("boundary data must be finite and nonnegative");
      }
    }
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(n_ * 5);
    b_.setZero(static_cast<Eigen::Index>(n_));
    interior_.assign(n_, 0);
    weight_.assign(n_, 1.0);
    auto id = [nt](std::size_t i, std::size_t j) { return static_cast<int>(i * nt + j); };
    for (std::size_t j = 0; j < nt; ++j) {
      trip.emplace_back(id(0, j), id(0, j), -1.0);
      if (config.inner == InnerBoundary::Homogeneous) trip.emplace_back(id(0, j), id(1, j), 1.0);
    }
    for (std::size_t i = 1; i + 1 < nr; ++i) {
      const StencilRow& s = op.rows[i];
      const double ri = grid_.r(i);
      const double r2 = ri * ri;
      const double west = s.west * r2 * std::pow(grid_.r(i - 1) / ri, beta_);
      const double east = s.east * r2 * std::pow(grid_.r(i + 1) / ri, beta_);
      const double ang = s.angular * r2;
      const double cen = s.center * r2;
      for (std::size_t j = 0; j < nt; ++j) {
        interior_[i * nt + j] = 1;
        weight_[i * nt + j] = std::pow(ri, beta_ - 2.0);
        trip.emplace_back(id(i, j), id(i - 1, j), west);
        if (i + 1 == nr - 1) {
          b_(id(i, j)) += east * outer_[j];
        } else {
          trip.emplace_back(id(i, j), id(i + 1, j), east);
        }
        trip.emplace_back(id(i, j), id(i, (j + nt - 1) % nt), ang);
        trip.emplace_back(id(i, j), id(i, (j + 1) % nt), ang);
        trip.emplace_back(id(i, j), id(i, j), cen);
      }
    }
    if (config.boundary.kind == BoundaryKind::DiscreteProfile) {
      if (!grid_.logarithmic() || config.boundary.scale != 1.0) {
        throw ConfigError("discrete profile data needs a logarithmic grid and unit scale");
      }
      // Scaled interior rows are identical on a logarithmic grid; read the
      // angular weight and the row-constant (zero-order) weight off row 1.
      const StencilRow& s = op.rows[1];
      const double r1 = grid_.r(1);
      const double r2 = r1 * r1;
      const double ang = s.angular * r2;
      const double zero = (s.west * std::pow(grid_.r(0) / r1, beta_) +
                           s.east * std::pow(grid_.r(2) / r1, beta_) + s.center + 2.0 * s.angular) *
                          r2;
      outer_ = discrete_homogeneous_trace(std::move(outer_), ang, zero,
                                          PenaltyFamily(config.penalty_schedule.back(), config.p));
      // The outer data enters the last interior row through b_.
      for (std::size_t j = 0; j < nt; ++j) {
        const std::size_t i = nr - 2;
        const StencilRow& sl = op.rows[i];
        const double ri = grid_.r(i);
        b_(id(i, j)) = sl.east * ri * ri * std::pow(grid_.r(i + 1) / ri, beta_) * outer_[j];
      }
    }
    A_.resize(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    A_.setFromTriplets(trip.begin(), trip.end());
    A_.makeCompressed();
    diag_index_.resize(n_);
    for (int k = 0; k < A_.outerSize(); ++k) {
      for (Matrix::InnerIterator it(A_, k); it; ++it) {
        if (it.row() == it.col()) diag_index_[static_cast<std::size_t>(k)] = &it.valueRef() - A_.valuePtr();
      }
    }
    lu_.analyzePattern(A_);
  }

  std::size_t size() const { return n_; }
  const std::vector<double>& outer() const { return outer_; }

  Eigen::VectorXd residual(const Eigen::VectorXd& w, const PenaltyFamily& phi) const {
    Eigen::VectorXd f = A_ * w + b_;
    for (std::size_t k = 0; k < n_; ++k) {
      if (interior_[k]) f(static_cast<Eigen::Index>(k)) -= phi(w(static_cast<Eigen::Index>(k)));
    }
    return f;
  }

  /// Factorizes A - diag(d), with d applied on interior rows only (an empty
  /// d factorizes A itself).
  bool factorize(const std::vector<double>& d) {
    // The factorization may keep referring to the matrix, so it lives in J_.
    J_ = A_;
    if (!d.empty()) {
      double* vals = J_.valuePtr();
      for (std::size_t k = 0; k < n_; ++k) {
        if (interior_[k]) vals[diag_index_[k]] -= d[k];
      }
    }
    lu_.factorize(J_);
    return lu_.info() == Eigen::Success;
  }

  /// Solves with the current factorization.
  bool solve(const Eigen::VectorXd& rhs, Eigen::VectorXd& out) {
    out = lu_.solve(rhs);
    return lu_.info() == Eigen::Success && out.allFinite();
  }

  bool solve_shifted(const std::vector<double>& d, const Eigen::VectorXd& rhs, Eigen::VectorXd& out) {
    return factorize(d) && solve(rhs, out);
  }

  bool interior(std::size_t k) const { return interior_[k] != 0; }

  /// Interior rows hold r^{2 - beta} (L_h v - phi); the weight r^{beta - 2}
  /// converts them back to the residual of the v-equation.
  double weight(std::size_t k) const { return weight_[k]; }

  double residual_norm(const Eigen::VectorXd& f) const {
    double m = 0.0;
    for (std::size_t k = 0; k < n_; ++k) m = std::max(m, weight_[k] * std::abs(f(static_cast<Eigen::Index>(k))));
    return m;
  }

  /// The L_h-harmonic extension of the boundary data. Since phi >= 0 it is a
  /// supersolution of every penalized problem.
  Eigen::VectorXd harmonic_extension() {
    Eigen::VectorXd w;
    if (!solve_shifted({}, -b_, w)) throw Error("linear solve failed");
    return w;
  }

  PolarField to_field(const Eigen::VectorXd& w, const SolveConfig& config) const {
    const std::size_t nr = grid_.n_r();
    const std::size_t nt = grid_.n_theta();
    std::vector<double> v(grid_.size());
    for (std::size_t i = 0; i + 1 < nr; ++i) {
      const double s = std::pow(grid_.r(i), beta_);
      for (std::size_t j = 0; j < nt; ++j) {
        v[i * nt + j] = s * w(static_cast<Eigen::Index>(i * nt + j));
      }
    }
    const double s = std::pow(grid_.r(nr - 1), beta_);
    for (std::size_t j = 0; j < nt; ++j) v[(nr - 1) * nt + j] = s * outer_[j];
    FieldMeta meta;
    meta.p = config.p;
    meta.beta = beta_;
    meta.epsilon = config.model.epsilon();
    meta.quantity = Quantity::V;
    meta.description = "solution";
    return PolarField(grid_, std::move(v), std::move(meta));
  }

  Eigen::VectorXd from_field(const PolarField& field) const {
    Eigen::VectorXd w(static_cast<Eigen::Index>(n_));
    const std::size_t nt = grid_.n_theta();
    for (std::size_t i = 0; i + 1 < grid_.n_r(); ++i) {
      const double s = std::pow(grid_.r(i), -beta_);
      for (std::size_t j = 0; j < nt; ++j) w(static_cast<Eigen::Index>(i * nt + j)) = s * field(i, j);
    }
    return w;
  }

 private:
  PolarGrid grid_;
  double p_;
  double beta_;
  std::size_t n_ = 0;
  Matrix A_;
  Matrix J_;
  Eigen::VectorXd b_;
  std::vector<double> outer_;
  std::vector<char> interior_;
  std::vector<double> weight_;
  std::vector<std::ptrdiff_t> diag_index_;
#if defined(DISCFB_HAVE_UMFPACK)
  Eigen::UmfPackLU<Matrix> lu_;
#else
  Eigen::SparseLU<Matrix, Eigen::COLAMDOrdering<int>> lu_;
#endif
};

/// Upper bound for phi' on the whole line: delta^{p-1} (p + 15/8), where 15/8
/// is the peak slope of the smoothstep.
inline double penalty_slope_bound(const PenaltyFamily& phi) {
  return std::pow(phi.delta(), phi.p() - 1.0) * (phi.p() + 1.875);
}

/// Newton iteration for F(w) = A w + b - phi(w) = 0 started from a
/// supersolution (F <= 0). Each step solves
///   (A - diag(D)) w_next = phi(w) - D w - b
/// which, with -A an M-matrix (up to diagonal scaling) and D >= 0, moves every
/// node down. w_next is again a supersolution exactly when D_i is at least the
/// secant slope of phi over [w_next_i, w_i]; D starts at the Newton slope
/// phi'(w_i) and is raised only at nodes where that check fails. The iterates
/// therefore decrease monotonically to the solution, with Newton steps
/// wherever the linearization is reliable. If the linear solve fails the
/// step falls back to Picard with relaxation 0.5.
inline StageRecord newton_stage(ScaledSystem& sys, Eigen::VectorXd& w, const PenaltyFamily& phi,
                                const SolverTolerances& tol, int stage,
                                std::vector<IterationRecord>& log) {
  constexpr int kMaxRepairs = 40;
  constexpr std::size_t kMaxLowRank = 48;
  // Overshoot of the first secant repair; the exact secant is undone by the
  // neighbours' coupling too often.
  constexpr double kFirstHit = 1.5;
  const std::size_t n = sys.size();
  const double peak = penalty_slope_bound(phi);
  // Supersolution slack: residuals this small are treated as zero.
  const double slack = 0.1 * tol.residual_tol;
  StageRecord rec;
  rec.delta = phi.delta();
  Eigen::VectorXd f = sys.residual(w, phi);
  double res = sys.residual_norm(f);
  std::vector<double> d(n, 0.0);
  std::vector<int> hits(n, 0);
  for (int it = 1; it <= tol.max_iters && res > tol.residual_tol; ++it) {
    IterationRecord entry;
    entry.stage = stage;
    entry.iteration = it;
    entry.delta = phi.delta();
    for (std::size_t k = 0; k < n; ++k) {
      d[k] = sys.interior(k) ? phi.derivative(w(static_cast<Eigen::Index>(k))) : 0.0;
    }
    std::fill(hits.begin(), hits.end(), 0);
    bool accepted = false;
    int repairs = 0;
    Eigen::VectorXd dw;
    Eigen::VectorXd trial;
    Eigen::VectorXd ft;
    // Raised slopes are applied as a low-rank (Woodbury) correction of the
    // factorization of A - diag(d0); it is refreshed when the set grows large.
    std::vector<double> d0 = d;
    Eigen::VectorXd x0;
    std::vector<std::size_t> raised;
    std::vector<Eigen::VectorXd> columns;  // (A - diag(d0))^{-1} e_k for k in raised
    bool ok = sys.factorize(d0) && sys.solve(-f, x0);
    for (; ok && repairs <= kMaxRepairs; ++repairs) {
      if (raised.empty()) {
        dw = x0;
      } else {
        const auto m = static_cast<Eigen::Index>(raised.size());
        Eigen::MatrixXd cap(m, m);
        Eigen::VectorXd rhs(m);
        for (Eigen::Index a = 0; a < m; ++a) {
          const std::size_t ka = raised[static_cast<std::size_t>(a)];
          rhs(a) = x0(static_cast<Eigen::Index>(ka));
          for (Eigen::Index b = 0; b < m; ++b) {
            cap(a, b) = -columns[static_cast<std::size_t>(b)](static_cast<Eigen::Index>(ka));
          }
          cap(a, a) += 1.0 / (d[ka] - d0[ka]);
        }
        const Eigen::VectorXd y = cap.partialPivLu().solve(rhs);
        dw = x0;
        for (Eigen::Index b = 0; b < m; ++b) dw += y(b) * columns[static_cast<std::size_t>(b)];
      }
      trial = w + tol.damping * dw;
      ft = sys.residual(trial, phi);
      bool clean = true;
      for (std::size_t k = 0; k < n; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        if (!sys.interior(k) || sys.weight(k) * ft(kk) <= slack || d[k] >= peak) continue;
        clean = false;
        const double drop = w(kk) - trial(kk);
        const double secant = drop > 0.0 ? (phi(w(kk)) - phi(trial(kk))) / drop : peak;
        // First repair: the measured secant with some margin; repeat
        // offenders escalate geometrically.
        const double next = hits[k]++ == 0 ? secant * kFirstHit : std::max(1.1 * secant, 2.0 * d[k]);
        d[k] = repairs + 1 >= kMaxRepairs ? peak : std::min(peak, std::max(next, d[k] + 1e-12));
        if (std::find(raised.begin(), raised.end(), k) == raised.end()) {
          raised.push_back(k);
          columns.emplace_back();
        }
      }
      if (clean) {
        accepted = true;
        break;
      }
      if (raised.size() > kMaxLowRank) {
        d0 = d;
        raised.clear();
        columns.clear();
        ok = sys.factorize(d0) && sys.solve(-f, x0);
        continue;
      }
      for (std::size_t a = 0; a < raised.size() && ok; ++a) {
        if (columns[a].size() == 0) {
          Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
          e(static_cast<Eigen::Index>(raised[a])) = 1.0;
          ok = sys.solve(e, columns[a]);
        }
      }
    }
    if (accepted) {
      entry.method = repairs == 0 ? "newton" : "newton-secant";
      entry.damping = tol.damping;
      entry.step_norm = tol.damping * dw.lpNorm<Eigen::Infinity>();
      entry.repairs = repairs;
      w = std::move(trial);
      f = std::move(ft);
    } else {
      // Picard: A w_new = phi(w) - b, under-relaxed by 0.5.
      // A (w + s) = A w - F(w) = phi(w) - b, so s solves A s = -F(w).
      Eigen::VectorXd target;
      if (!sys.solve_shifted({}, -f, target)) {
        throw ConvergenceError("linear solve failed in Picard fallback", stage, log);
      }
      entry.method = "picard";
      entry.damping = 0.5;
      entry.step_norm = 0.5 * target.lpNorm<Eigen::Infinity>();
      w += 0.5 * target;
      f = sys.residual(w, phi);
    }
    res = sys.residual_norm(f);
    entry.residual = res;
    log.push_back(entry);
    rec.iterations = it;
  }
  rec.residual = res;
  rec.converged = res <= tol.residual_tol;
  return rec;
}

}  // namespace detail

/// One penalized solve at smoothing scale delta, starting from `initial`
/// (or the harmonic extension of the boundary data).
inline PenalizedResult solve_penalized(const SolveConfig& config, double delta,
                                       const std::optional<PolarField>& initial = std::nullopt) {
  const AssembledOperator op = assemble_operator(config);
  detail::ScaledSystem sys(config, op);
  const PenaltyFamily phi(delta, config.p);
  std::vector<std::string> warnings;
  Eigen::VectorXd w;
  if (initial) {
    w = sys.from_field(*initial);
    const Eigen::VectorXd f = sys.residual(w, phi);
    double worst = 0.0;
    for (std::size_t k = 0; k < sys.size(); ++k) {
      if (sys.interior(k)) worst = std::max(worst, sys.weight(k) * f(static_cast<Eigen::Index>(k)));
    }
    if (worst > 0.1 * config.tolerances.residual_tol) {
      warnings.push_back("initial field is not a supersolution; starting from the harmonic extension");
      w = sys.harmonic_extension();
    }
  } else {
    w = sys.harmonic_extension();
  }
  std::vector<IterationRecord> log;
  StageRecord rec = detail::newton_stage(sys, w, phi, config.tolerances, 0, log);
  if (!rec.converged) {
    throw ConvergenceError("penalized solve did not converge (delta = " + std::to_string(delta) +
                               ", residual = " + std::to_string(rec.residual) + ")",
                           0, log);
  }
  PenalizedResult out{sys.to_field(w, config), rec, std::move(log), std::move(warnings)};
  const auto& vals = out.field.values();
  const double vmin = *std::min_element(vals.begin(), vals.end());
  if (vmin < -1e-6) out.warnings.push_back("negative undershoot: min v = " + std::to_string(vmin));
  return out;
}

struct FreeBoundaryRow {
  double r = 0.0;
  std::vector<double> angles;
  double arc = 0.0;  // total angular length of the positivity set on this row
};

/// Positivity threshold at row i: kappa h^2 r^beta with h = max(radial step, dtheta),
/// i.e. kappa h^2 in blow-up units.
inline double positivity_threshold(const PolarGrid& grid, std::size_t i, double kappa, double beta) {
  const double h = grid.h();
  return kappa * h * h * std::pow(grid.r(i), beta);
}

/// Free-boundary crossing angles in [0, 2 pi) for each radial row.
inline std::vector<FreeBoundaryRow> extract_free_boundary(const PolarField& field, double kappa,
                                                          double beta, FreeBoundaryMethod method) {
  const PolarGrid& grid = field.grid();
  const std::size_t nt = grid.n_theta();
  const double dth = grid.dtheta();
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<FreeBoundaryRow> rows;
  rows.reserve(grid.n_r());
  for (std::size_t i = 0; i < grid.n_r(); ++i) {
    FreeBoundaryRow row;
    row.r = grid.r(i);
    const double thr = positivity_threshold(grid, i, kappa, beta);
    auto v = [&](std::ptrdiff_t j) {
      const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(nt);
      return std::max(0.0, field(i, static_cast<std::size_t>(((j % n) + n) % n)));
    };
    for (std::size_t j = 0; j < nt; ++j) {
      const std::ptrdiff_t a = static_cast<std::ptrdiff_t>(j);
      const double va = v(a) - thr;
      const double vb = v(a + 1) - thr;
      if ((va > 0.0) == (vb > 0.0)) continue;
      const bool rising = vb > 0.0;
      double angle;
      if (method == FreeBoundaryMethod::Threshold) {
        angle = grid.theta(j) + dth * va / (va - vb);
      } else {
        // Two nodes on the positive side of the crossing; v^{1/beta} is
        // linear in the distance to a free boundary of the homogeneous profile.
        const std::ptrdiff_t n1 = rising ? a + 1 : a;
        const std::ptrdiff_t n2 = rising ? a + 2 : a - 1;
        const double s1 = std::pow(v(n1), 1.0 / beta);
        const double s2 = std::pow(v(n2), 1.0 / beta);
        const double th1 = static_cast<double>(n1) * dth;
        const double dir = rising ? -1.0 : 1.0;  // direction from n1 toward the crossing
        if (s2 > s1) {
          angle = th1 + dir * dth * s1 / (s2 - s1);
        } else {
          angle = grid.theta(j) + dth * va / (va - vb);
        }
      }
      angle = std::fmod(angle, two_pi);
      if (angle < 0.0) angle += two_pi;
      row.angles.push_back(angle);
    }
    std::sort(row.angles.begin(), row.angles.end());
    auto positive_at = [&](double angle) {
      const auto j = static_cast<std::ptrdiff_t>(std::lround(angle / dth));
      return v(j) > thr;
    };
    if (row.angles.empty()) {
      row.arc = positive_at(0.0) ? two_pi : 0.0;
    } else {
      for (std::size_t k = 0; k < row.angles.size(); ++k) {
        const double lo = row.angles[k];
        const double hi = k + 1 < row.angles.size() ? row.angles[k + 1] : row.angles.front() + two_pi;
        if (positive_at(0.5 * (lo + hi))) row.arc += hi - lo;
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

struct Solution {
  PolarField field;  // clamped to v >= 0
  std::vector<StageRecord> stages;
  std::vector<std::uint8_t> positivity;  // v > kappa h^2 r^beta
  double positivity_fraction = 0.0;
  std::vector<FreeBoundaryRow> free_boundary;
  std::vector<IterationRecord> log;
  std::vector<std::string> warnings;
  bool monotone_continuation = true;
  double min_unclamped = 0.0;
};

/// Runs the penalty schedule, warm-starting each stage from the previous one.
inline Solution solve(const SolveConfig& config) {
  config.validate();
  const AssembledOperator op = assemble_operator(config);
  detail::ScaledSystem sys(config, op);
  Eigen::VectorXd w = sys.harmonic_extension();
  Solution sol{sys.to_field(w, config), {}, {}, 0.0, {}, {}, {}, true, 0.0};
  for (std::size_t s = 0; s < config.penalty_schedule.size(); ++s) {
    const PenaltyFamily phi(config.penalty_schedule[s], config.p);
    const int stage = static_cast<int>(s);
    StageRecord rec = detail::newton_stage(sys, w, phi, config.tolerances, stage, sol.log);
    sol.stages.push_back(rec);
    if (!rec.converged) {
      throw ConvergenceError("stage " + std::to_string(s) + " (delta = " +
                                 std::to_string(rec.delta) + ") did not converge: residual " +
                                 std::to_string(rec.residual),
                             stage, sol.log);
    }
    if (s > 0) {
      const double prev = sol.stages[s - 1].residual;
      if (rec.residual > std::max(prev, config.tolerances.residual_tol)) {
        sol.monotone_continuation = false;
      }
    }
  }
  PolarField raw = sys.to_field(w, config);
  const auto& vals = raw.values();
  sol.min_unclamped = *std::min_element(vals.begin(), vals.end());
  if (sol.min_unclamped < -1e-6) {
    sol.warnings.push_back("negative undershoot: min v = " + std::to_string(sol.min_unclamped));
  }
  std::vector<double> clamped(vals.size());
  std::transform(vals.begin(), vals.end(), clamped.begin(), [](double x) { return std::max(0.0, x); });
  sol.field = PolarField(raw.grid(), std::move(clamped), raw.meta());

  const PolarGrid& grid = sol.field.grid();
  const double beta = beta_of(config.p);
  sol.positivity.assign(grid.size(), 0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < grid.n_r(); ++i) {
    const double thr = positivity_threshold(grid, i, config.kappa, beta);
    for (std::size_t j = 0; j < grid.n_theta(); ++j) {
      if (sol.field(i, j) > thr) {
        sol.positivity[sol.field.index(i, j)] = 1;
        ++count;
      }
    }
  }
  sol.positivity_fraction = static_cast<double>(count) / static_cast<double>(grid.size());
  sol.free_boundary = extract_free_boundary(sol.field, config.kappa, beta, config.free_boundary_method);
  return sol;
}

struct ResidualReport {
  double sup_positive = 0.0;  // sup |L_h v - v^p| on {v > delta r^beta}
  double l2_positive = 0.0;   // area-weighted L2 norm of the same
  double sup_zero = 0.0;      // sup |L_h v| on the rest of the interior
  double argmax_r = 0.0;
  double argmax_theta = 0.0;
  std::size_t n_positive = 0;
  std::size_t n_zero = 0;
};

/// Residual of the unpenalized equation on a field, split by the positivity set.
inline ResidualReport residual_check(const PolarField& field, const CoefficientModel& model,
                                     double p, double delta_final) {
  const PolarField lv = apply_polar(field, model);
  const PolarGrid& grid = field.grid();
  const double beta = beta_of(p);
  ResidualReport rep;
  double l2 = 0.0;
  for (std::size_t i = 1; i + 1 < grid.n_r(); ++i) {
    const double r = grid.r(i);
    const double dr = grid.logarithmic() ? r * grid.radial_step() : grid.radial_step();
    const double area = r * dr * grid.dtheta();
    const double floor = delta_final * std::pow(r, beta);
    for (std::size_t j = 0; j < grid.n_theta(); ++j) {
      const double v = field(i, j);
      if (v > floor) {
        const double res = std::abs(lv(i, j) - positive_power(v, p));
        if (res > rep.sup_positive) {
          rep.sup_positive = res;
          rep.argmax_r = r;
          rep.argmax_theta = grid.theta(j);
        }
        l2 += res * res * area;
        ++rep.n_positive;
      } else {
        rep.sup_zero = std::max(rep.sup_zero, std::abs(lv(i, j)));
        ++rep.n_zero;
      }
    }
  }
  rep.l2_positive = std::sqrt(l2);
  return rep;
}

}  // namespace discfb
