#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "discfb/errors.hpp"

namespace discfb {

enum class ModelKind { Identity, Planar2D, RadialND };

inline std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Identity:
      return "identity";
    case ModelKind::Planar2D:
      return "planar2d";
    case ModelKind::RadialND:
      return "radial_nd";
  }
  return "unknown";
}

/// Diffusion matrix a(x) of the operator a_ij d_ij.
///
///   Identity:   a = I
///   Planar2D:   a = I + eps * tau (x) tau,  tau = x^perp / |x|   (n = 2)
///   RadialND:   a = I + eps * x (x) x / |x|^2                   (any n >= 2)
///
/// Both perturbed models are homogeneous of degree zero and discontinuous
/// at the origin whenever eps != 0.
class CoefficientModel {
 public:
  static CoefficientModel identity(int dimension = 2) {
    if (dimension < 1) throw ParameterRangeError("identity model needs dimension >= 1");
    return CoefficientModel(ModelKind::Identity, 0.0, dimension);
  }
  static CoefficientModel planar(double epsilon) {
    check_ellipticity(epsilon);
    return CoefficientModel(ModelKind::Planar2D, epsilon, 2);
  }
  static CoefficientModel radial(int dimension, double epsilon) {
    if (dimension < 2) throw ParameterRangeError("radial model needs dimension >= 2");
    check_ellipticity(epsilon);
    return CoefficientModel(ModelKind::RadialND, epsilon, dimension);
  }

  ModelKind kind() const noexcept { return kind_; }
  double epsilon() const noexcept { return epsilon_; }
  int dimension() const noexcept { return dimension_; }
  bool discontinuous() const noexcept {
    return kind_ != ModelKind::Identity && epsilon_ != 0.0;
  }

  friend bool operator==(const CoefficientModel&, const CoefficientModel&) = default;

 private:
  CoefficientModel(ModelKind kind, double epsilon, int dimension)
      : kind_(kind), epsilon_(epsilon), dimension_(dimension) {}

  static void check_ellipticity(double epsilon) {
    if (!std::isfinite(epsilon) || !(1.0 + epsilon > 0.0)) {
      throw EllipticityError("coefficient model requires 1 + epsilon > 0, got epsilon = " +
                             std::to_string(epsilon));
    }
  }

  ModelKind kind_;
  double epsilon_;
  int dimension_;
};

struct EllipticityBounds {
  double lambda;
  double Lambda;
};

/// Tight ellipticity constants: the perturbation is rank one with eigenvalue eps.
inline EllipticityBounds ellipticity_bounds(const CoefficientModel& model) {
  const double eps = model.epsilon();
  return {std::min(1.0, 1.0 + eps), std::max(1.0, 1.0 + eps)};
}

namespace detail {

inline void check_point(const CoefficientModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.dimension()) {
    throw ParameterRangeError("point dimension " + std::to_string(x.size()) +
                              " does not match model dimension " +
                              std::to_string(model.dimension()));
  }
  if (model.kind() != ModelKind::Identity && x.squaredNorm() == 0.0) {
    throw OriginEvaluationError("coefficient matrix is undefined at the origin");
  }
}

}  // namespace detail

inline Eigen::MatrixXd evaluate_matrix(const CoefficientModel& model, const Eigen::VectorXd& x) {
  detail::check_point(model, x);
  const int n = model.dimension();
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  const double eps = model.epsilon();
  switch (model.kind()) {
    case ModelKind::Identity:
      break;
    case ModelKind::Planar2D: {
      const double r2 = x.squaredNorm();
      a(0, 0) += eps * x(1) * x(1) / r2;
      a(1, 1) += eps * x(0) * x(0) / r2;
      a(0, 1) = a(1, 0) = -eps * x(0) * x(1) / r2;
      break;
    }
    case ModelKind::RadialND: {
      const double r2 = x.squaredNorm();
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) a(i, j) += eps * (x(i) * x(j)) / r2;
      }
      break;
    }
  }
  return a;
}

/// a_ij xi_i xi_j via the closed forms
///   Planar2D: |xi|^2 + eps (x1 xi2 - x2 xi1)^2 / |x|^2
///   RadialND: |xi|^2 + eps (x . xi)^2 / |x|^2
inline double quadratic_form(const CoefficientModel& model, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& xi) {
  detail::check_point(model, x);
  if (xi.size() != x.size()) throw ParameterRangeError("xi dimension mismatch");
  const double eps = model.epsilon();
  switch (model.kind()) {
    case ModelKind::Identity:
      return xi.squaredNorm();
    case ModelKind::Planar2D: {
      const double cross = x(0) * xi(1) - x(1) * xi(0);
      return xi.squaredNorm() + eps * cross * cross / x.squaredNorm();
    }
    case ModelKind::RadialND: {
      const double dot = x.dot(xi);
      return xi.squaredNorm() + eps * dot * dot / x.squaredNorm();
    }
  }
  return 0.0;
}

/// Coefficients of the operator in planar polar coordinates,
///   L v = a v_rr + b v_r / r + c v_thth / r^2.
/// No mixed derivative appears for any of the models.
struct PolarCoefficients {
  double a;
  double b;
  double c;
};

inline PolarCoefficients polar_coefficients(const CoefficientModel& model) {
  const double eps = model.epsilon();
  switch (model.kind()) {
    case ModelKind::Identity:
      if (model.dimension() != 2) break;
      return {1.0, 1.0, 1.0};
    case ModelKind::Planar2D:
      return {1.0, 1.0 + eps, 1.0 + eps};
    case ModelKind::RadialND:
      if (model.dimension() != 2) break;
      return {1.0 + eps, 1.0, 1.0};
  }
  throw ParameterRangeError("polar fields are planar: model dimension must be 2");
}

/// Radial model in n dimensions written in spherical coordinates,
///   L v = (1 + eps) v_rr + (n - 1) v_r / r + (Delta_S v) / r^2,
/// where Delta_S is the Laplace-Beltrami operator of the unit sphere. On the
/// x1 axis with n = 2 this is (1 + eps) v_rr + v_r / r + v_thth / r^2.
inline double radial_model_operator(const CoefficientModel& model, double r, double v_rr,
                                    double v_r, double sphere_laplacian) {
  if (model.kind() != ModelKind::RadialND) {
    throw ParameterRangeError("radial_model_operator requires a radial model");
  }
  if (!(r > 0.0)) throw OriginEvaluationError("radial operator is undefined at r = 0");
  const int n = model.dimension();
  return (1.0 + model.epsilon()) * v_rr + (n - 1) * v_r / r + sphere_laplacian / (r * r);
}

}  // namespace discfb
