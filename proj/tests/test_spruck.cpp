#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "discfb/spruck.hpp"

using namespace discfb;

namespace {

FieldMeta beta_meta(double beta) {
  FieldMeta m;
  m.beta = beta;
  return m;
}

}  // namespace

TEST(Spruck, HomogeneousFieldVanishes) {
  const HomogeneousProfile prof = closed_form_p0(0.3);
  const auto g = PolarGrid::log_polar(201, 64, 1e-3);
  const auto v = PolarField::sample(g, [&](double r, double th) { return r * r * prof.value(th); }, beta_meta(2.0));
  for (auto vars : {SpruckVariables::LogPolar, SpruckVariables::Radial}) {
    const MonitorReport rep = spruck_functional(v, 2.0, vars);
    EXPECT_LE(rep.total_functional, 1e-10);
  }
}

TEST(Spruck, CubicMatchesClosedForm) {
  // w = r: the functional over 1/2 > r > r_min is pi (1/4 - r_min^2).
  const double r_min = std::exp(-(std::log(2.0) + 3.0));
  const auto g = PolarGrid::log_polar(2001, 8, r_min);
  const auto v = PolarField::sample(g, [](double r, double) { return r * r * r; }, beta_meta(2.0));
  const double exact = std::numbers::pi * (0.25 - r_min * r_min);
  const MonitorReport rep = spruck_functional(v, 2.0);
  EXPECT_NEAR(rep.total_functional, exact, 1e-5);
  EXPECT_DOUBLE_EQ(rep.r_min, g.r_min());
  EXPECT_NEAR(rep.annuli.front().r_outer, 0.5, 1e-12);
  EXPECT_NEAR(rep.annuli.back().r_inner, r_min, 1e-15);
  double prev = 0.0;
  for (const Annulus& a : rep.annuli) {
    EXPECT_GT(a.r_outer, a.r_inner);
    EXPECT_GE(a.contribution, 0.0);
    EXPECT_NEAR(a.running_total, prev + a.contribution, 1e-15);
    prev = a.running_total;
  }
  EXPECT_DOUBLE_EQ(prev, rep.total_functional);
  EXPECT_NEAR(rep.bound_estimate, rep.total_functional, 1e-15);  // sup |v| = 1
}

TEST(Spruck, RadialAndLogPolarFormsAgree) {
  const auto g = PolarGrid::log_polar(1601, 16, 1e-2);
  const auto v = PolarField::sample(
      g, [](double r, double th) { return r * r * (1.5 + std::cos(th)) * (1.0 + r + std::sin(th) * r * r); },
      beta_meta(2.0));
  const double a = spruck_functional(v, 2.0, SpruckVariables::LogPolar).total_functional;
  const double b = spruck_functional(v, 2.0, SpruckVariables::Radial).total_functional;
  EXPECT_GT(a, 0.0);
  EXPECT_NEAR(a, b, 1e-4 * a);
}

TEST(Spruck, QuadraticScaling) {
  const auto g = PolarGrid::log_polar(101, 16, 1e-2);
  auto f = [](double r, double th) { return r * r * (1.0 + r * (1.0 + std::cos(th))); };
  const auto v = PolarField::sample(g, f, beta_meta(2.0));
  const auto v3 = PolarField::sample(g, [&](double r, double th) { return 3.0 * f(r, th); }, beta_meta(2.0));
  const MonitorReport a = spruck_functional(v, 2.0);
  const MonitorReport b = spruck_functional(v3, 2.0);
  EXPECT_NEAR(b.total_functional, 9.0 * a.total_functional, 1e-12 * b.total_functional);
  EXPECT_NEAR(b.bound_estimate, a.bound_estimate, 1e-12 * a.bound_estimate);
}

TEST(Spruck, CoverageErrors) {
  const auto far = PolarGrid::log_polar(20, 16, 0.6);
  EXPECT_THROW(spruck_functional(PolarField::sample(far, [](double, double) { return 0.0; }, beta_meta(2.0)), 2.0),
               GridError);
  FieldMeta wm;
  wm.quantity = Quantity::W;
  const auto g = PolarGrid::log_polar(20, 16, 1e-2);
  EXPECT_THROW(spruck_functional(PolarField::sample(g, [](double, double) { return 0.0; }, wm), 2.0),
               ParameterRangeError);
}

TEST(EnergyIdentity, ClosedForm) {
  for (double eps : {-0.3, 0.0, 0.1, 0.5}) EXPECT_LE(energy_identity_residual(closed_form_p0(eps)), 1e-12);
}

TEST(EnergyIdentity, OdeAndQuadratureProfiles) {
  for (double p : {0.25, 0.5}) {
    for (double eps : {-0.3, 0.2}) {
      EXPECT_LE(energy_identity_residual(ode_integrate(p, eps, 1e-4)), 1e-8) << p << " " << eps;
      EXPECT_LE(energy_identity_residual(quadrature_profile(p, eps)), 1e-8) << p << " " << eps;
    }
  }
}

TEST(EnergyIdentity, DetectsWrongProfile) {
  HomogeneousProfile prof = closed_form_p0(0.2);
  for (double& x : prof.g) x *= 1.01;
  EXPECT_GT(energy_identity_residual(prof), 1e-4);
}
