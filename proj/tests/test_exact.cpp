#include <rupture/exact.hpp>
#include <rupture/field_ops.hpp>

#include <gtest/gtest.h>

using namespace rupture;

TEST(Homogeneous, PlanarCoefficient) {
  const HomogeneousSolution sol(2, 3.0);
  EXPECT_DOUBLE_EQ(sol.alpha(), 0.5);
  EXPECT_NEAR(sol.coeff(), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(sol.value(Point{1.0, 0.0}), 1.414214, 1e-6);
  EXPECT_EQ(sol.value(Point{0.0, 0.0}), 0.0);
}

TEST(Homogeneous, ThreeDimensionalCoefficient) {
  const HomogeneousSolution sol(3, 3.0);
  EXPECT_NEAR(sol.coeff(), std::pow(0.75, -0.25), 1e-14);
  EXPECT_NEAR(sol.coeff(), 1.074570, 1e-6);
}

TEST(Homogeneous, CylinderUsesActiveDimension) {
  // axis along e_3: the profile is the planar solution in (x_1, x_2)
  const HomogeneousSolution cyl(3, 3.0, {Point{0.0, 0.0, 2.0}});
  const HomogeneousSolution plane(2, 3.0);
  EXPECT_NEAR(cyl.coeff(), plane.coeff(), 1e-15);
  EXPECT_NEAR(cyl.value(Point{0.3, 0.4, 7.0}), plane.value(Point{0.3, 0.4}), 1e-15);
  EXPECT_THROW(HomogeneousSolution(2, 3.0, {Point{1.0, 0.0}}), Error);
  EXPECT_THROW(HomogeneousSolution(2, 1.0), Error);
}

TEST(Homogeneous, GradientSquaredEqualsUToMinusTwo) {
  const HomogeneousSolution sol(2, 3.0);
  for (double r : {0.01, 0.1, 0.7}) {
    const Point x{r * 0.6, r * 0.8};
    EXPECT_NEAR(sol.gradient_norm2(x), std::pow(sol.value(x), -2.0), 1e-12 * sol.gradient_norm2(x));
  }
}

TEST(Homogeneous, ScaleInvariance) {
  const HomogeneousSolution sol(3, 2.0);
  const double a = sol.alpha();
  for (double r : {0.5, 0.125, 3.0}) {
    const Point y{0.2, -0.3, 0.55};
    EXPECT_NEAR(std::pow(r, -a) * sol.value(y * r), sol.value(y), 1e-14);
  }
}

TEST(Homogeneous, DiscreteResidualIsSecondOrderAwayFromOrigin) {
  // 3-D, p = 3: Δu - u^{-3} sampled on the shell 0.25 <= |x| <= 0.5
  const HomogeneousSolution sol(3, 3.0);
  std::vector<double> errs;
  for (std::int64_t half : {16, 32, 64}) {
    const Grid g = Grid::symmetric(3, static_cast<std::size_t>(half), 0.5 / static_cast<double>(half) * 1.25);
    const auto u = homogeneous_field(sol, g);
    const auto lap = laplacian(u);
    double worst = 0.0;
    for (std::size_t l = 0; l < g.size(); ++l) {
      const double r = g.center(l).norm();
      if (r < 0.25 || r > 0.5 || std::isnan(lap[l])) continue;
      worst = std::max(worst, std::abs(lap[l] - std::pow(u[l], -3.0)));
    }
    errs.push_back(worst);
  }
  EXPECT_GT(errs[0] / errs[1], 2.8);
  EXPECT_GT(errs[1] / errs[2], 3.5);
  EXPECT_LT(errs[2], 1e-2);
}

TEST(Ode, StartsAtEpsWithZeroSlope) {
  const auto sol = ode_profile(3.0, 0.01, 2.0);
  EXPECT_EQ(sol.value(0.0), 0.01);
  EXPECT_DOUBLE_EQ(sol.v(0.01), 0.0);
  const double d = 1e-6;
  EXPECT_NEAR((sol.value(d) - sol.value(-d)) / (2 * d), 0.0, 1e-9);
  EXPECT_EQ(sol.derivative(0.0), 0.0);
}

TEST(Ode, InverseMapRoundTrip) {
  const auto sol = ode_profile(3.0, 0.05, 1.5);
  for (double s : {0.05, 0.051, 0.1, 0.5, 1.2}) EXPECT_NEAR(sol.value(sol.v(s)), s, 1e-12);
}

TEST(Ode, FirstIntegralHoldsUnderFiniteDifferences) {
  for (double p : {2.0, 3.0, 5.0}) {
    const double eps = 0.05;
    const auto sol = ode_profile(p, eps, 4.0);
    const double lambda = 2.0 / (p - 1.0);
    const double d = 1e-5;
    for (double r = 0.05; r < std::min(1.0, sol.r_max() - d); r += 0.05) {
      const double up = (sol.value(r + d) - sol.value(r - d)) / (2 * d);
      const double u = sol.value(r);
      const double rhs = lambda * (std::pow(eps, 1 - p) - std::pow(u, 1 - p));
      EXPECT_NEAR(up * up, rhs, 1e-6 * std::max(1.0, rhs)) << "p=" << p << " r=" << r;
    }
  }
}

TEST(Ode, SecondDerivativeMatchesEquation) {
  const double p = 3.0;
  const auto sol = ode_profile(p, 0.1, 20.0);
  const double d = 1e-4;
  for (double r : {0.0, 0.1, 0.4, 0.9}) {
    const double upp = (sol.value(r + d) - 2 * sol.value(r) + sol.value(r - d)) / (d * d);
    EXPECT_NEAR(upp, std::pow(sol.value(r), -p), 1e-4 * std::pow(sol.value(r), -p));
  }
}

TEST(Ode, RejectsBadArguments) {
  EXPECT_THROW(ode_profile(1.0, 0.1, 1.0), Error);
  EXPECT_THROW(ode_profile(3.0, 0.0, 1.0), Error);
  const auto sol = ode_profile(3.0, 0.1, 1.0);
  EXPECT_THROW(sol.value(sol.r_max() * 1.1), Error);
}

TEST(Ode, FieldIsConstantAcrossAxis) {
  const auto sol = ode_profile(3.0, 0.1, 10.0);
  const Grid g = Grid::symmetric(2, 10, 0.05);
  const auto u = ode_field(sol, g, 0);
  EXPECT_EQ(u[g.linear({3, 0})], u[g.linear({3, 20})]);
  EXPECT_EQ(u[g.linear({10, 4})], 0.1);
}

TEST(Ode, FirstIntegralOnUnitInterval) {
  const double p = 3.0, eps = 0.1, lambda = 1.0;
  const auto sol = ode_profile(p, eps, 20.0);
  ASSERT_GT(sol.r_max(), 1.0);
  const double d = 1e-5;
  for (int i = 0; i <= 100; ++i) {
    const double r = i / 100.0;
    const double up = (sol.value(r + d) - sol.value(r - d)) / (2 * d);
    const double rhs = lambda * (std::pow(eps, 1 - p) - std::pow(sol.value(r), 1 - p));
    EXPECT_NEAR(up * up, rhs, 1e-6 * std::max(1.0, rhs)) << "r=" << r;
    EXPECT_NEAR(sol.derivative(r) * sol.derivative(r), rhs, 1e-10 * std::max(1.0, rhs));
  }
}

TEST(Homogeneous, SampledFieldIsScaleInvariantUnderInterpolation) {
  // r^{-alpha} u(r y) = u(y) with y and r y both cell centers
  const HomogeneousSolution sol(2, 3.0);
  const Grid g = Grid::symmetric(2, 64, 1.0 / 64.0);
  const auto u = homogeneous_field(sol, g);
  const double r = 0.5;
  for (std::int64_t i = 0; i <= 128; i += 2) {
    for (std::int64_t j = 0; j <= 128; j += 6) {
      const Point y = g.center(g.linear({i, j}));
      const double lhs = std::pow(r, -sol.alpha()) * u.interpolate(y * r);
      EXPECT_NEAR(lhs, u.interpolate(y), 1e-10);
    }
  }
  // off-lattice points: interpolation error only
  const Point y{0.3127, -0.4411};
  EXPECT_NEAR(std::pow(0.37, -sol.alpha()) * u.interpolate(y * 0.37), u.interpolate(y), 2e-3);
}

TEST(Homogeneous, CylinderFieldIsTranslationInvariantAlongAxis) {
  const HomogeneousSolution sol(3, 3.0, {Point{1.0, 1.0, 0.0}});
  const Grid g = Grid::symmetric(3, 16, 1.0 / 16.0);
  const auto u = homogeneous_field(sol, g);
  const Point shift = Point{1.0, 1.0, 0.0} * (0.1 / std::sqrt(2.0));
  for (const Point& y : {Point{0.1, -0.2, 0.3}, Point{-0.4, 0.25, -0.1}, Point{0.0, 0.5, 0.5}})
    EXPECT_NEAR(u.interpolate(y + shift), u.interpolate(y), 5e-3);
}
