#include <rupture/exact.hpp>
#include <rupture/scenarios.hpp>
#include <rupture/solver.hpp>

#include <gtest/gtest.h>

using namespace rupture;

TEST(Energy, ConstantFields) {
  const Grid g = Grid::box(2, 32, 0.5);
  const ScalarField one(g, 1.0);
  EXPECT_NEAR(energy(one, nullptr, 3.0, 1e-6), -0.5, 1e-12);
  const ScalarField two(g, 2.0);
  EXPECT_NEAR(energy(one, &two, 3.0, 1e-6), 1.5, 1e-12);
}

TEST(Energy, HomogeneousSolutionCancelsPointwise) {
  // |∇u|^2/2 = u^{-2}/2 = 1/(4r); each term integrates to π/4 over B_{1/2}
  const Grid g = Grid::symmetric(2, 512, 1.0 / 512.0);
  const auto u = homogeneous_field(HomogeneousSolution(2, 3.0), g);
  // δ = 0.05 clips only |x| < 0.00125, where each term carries mass below 0.002
  const double e = energy(u, nullptr, 3.0, 0.05, BallRegion(Point{0.0, 0.0}, 0.5));
  EXPECT_NEAR(e, 0.0, 0.01 * std::numbers::pi / 4.0);
}

TEST(SolveElliptic, LargeConstantDataIsNearlyHarmonic) {
  const double M = 10.0;
  const ScalarField init(Grid::box(2, 24, 1.0), M);
  SolverConfig cfg;
  cfg.tol_residual = 1e-8;
  const auto res = solve_elliptic(nullptr, cfg, init);
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.active_rupture_cells, 0u);
  for (double v : res.u.values()) EXPECT_NEAR(v, M, 1e-3);
  EXPECT_LT(res.final_residual, 1e-8);
}

TEST(SolveElliptic, EnergyIsNonincreasingWithinEachStage) {
  const Grid g = Grid::box(2, 20, 1.0);
  const auto init = ScalarField::sample(g, [](const Point& x) { return 1.0 + 0.5 * x[0] + 0.3 * x[1] * x[1]; });
  SolverConfig cfg;
  cfg.tol_residual = 1e-7;
  cfg.check_interval = 5;
  const auto res = solve_elliptic(nullptr, cfg, init);
  ASSERT_TRUE(res.converged);
  EXPECT_EQ(res.rejected_steps, 0u);
  std::size_t begin = 0;
  for (std::size_t end : res.stage_ends) {
    for (std::size_t i = begin + 1; i < end; ++i)
      EXPECT_LE(res.energy_history[i], res.energy_history[i - 1] + 1e-10 * std::abs(res.energy_history[i - 1]));
    begin = end;
  }
}

TEST(SolveElliptic, Preconditions) {
  const Grid g = Grid::box(2, 8, 1.0);
  ScalarField init(g, 1.0);
  SolverConfig cfg;
  cfg.boundary_trace = ScalarField(g, 2.0);
  try {
    solve_elliptic(nullptr, cfg, init);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BoundaryMismatch);
  }
  init[g.linear({3, 3})] = -1.0;
  cfg.boundary_trace.reset();
  try {
    solve_elliptic(nullptr, cfg, init);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NegativeInit);
  }
  SolverConfig bad;
  bad.delta_schedule = {1e-3, 1e-2};
  EXPECT_THROW(solve_elliptic(nullptr, bad, ScalarField(g, 1.0)), Error);
}

TEST(SolveElliptic, MaxStepsReturnsUnconverged) {
  SolverConfig cfg;
  cfg.max_steps = 10;
  const auto g = Grid::box(2, 16, 1.0);
  const auto init = ScalarField::sample(g, [](const Point& x) { return 1.0 + x[0]; });
  const auto res = solve_elliptic(nullptr, cfg, init);
  EXPECT_FALSE(res.converged);
  EXPECT_EQ(res.steps, 10u);
}

TEST(SolveElliptic, ExactTraceFromAboveReachesAPositiveSolution) {
  // Descent from a supersolution stops at the maximal solution below it, which is positive:
  // the rupture profile is a saddle point of the energy.
  const Grid g = Grid::symmetric(2, 16, 1.0 / 16.0);
  const auto exact = homogeneous_field(HomogeneousSolution(2, 3.0), g);
  SolverConfig cfg;
  cfg.tol_residual = 1e-6;
  const auto res = solve_elliptic(nullptr, cfg, harmonic_extension(exact));
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.active_rupture_cells, 0u);
  EXPECT_GT(*std::min_element(res.u.values().begin(), res.u.values().end()), 0.5);
}

TEST(SolvePinned, ReproducesExactSolution) {
  const HomogeneousSolution sol(2, 3.0);
  std::vector<double> near, far;
  for (std::size_t half : {32u, 64u}) {
    const Grid g = Grid::symmetric(2, half, 1.0 / static_cast<double>(half));
    const auto exact = homogeneous_field(sol, g);
    Mask pins(g);
    visit_ball(g, Point{0.0, 0.0}, 1.0001 * g.spacing(), [&](std::size_t l, double) { pins.set(l, true); });
    const auto res = solve_pinned(nullptr, NewtonConfig{}, exact, &pins);
    ASSERT_TRUE(res.converged);
    double en = 0.0, ef = 0.0;
    for (std::size_t l = 0; l < g.size(); ++l) {
      const double e = std::abs(res.u[l] - exact[l]);
      (g.center(l).norm() < 0.25 ? en : ef) = std::max(g.center(l).norm() < 0.25 ? en : ef, e);
    }
    near.push_back(en);
    far.push_back(ef);
    EXPECT_LT(en, 0.5 * std::pow(g.spacing(), 0.5));
  }
  EXPECT_LT(far[1], far[0]);
}

TEST(SolvePinned, SeededProblemsConvergeWithRupture) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto pr = seeded_rupture_problem(seed, 32);
    const auto res = solve_rupture_problem(pr);
    ASSERT_TRUE(res.converged) << "seed " << seed;
    EXPECT_EQ(res.active_rupture_cells, 1u);
    const auto clusters = rupture_clusters(res.u, 0.0);
    ASSERT_EQ(clusters.size(), 1u);
    EXPECT_EQ(pr.grid.center(clusters[0]), pr.x0);
    const auto lap = laplacian(res.u);
    for (std::size_t l = 0; l < pr.grid.size(); ++l) {
      if (std::isnan(lap[l]) || pr.pinned[l]) continue;
      ASSERT_NEAR(lap[l], std::pow(res.u[l], -3.0), 1e-8);
    }
  }
}

TEST(Evolve, UniformDecayMatchesScalarOde) {
  // spatially constant data solves y' = -y^{-p}; the only error is forward Euler in time, dt ~ h^2
  const double M = 1.0, p = 3.0;
  SolverConfig cfg;
  cfg.boundary = BoundaryKind::Neumann;
  cfg.max_steps = 1000000;
  const std::vector<double> times = {0.05, 0.1, 0.15, 0.2, 0.24};
  std::vector<double> errs;
  for (std::size_t cells : {16u, 32u}) {
    const ScalarField u0(Grid::box(2, cells, 1.0), M);
    const auto snaps = evolve_parabolic(u0, 0.24, cfg, times);
    ASSERT_EQ(snaps.size(), times.size() + 1);
    double worst = 0.0;
    for (const auto& s : snaps) {
      const double y = std::pow(std::pow(M, p + 1) - (p + 1) * s.t, 1.0 / (p + 1));
      for (double v : s.u.values()) worst = std::max(worst, std::abs(v - y));
    }
    errs.push_back(worst);
  }
  EXPECT_LT(errs[0], 5e-2);
  EXPECT_LT(errs[1], 1e-2);
  EXPECT_GT(errs[0] / errs[1], 3.0);
}

TEST(Evolve, ZeroHorizonReturnsInitialField) {
  const ScalarField u0(Grid::box(2, 8, 1.0), 2.0);
  const auto snaps = evolve_parabolic(u0, 0.0, SolverConfig{});
  ASSERT_EQ(snaps.size(), 1u);
  EXPECT_EQ(snaps[0].u, u0);
}

TEST(Evolve, SteadyProfileDriftsAtDiscretizationOrder) {
  // 1-D profile u'' = u^{-3} extended in x_2: discrete residual O(h^2), so the drift is O(h^2) T
  const auto ode = ode_profile(3.0, 0.5, 4.0);
  std::vector<double> drift;
  for (std::size_t cells : {16u, 32u}) {
    const Grid g = Grid::box(2, cells, 0.5);
    const auto u0 = ode_field(ode, g, 0);
    SolverConfig cfg;
    cfg.max_steps = 1000000;
    const double T = 0.05;
    const auto snaps = evolve_parabolic(u0, T, cfg);
    double d = 0.0;
    for (std::size_t l = 0; l < g.size(); ++l) d = std::max(d, std::abs(snaps.back().u[l] - u0[l]));
    drift.push_back(d);
    EXPECT_LT(d, 30.0 * g.spacing() * g.spacing() * T);
  }
  EXPECT_GT(drift[0] / drift[1], 3.0);
}

namespace {

std::vector<Snapshot> uniform_decay_run(std::size_t cells, double snapshot_dt) {
  SolverConfig cfg;
  cfg.boundary = BoundaryKind::Neumann;
  cfg.max_steps = 10000000;
  std::vector<double> times;
  for (double t = snapshot_dt; t < 0.2 - 1e-12; t += snapshot_dt) times.push_back(t);
  return evolve_parabolic(ScalarField(Grid::box(2, cells, 1.0), 1.0), 0.2, cfg, times);
}

}  // namespace

TEST(EnergyInequality, HoldsForUniformDecayAndConverges) {
  const auto phi = bump_cutoff(Point{0.0, 0.0}, 0.8);
  const auto psi = bump_time_cutoff(0.02, 0.18);
  std::vector<double> defects;
  for (std::size_t cells : {8u, 16u}) {
    const double h = 2.0 / static_cast<double>(cells);
    const auto snaps = uniform_decay_run(cells, h / 16.0);
    const auto rep = energy_inequality_check(snaps, 3.0, phi, psi);
    EXPECT_GE(rep.defect, -10.0 * h * h);
    EXPECT_NE(rep.lhs, 0.0);
    defects.push_back(std::abs(rep.defect));
  }
  EXPECT_GT(defects[0] / defects[1], 3.0);
  EXPECT_LT(defects[0] / defects[1], 5.0);
}

TEST(EnergyInequality, ZeroTimeCutoffGivesZeroSides) {
  const auto snaps = uniform_decay_run(8, 0.05);
  const auto rep = energy_inequality_check(snaps, 3.0, bump_cutoff(Point{0.0, 0.0}, 0.8), zero_time_cutoff());
  EXPECT_EQ(rep.lhs, 0.0);
  EXPECT_EQ(rep.rhs, 0.0);
  EXPECT_THROW(energy_inequality_check({snaps[0]}, 3.0, bump_cutoff(Point{0.0, 0.0}, 0.8), zero_time_cutoff()),
               Error);
}

TEST(PdeResidual, ConstantFields) {
  const Grid g = Grid::box(2, 8, 1.0);
  const ScalarField one(g, 1.0), minus(g, -1.0);
  EXPECT_NEAR(pde_residual(one, &minus, 2.5, 0.0).sup, 0.0, 1e-14);
  const auto r = pde_residual(one, nullptr, 3.0, 0.0);
  EXPECT_NEAR(r.sup, 1.0, 1e-14);
  EXPECT_EQ(r.cells, 36u);
  EXPECT_NEAR(r.l2, std::sqrt(36.0 * g.cell_volume()), 1e-12);
}

TEST(PdeResidual, ExactFieldConvergesAtFixedExclusion) {
  const HomogeneousSolution sol(2, 3.0);
  std::vector<double> sups;
  for (std::size_t half : {32u, 64u, 128u}) {
    const Grid g = Grid::symmetric(2, half, 1.0 / static_cast<double>(half));
    sups.push_back(pde_residual(homogeneous_field(sol, g), nullptr, 3.0, 5.0 / 32.0).sup);
  }
  for (std::size_t i = 1; i < sups.size(); ++i) {
    EXPECT_GE(sups[i - 1] / sups[i], 3.0);
    EXPECT_LE(sups[i - 1] / sups[i], 5.0);
  }
}

TEST(Morrey, Examples) {
  const Grid g = Grid::box(2, 400, 1.5);
  const ScalarField zero(g, 0.0);
  const std::vector<Point> centers = {Point{0.0, 0.0}, Point{0.5, 0.0}};
  const auto radii = geometric_ladder(0.125, 1.0, 4);
  EXPECT_EQ(morrey_seminorm(zero, 1.0, 2.0, centers, radii), 0.0);
  const auto disc = ScalarField::sample(g, [](const Point& x) { return x.norm() < 1.0 ? 1.0 : 0.0; });
  const double m = morrey_seminorm(disc, 1.0, 2.0, centers, geometric_ladder(0.125, 2.0, 9));
  EXPECT_NEAR(m, std::sqrt(std::numbers::pi), 0.02 * std::sqrt(std::numbers::pi));
  auto twice = disc;
  for (auto& v : twice.values()) v *= 2.0;
  EXPECT_NEAR(morrey_seminorm(twice, 1.0, 2.0, centers, radii), 2.0 * morrey_seminorm(disc, 1.0, 2.0, centers, radii),
              1e-12);
  EXPECT_THROW(morrey_seminorm(disc, 1.0, 2.0, {}, radii), Error);
}

TEST(GradientTail, ExactSolution) {
  // {|∇u| > λ} is the disc r < 1/(2λ^2), so λ^4 · area = π/4
  const Grid g = Grid::symmetric(2, 307, 1.0 / 512.0);
  const auto u = homogeneous_field(HomogeneousSolution(2, 3.0), g);
  const auto tail = gradient_tail(u, BallRegion(Point{0.0, 0.0}, 1.0), 3.0, geometric_ladder(1.0, 4.0, 7));
  for (double v : tail.normalized) EXPECT_NEAR(v, std::numbers::pi / 4.0, 0.05 * std::numbers::pi / 4.0);
  EXPECT_NEAR(tail.slope, -4.0, 0.2);
}

TEST(GradientTail, LinearFieldHasNoTailAboveItsSlope) {
  const Grid g = Grid::box(2, 32, 1.0);
  const auto u = ScalarField::sample(g, [](const Point& x) { return 0.6 * x[0] + 0.8 * x[1] + 2.0; });
  const auto tail = gradient_tail(u, BallRegion(Point{0.0, 0.0}, 0.9), 3.0, {1.01, 2.0, 4.0});
  EXPECT_EQ(tail.statistic, 0.0);
}

TEST(Nondegeneracy, ExactSolutionRatioIsCoefficient) {
  const Grid g = Grid::symmetric(2, 256, 1.0 / 256.0);
  const auto u = homogeneous_field(HomogeneousSolution(2, 3.0), g);
  const auto prof = nondegeneracy_profile(u, Point{0.0, 0.0}, 3.0, {1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4});
  EXPECT_GT(prof.min, 0.95 * std::sqrt(2.0));
  EXPECT_LE(prof.max, std::sqrt(2.0));
}

TEST(InteriorEstimates, BoundedOnExactSolution) {
  const Grid g = Grid::symmetric(2, 256, 1.0 / 256.0);
  const auto u = homogeneous_field(HomogeneousSolution(2, 3.0), g);
  const auto est = interior_estimates(u, Point{0.0, 0.0}, 3.0, 1e-6, {1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4});
  // ∫_{B_r} |∇u|^2 = π r, and 2α + n - 2 = 1
  EXPECT_NEAR(est.gradient.min, std::numbers::pi, 0.05 * std::numbers::pi);
  EXPECT_NEAR(est.gradient.max, std::numbers::pi, 0.05 * std::numbers::pi);
  EXPECT_TRUE(std::isfinite(est.singular.max));
}

TEST(RuptureClusters, GroupsTouchingCells) {
  const Grid g = Grid::box(2, 10, 1.0);
  ScalarField u(g, 1.0);
  u[g.linear({2, 2})] = 0.0;
  u[g.linear({3, 3})] = 0.0;
  u[g.linear({7, 7})] = 0.0;
  const auto c = rupture_clusters(u, 0.0);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0], g.linear({2, 2}));
  EXPECT_EQ(c[1], g.linear({7, 7}));
}
