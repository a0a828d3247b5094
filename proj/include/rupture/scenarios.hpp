#pragma once

// Seeded test problems shared by the test suite, the acceptance binary and `verify`.

#include <rupture/exact.hpp>
#include <rupture/solver.hpp>

#include <random>

namespace rupture {

/// Dirichlet data  U(x - x0) + a·y + b·(y_1^2 - y_2^2) + c·y_1 y_2  (y = x - x0, U the planar homogeneous
/// solution) on the symmetric grid [-1,1]^2, with a rupture pinned at the cell center x0.
struct RuptureProblem {
  Grid grid;
  Point x0;
  double p = 3.0;
  std::array<double, 4> coeffs{};  // a_1, a_2, b, c
  ScalarField guess;               // U + harmonic perturbation; trace and pins are exact for the data
  Mask pinned;                     // x0 and its 2n face neighbours
};

inline RuptureProblem seeded_rupture_problem(std::uint64_t seed, std::size_t half_cells, double amplitude = 0.1,
                                             double p = 3.0) {
  RuptureProblem pr;
  pr.p = p;
  pr.grid = Grid::symmetric(2, half_cells, 1.0 / static_cast<double>(half_cells));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (auto& c : pr.coeffs) c = amplitude * unit(rng);
  // rupture within |x0_i| <= 0.1, on a cell center that is also a center of every refinement
  const double h = pr.grid.spacing();
  const double coarse = std::max(h, 1.0 / 64.0);
  pr.x0 = Point{coarse * std::round(0.1 * unit(rng) / coarse), coarse * std::round(0.1 * unit(rng) / coarse)};
  const HomogeneousSolution sol(2, p);
  const auto data = [&](const Point& x) {
    const Point y = x - pr.x0;
    const auto& k = pr.coeffs;
    return sol.value(y) + k[0] * y[0] + k[1] * y[1] + k[2] * (y[0] * y[0] - y[1] * y[1]) + k[3] * y[0] * y[1];
  };
  pr.guess = ScalarField::sample(pr.grid, data, "u_guess");
  for (auto& v : pr.guess.values()) v = std::max(v, 0.0);
  pr.guess[pr.grid.nearest(pr.x0)] = 0.0;
  pr.pinned = Mask(pr.grid);
  visit_ball(pr.grid, pr.x0, 1.0001 * h, [&](std::size_t l, double) { pr.pinned.set(l, true); });
  return pr;
}

inline SolveResult solve_rupture_problem(const RuptureProblem& pr, double tol = 1e-8) {
  NewtonConfig cfg;
  cfg.p = pr.p;
  cfg.tol_residual = tol;
  return solve_pinned(nullptr, cfg, pr.guess, &pr.pinned);
}

}  // namespace rupture
