#pragma once

// Explicit gradient flow for  Δu = u^{-p} + f,  u >= 0, with the singular term regularized as max(u, δ)^{-p}.

#include <rupture/field_ops.hpp>
#include <rupture/parallel.hpp>

#include <Eigen/SparseCore>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <functional>
#include <optional>
#include <vector>

namespace rupture {

enum class BoundaryKind { Dirichlet, Neumann };

struct SolverConfig {
  double p = 3.0;
  std::vector<double> delta_schedule = {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
  double dt_safety = 0.9;
  std::size_t max_steps = 200000;
  double tol_residual = 1e-6;
  BoundaryKind boundary = BoundaryKind::Dirichlet;
  /// Dirichlet values on boundary cells. Defaults to the edge values of the initial field.
  std::optional<ScalarField> boundary_trace;
  std::size_t check_interval = 50;

  double delta_min() const { return delta_schedule.back(); }

  void validate() const {
    require(p > 1.0, ErrorCode::InvalidArgument, "p must exceed 1");
    require(!delta_schedule.empty(), ErrorCode::InvalidArgument, "delta_schedule is empty");
    for (std::size_t i = 0; i < delta_schedule.size(); ++i) {
      require(delta_schedule[i] > 0.0, ErrorCode::InvalidArgument, "delta_schedule entries must be positive");
      if (i > 0)
        require(delta_schedule[i] < delta_schedule[i - 1], ErrorCode::InvalidArgument,
                "delta_schedule must be strictly decreasing");
    }
    require(dt_safety > 0.0 && dt_safety <= 1.0, ErrorCode::InvalidArgument, "dt_safety must lie in (0,1]");
    require(tol_residual > 0.0, ErrorCode::InvalidArgument, "tol_residual must be positive");
    require(check_interval > 0, ErrorCode::InvalidArgument, "check_interval must be positive");
  }
};

struct SolveResult {
  ScalarField u;
  std::vector<double> residual_history;  // one entry per check
  std::vector<double> energy_history;    // one entry per check, regularized energy at the current delta
  std::vector<std::size_t> stage_ends;   // history length at the end of each delta stage
  bool converged = false;
  std::size_t active_rupture_cells = 0;  // cells with u <= delta_min
  std::size_t steps = 0;
  std::size_t rejected_steps = 0;
  double final_residual = kInf;
};

struct Snapshot {
  double t = 0.0;
  ScalarField u;
};

namespace detail {

inline double inv_pow(double u, double p) noexcept {
  if (p == 3.0) return 1.0 / (u * u * u);
  if (p == 2.0) return 1.0 / (u * u);
  return std::pow(u, -p);
}

// Discrete energy that the explicit step descends exactly:
//   E(u) = h^n [ Σ_edges (u_i - u_j)^2 / (2h^2) + Σ_cells (G_δ(u) + f u) ]
// with G_δ = -u^{1-p}/(p-1) above δ and its tangent line below, so G_δ' = max(u,δ)^{-p}.
class GradientFlow {
 public:
  GradientFlow(const ScalarField& u0, const ScalarField* f, double p, BoundaryKind kind)
      : grid_(u0.grid()), p_(p), kind_(kind), u_(u0.values()) {
    const Grid& g = grid_;
    const int n = g.dim();
    require(n <= 4, ErrorCode::InvalidArgument, "dimension");
    for (int a = 0; a < n; ++a)
      require(g.shape(a) >= 3, ErrorCode::GridTooSmall, "solver needs >= 3 cells per axis");
    if (f) {
      require(f->grid() == g, ErrorCode::SizeMismatch, "forcing grid differs from solution grid");
      f_ = f->values();
    } else {
      f_.assign(g.size(), 0.0);
    }
    links_.resize(g.size());
    fixed_.resize(g.size());
    for (std::size_t l = 0; l < g.size(); ++l) {
      const CellIndex idx = g.unravel(l);
      std::uint8_t bits = 0;
      for (int a = 0; a < n; ++a) {
        if (idx[a] + 1 < static_cast<std::int64_t>(g.shape(a))) bits |= std::uint8_t(1u << (2 * a));
        if (idx[a] > 0) bits |= std::uint8_t(1u << (2 * a + 1));
      }
      links_[l] = bits;
      fixed_[l] = kind == BoundaryKind::Dirichlet && g.on_boundary(idx);
    }
    for (auto& b : spare_) b.resize(g.size());
  }

  const std::vector<double>& values() const noexcept { return u_; }
  std::vector<double>& values() noexcept { return u_; }
  const Grid& grid() const noexcept { return grid_; }
  bool fixed(std::size_t l) const noexcept { return fixed_[l] != 0; }

  double laplacian_at(const std::vector<double>& u, std::size_t l) const noexcept {
    const std::uint8_t bits = links_[l];
    double acc = 0.0;
    for (int a = 0; a < grid_.dim(); ++a) {
      const std::size_t s = grid_.stride(a);
      if (bits & (1u << (2 * a))) acc += u[l + s] - u[l];
      if (bits & (1u << (2 * a + 1))) acc += u[l - s] - u[l];
    }
    const double h = grid_.spacing();
    return acc / (h * h);
  }

  double g_delta(double u, double delta) const noexcept {
    const double q = p_ - 1.0;
    if (u >= delta) return -inv_pow(u, p_) * u / q;
    return -inv_pow(delta, p_) * delta / q + inv_pow(delta, p_) * (u - delta);
  }

  double energy(const std::vector<double>& u, double delta) const {
    const double h = grid_.spacing();
    std::array<double, kChunkCount> partial{};
    parallel_chunks(grid_.size(), [&](std::size_t c, std::size_t b, std::size_t e) {
      double acc = 0.0;
      for (std::size_t l = b; l < e; ++l) {
        for (int a = 0; a < grid_.dim(); ++a) {
          if (links_[l] & (1u << (2 * a))) {
            const double d = u[l + grid_.stride(a)] - u[l];
            acc += d * d / (2.0 * h * h);
          }
        }
        acc += g_delta(u[l], delta) + f_[l] * u[l];
      }
      partial[c] = acc;
    });
    double total = 0.0;
    for (double v : partial) total += v;
    return total * grid_.cell_volume();
  }
  double energy(double delta) const { return energy(u_, delta); }

  /// Residual Δu - max(u,δ)^{-p} - f on free cells with u > positivity.
  double residual(double delta, double positivity) const {
    std::array<double, kChunkCount> partial{};
    parallel_chunks(grid_.size(), [&](std::size_t c, std::size_t b, std::size_t e) {
      double worst = 0.0;
      for (std::size_t l = b; l < e; ++l) {
        if (fixed_[l] || u_[l] <= positivity) continue;
        worst = std::max(worst, std::abs(laplacian_at(u_, l) - inv_pow(std::max(u_[l], delta), p_) - f_[l]));
      }
      partial[c] = worst;
    });
    return *std::max_element(partial.begin(), partial.end());
  }

  /// One explicit step from `from` into `to`.
  void step_into(const std::vector<double>& from, std::vector<double>& to, double dt, double delta) const {
    parallel_chunks(grid_.size(), [&](std::size_t, std::size_t b, std::size_t e) {
      for (std::size_t l = b; l < e; ++l) {
        if (fixed_[l]) {
          to[l] = from[l];
          continue;
        }
        const double force = laplacian_at(from, l) - inv_pow(std::max(from[l], delta), p_) - f_[l];
        to[l] = std::max(0.0, from[l] + dt * force);
      }
    });
  }

  /// Advances one accepted step, halving dt while the energy would increase. Returns the dt used.
  double advance(double dt, double delta, std::size_t& rejected) {
    const double e0 = delta == last_delta_ ? last_energy_ : energy(u_, delta);
    auto& next = spare_[0];
    for (int attempt = 0; attempt < 60; ++attempt) {
      step_into(u_, next, dt, delta);
      const double e1 = energy(next, delta);
      if (e1 <= e0 + 1e-10 * std::max(1.0, std::abs(e0))) {
        u_.swap(next);
        last_energy_ = e1;
        last_delta_ = delta;
        return dt;
      }
      ++rejected;
      dt *= 0.5;
    }
    throw Error(ErrorCode::QuadratureFailure, "energy increased at every step size");
  }

  double last_energy() const noexcept { return last_energy_; }

  /// dt = safety h^2 / (2n + p m^{-p-1} h^2), m = max(δ, h^α).
  double stable_dt(double safety, double delta) const {
    const double h = grid_.spacing();
    const double m = std::max(delta, std::pow(h, 2.0 / (p_ + 1.0)));
    return safety * h * h / (2.0 * grid_.dim() + p_ * std::pow(m, -p_ - 1.0) * h * h);
  }

 private:
  Grid grid_;
  double p_;
  BoundaryKind kind_;
  std::vector<double> u_;
  std::vector<double> f_;
  std::vector<std::uint8_t> links_;
  std::vector<std::uint8_t> fixed_;
  std::array<std::vector<double>, 1> spare_;
  double last_energy_ = kNaN;
  double last_delta_ = kNaN;
};

inline void check_initial_state(const ScalarField& init, const SolverConfig& cfg) {
  require(init.all_finite(), ErrorCode::InvalidArgument, "initial field has non-finite values");
  require(init.nonnegative(), ErrorCode::NegativeInit, "initial field has negative values");
  if (cfg.boundary == BoundaryKind::Dirichlet && cfg.boundary_trace) {
    const ScalarField& b = *cfg.boundary_trace;
    require(b.grid() == init.grid(), ErrorCode::SizeMismatch, "boundary trace grid differs from init grid");
    const Grid& g = init.grid();
    for (std::size_t l = 0; l < g.size(); ++l) {
      if (!g.on_boundary(g.unravel(l))) continue;
      require(std::abs(init[l] - b[l]) <= 1e-12 * std::max(1.0, std::abs(b[l])), ErrorCode::BoundaryMismatch,
              "initial field does not satisfy the Dirichlet trace");
    }
  }
}

}  // namespace detail

/// ∫ (|∇u|^2/2 - max(u,δ)^{1-p}/(p-1) + f u) by the midpoint rule, over a ball or the whole box.
inline double energy(const ScalarField& u, const ScalarField* f, double p, double delta,
                     const std::optional<BallRegion>& region = std::nullopt) {
  require(p > 1.0 && delta > 0.0, ErrorCode::InvalidArgument, "energy needs p > 1 and delta > 0");
  const auto grad = gradient(u);
  auto density = [&](std::size_t l) {
    const double fu = f ? (*f)[l] * u[l] : 0.0;
    return 0.5 * grad.norm2(l) - std::pow(std::max(u[l], delta), 1.0 - p) / (p - 1.0) + fu;
  };
  double acc = 0.0;
  if (region) {
    visit_ball(u.grid(), region->center, region->radius, [&](std::size_t l, double) { acc += density(l); });
  } else {
    for (std::size_t l = 0; l < u.grid().size(); ++l) acc += density(l);
  }
  return acc * u.grid().cell_volume();
}

/// Runs the delta schedule; each stage steps until the regularized residual on {u > 2δ} drops
/// below tol_residual. Converged means the final (δ_min) stage met the tolerance.
inline SolveResult solve_elliptic(const ScalarField* f, const SolverConfig& cfg, const ScalarField& init) {
  cfg.validate();
  detail::check_initial_state(init, cfg);
  ScalarField start = init;
  if (cfg.boundary == BoundaryKind::Dirichlet && cfg.boundary_trace) {
    const Grid& g = init.grid();
    for (std::size_t l = 0; l < g.size(); ++l)
      if (g.on_boundary(g.unravel(l))) start[l] = (*cfg.boundary_trace)[l];
  }
  detail::GradientFlow flow(start, f, cfg.p, cfg.boundary);
  SolveResult res;
  bool stage_met = false;
  for (std::size_t stage = 0; stage < cfg.delta_schedule.size(); ++stage) {
    const double delta = cfg.delta_schedule[stage];
    const double dt0 = flow.stable_dt(cfg.dt_safety, delta);
    stage_met = false;
    while (res.steps < cfg.max_steps) {
      double r = flow.residual(delta, 2.0 * delta);
      res.residual_history.push_back(r);
      res.energy_history.push_back(flow.energy(delta));
      if (r < cfg.tol_residual) {
        stage_met = true;
        break;
      }
      for (std::size_t k = 0; k < cfg.check_interval && res.steps < cfg.max_steps; ++k, ++res.steps)
        flow.advance(dt0, delta, res.rejected_steps);
    }
    res.stage_ends.push_back(res.residual_history.size());
    if (!stage_met) break;
  }
  res.converged = stage_met;
  res.final_residual = flow.residual(cfg.delta_min(), 2.0 * cfg.delta_min());
  res.u = ScalarField(init.grid(), flow.values(), "u");
  res.active_rupture_cells = static_cast<std::size_t>(
      std::count_if(flow.values().begin(), flow.values().end(), [&](double v) { return v <= cfg.delta_min(); }));
  return res;
}

struct NewtonConfig {
  double p = 3.0;
  double tol_residual = 1e-8;
  std::size_t max_iterations = 60;
};

/// Stationary solutions with prescribed rupture cells. Every interior cell where `init` is exactly 0
/// stays pinned at 0 (together with the boundary trace); on the remaining cells damped Newton iterations
/// solve Δu = u^{-p} + f, keeping u > 0. Isolated ruptures are saddle points of the energy, so descent
/// methods cannot reach them; the Jacobian is symmetric indefinite after row scaling (LDL^T, sparse LU as fallback).
inline SolveResult solve_pinned(const ScalarField* f, const NewtonConfig& cfg, const ScalarField& init,
                                const Mask* pinned = nullptr) {
  require(cfg.p > 1.0 && cfg.tol_residual > 0.0, ErrorCode::InvalidArgument, "bad Newton configuration");
  require(init.all_finite(), ErrorCode::InvalidArgument, "initial field has non-finite values");
  require(init.nonnegative(), ErrorCode::NegativeInit, "initial field has negative values");
  const Grid& g = init.grid();
  const int n = g.dim();
  for (int a = 0; a < n; ++a) require(g.shape(a) >= 3, ErrorCode::GridTooSmall, "solver needs >= 3 cells per axis");
  if (f) require(f->grid() == g, ErrorCode::SizeMismatch, "forcing grid differs from solution grid");
  if (pinned) require(pinned->grid() == g, ErrorCode::SizeMismatch, "pin mask grid differs from solution grid");
  const double p = cfg.p;
  const double inv_h2 = 1.0 / (g.spacing() * g.spacing());

  std::vector<std::ptrdiff_t> slot(g.size(), -1);
  std::vector<std::size_t> free_cells;
  for (std::size_t l = 0; l < g.size(); ++l) {
    if (g.on_boundary(g.unravel(l)) || init[l] == 0.0 || (pinned && (*pinned)[l])) continue;
    slot[l] = static_cast<std::ptrdiff_t>(free_cells.size());
    free_cells.push_back(l);
  }
  std::vector<double> u = init.values();
  auto laplacian_at = [&](const std::vector<double>& v, std::size_t l) {
    double lap = -2.0 * n * v[l];
    for (int a = 0; a < n; ++a) lap += v[l + g.stride(a)] + v[l - g.stride(a)];
    return lap * inv_h2;
  };
  auto forcing = [&](std::size_t l) { return f ? (*f)[l] : 0.0; };
  auto residual_at = [&](const std::vector<double>& v, std::size_t l) {
    return laplacian_at(v, l) - detail::inv_pow(v[l], p) - forcing(l);
  };
  // Newton runs on the dimensionless form  u^p (Δu - f) - 1 = 0,  whose size does not blow up at the pins.
  auto scaled_at = [&](const std::vector<double>& v, std::size_t l) {
    return std::pow(v[l], p) * (laplacian_at(v, l) - forcing(l)) - 1.0;
  };
  auto norms = [&](const std::vector<double>& v) {
    double sup = 0.0, sq = 0.0;
    for (std::size_t l : free_cells) {
      sup = std::max(sup, std::abs(residual_at(v, l)));
      const double s = scaled_at(v, l);
      sq += s * s;
    }
    return std::pair{sup, std::sqrt(sq)};
  };

  SolveResult res;
  const auto m = static_cast<Eigen::Index>(free_cells.size());
  // u^{-p} J = Δ + diag(p (Δu - f) / u) is symmetric, so the Newton system is solved in that form.
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  bool pattern_ready = false;
  auto [sup, l2] = norms(u);
  res.residual_history.push_back(sup);
  for (std::size_t it = 0; it < cfg.max_iterations && sup >= cfg.tol_residual && m > 0; ++it) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(free_cells.size() * (2 * n + 1));
    Eigen::VectorXd rhs(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      const std::size_t l = free_cells[static_cast<std::size_t>(k)];
      trip.emplace_back(k, k, p * (laplacian_at(u, l) - forcing(l)) / u[l] - 2.0 * n * inv_h2);
      for (int a = 0; a < n; ++a) {
        for (std::size_t nb : {l + g.stride(a), l - g.stride(a)})
          if (slot[nb] >= 0) trip.emplace_back(k, slot[nb], inv_h2);
      }
      rhs[k] = -scaled_at(u, l) / std::pow(u[l], p);
    }
    Eigen::SparseMatrix<double> jac(m, m);
    jac.setFromTriplets(trip.begin(), trip.end());
    if (!pattern_ready) {
      ldlt.analyzePattern(jac);
      pattern_ready = true;
    }
    ldlt.factorize(jac);
    Eigen::VectorXd du;
    if (ldlt.info() == Eigen::Success) du = ldlt.solve(rhs);
    if (ldlt.info() != Eigen::Success || !du.allFinite()) {
      lu.compute(jac);
      if (lu.info() != Eigen::Success) break;
      du = lu.solve(rhs);
      if (lu.info() != Eigen::Success || !du.allFinite()) break;
    }
    // fraction to the boundary: never lose more than 90% of a value in one step
    double t = 1.0;
    for (Eigen::Index k = 0; k < m; ++k) {
      const double v = u[free_cells[static_cast<std::size_t>(k)]];
      if (du[k] < 0.0) t = std::min(t, 0.9 * v / -du[k]);
    }
    std::vector<double> trial = u;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
      for (Eigen::Index k = 0; k < m; ++k) {
        const std::size_t l = free_cells[static_cast<std::size_t>(k)];
        trial[l] = u[l] + t * du[k];
      }
      const auto [s2, n2] = norms(trial);
      if (n2 < l2 || s2 < cfg.tol_residual) {
        u.swap(trial);
        sup = s2;
        l2 = n2;
        accepted = true;
        break;
      }
    }
    ++res.steps;
    res.residual_history.push_back(sup);
    if (!accepted) break;
  }
  res.converged = sup < cfg.tol_residual;
  res.final_residual = sup;
  res.u = ScalarField(g, std::move(u), "u");
  res.active_rupture_cells = static_cast<std::size_t>(
      std::count_if(res.u.values().begin(), res.u.values().end(), [](double v) { return v == 0.0; }));
  return res;
}

/// ∂_t u = Δu - max(u,δ_min)^{-p} - f with the elliptic stepper; snapshots at the requested times
/// (always including t = 0 and t = T).
inline std::vector<Snapshot> evolve_parabolic(const ScalarField& u0, double T, const SolverConfig& cfg,
                                              std::vector<double> snapshot_times = {},
                                              const ScalarField* f = nullptr) {
  cfg.validate();
  require(T >= 0.0, ErrorCode::InvalidArgument, "T must be nonnegative");
  detail::check_initial_state(u0, cfg);
  std::vector<Snapshot> out;
  out.push_back({0.0, u0});
  if (T == 0.0) return out;
  snapshot_times.push_back(T);
  std::sort(snapshot_times.begin(), snapshot_times.end());
  snapshot_times.erase(std::remove_if(snapshot_times.begin(), snapshot_times.end(),
                                      [&](double t) { return t <= 0.0 || t > T; }),
                       snapshot_times.end());
  snapshot_times.erase(std::unique(snapshot_times.begin(), snapshot_times.end()), snapshot_times.end());

  detail::GradientFlow flow(u0, f, cfg.p, cfg.boundary);
  const double delta = cfg.delta_min();
  const double dt_max = flow.stable_dt(cfg.dt_safety, delta);
  double t = 0.0;
  std::size_t rejected = 0, steps = 0;
  for (double target : snapshot_times) {
    while (t < target) {
      if (steps++ >= cfg.max_steps) throw Error(ErrorCode::QuadratureFailure, "max_steps exhausted before T");
      const double remaining = target - t;
      // land exactly on the snapshot time
      const double dt = remaining <= dt_max * (1 + 1e-12) ? remaining : std::min(dt_max, 0.5 * remaining);
      const double used = flow.advance(dt, delta, rejected);
      t = used == dt && dt == remaining ? target : t + used;
    }
    out.push_back({target, ScalarField(u0.grid(), flow.values(), "u")});
  }
  return out;
}

/// Smooth compactly supported cutoffs for the localized energy inequality.
struct SpaceCutoff {
  std::function<double(const Point&)> value;
  std::function<Point(const Point&)> gradient;
};
struct TimeCutoff {
  std::function<double(double)> value;
  std::function<double(double)> derivative;
};

/// φ(x) = (1 - |x-c|^2/R^2)^4 inside B_R(c).
inline SpaceCutoff bump_cutoff(const Point& center, double radius) {
  SpaceCutoff c;
  c.value = [=](const Point& x) {
    const double s = 1.0 - dist2(x, center) / (radius * radius);
    return s > 0.0 ? s * s * s * s : 0.0;
  };
  c.gradient = [=](const Point& x) {
    const double s = 1.0 - dist2(x, center) / (radius * radius);
    if (s <= 0.0) return Point::zero(x.dim());
    return (x - center) * (-8.0 * s * s * s / (radius * radius));
  };
  return c;
}

/// ψ(t) = (1 - τ^2)^4 with τ mapping (a, b) onto (-1, 1).
inline TimeCutoff bump_time_cutoff(double a, double b) {
  const double m = 0.5 * (a + b), w = 0.5 * (b - a);
  TimeCutoff c;
  c.value = [=](double t) {
    const double tau = (t - m) / w, s = 1.0 - tau * tau;
    return s > 0.0 ? s * s * s * s : 0.0;
  };
  c.derivative = [=](double t) {
    const double tau = (t - m) / w, s = 1.0 - tau * tau;
    return s > 0.0 ? -8.0 * tau * s * s * s / w : 0.0;
  };
  return c;
}

inline TimeCutoff zero_time_cutoff() {
  return {[](double) { return 0.0; }, [](double) { return 0.0; }};
}

struct EnergyInequalityReport {
  double lhs = 0.0;     // ∫∫ e φ^2 ∂_t ψ
  double rhs = 0.0;     // ∫∫ |∂_t u|^2 φ^2 ψ + 2 ∫∫ ∂_t u (∇u·∇φ) φ ψ - 2 ∫∫ e φ ψ ∂_t φ
  double defect = 0.0;  // lhs - rhs; >= 0 when the inequality holds
};

/// Localized energy inequality with e = |∇u|^2/2 - max(u,u_floor)^{1-p}/(p-1). Time integrals use the
/// midpoint rule on snapshot intervals, ∂_t u the interval difference quotient. φ does not depend on t,
/// so its time-derivative term vanishes identically.
inline EnergyInequalityReport energy_inequality_check(const std::vector<Snapshot>& snaps, double p,
                                                      const SpaceCutoff& phi, const TimeCutoff& psi,
                                                      double u_floor = 1e-12) {
  require(snaps.size() >= 2, ErrorCode::InvalidArgument, "need at least two snapshots");
  const Grid& g = snaps.front().u.grid();
  std::vector<double> phi_v(g.size());
  std::vector<Point> phi_g(g.size());
  for (std::size_t l = 0; l < g.size(); ++l) {
    const Point x = g.center(l);
    phi_v[l] = phi.value(x);
    phi_g[l] = phi.gradient(x);
  }
  EnergyInequalityReport rep;
  const double hn = g.cell_volume();
  for (std::size_t k = 0; k + 1 < snaps.size(); ++k) {
    const auto& a = snaps[k].u;
    const auto& b = snaps[k + 1].u;
    require(a.grid() == g && b.grid() == g, ErrorCode::SizeMismatch, "snapshot grids differ");
    const double dt = snaps[k + 1].t - snaps[k].t;
    require(dt > 0.0, ErrorCode::InvalidArgument, "snapshot times must increase");
    const double tm = 0.5 * (snaps[k].t + snaps[k + 1].t);
    const double psi_m = psi.value(tm), dpsi_m = psi.derivative(tm);
    if (psi_m == 0.0 && dpsi_m == 0.0) continue;
    std::vector<double> mid(g.size());
    for (std::size_t l = 0; l < g.size(); ++l) mid[l] = 0.5 * (a[l] + b[l]);
    const auto grad = gradient(ScalarField(g, mid));
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t l = 0; l < g.size(); ++l) {
      if (phi_v[l] == 0.0) continue;
      const double e = 0.5 * grad.norm2(l) - std::pow(std::max(mid[l], u_floor), 1.0 - p) / (p - 1.0);
      const double ut = (b[l] - a[l]) / dt;
      lhs += e * phi_v[l] * phi_v[l] * dpsi_m;
      rhs += ut * ut * phi_v[l] * phi_v[l] * psi_m + 2.0 * ut * grad.at(l).dot(phi_g[l]) * phi_v[l] * psi_m;
    }
    rep.lhs += lhs * hn * dt;
    rep.rhs += rhs * hn * dt;
  }
  rep.defect = rep.lhs - rep.rhs;
  return rep;
}

struct ResidualReport {
  double sup = 0.0;
  double l2 = 0.0;
  std::size_t cells = 0;
};

/// |Δu - max(u,u_floor)^{-p} - f| over interior cells at distance >= exclusion_radius from {u < u_floor}.
inline ResidualReport pde_residual(const ScalarField& u, const ScalarField* f, double p, double exclusion_radius,
                                   double u_floor = 1e-12) {
  const Grid& g = u.grid();
  const auto lap = laplacian(u);
  const Mask low = Mask::where(u, [&](double v) { return v < u_floor; });
  std::optional<ScalarField> dist_low;
  if (low.any()) dist_low = distance_transform(low);
  ResidualReport rep;
  double sq = 0.0;
  for (std::size_t l = 0; l < g.size(); ++l) {
    if (std::isnan(lap[l])) continue;
    if (dist_low && (*dist_low)[l] < exclusion_radius) continue;
    const double r =
        std::abs(lap[l] - detail::inv_pow(std::max(u[l], u_floor), p) - (f ? (*f)[l] : 0.0));
    rep.sup = std::max(rep.sup, r);
    sq += r * r;
    ++rep.cells;
  }
  rep.l2 = std::sqrt(sq * g.cell_volume());
  return rep;
}

/// Residual restricted to cells outside a fixed ball, e.g. |x| > radius about a known rupture point.
inline ResidualReport pde_residual_outside(const ScalarField& u, const ScalarField* f, double p,
                                           const BallRegion& excluded, double u_floor = 1e-12) {
  const Grid& g = u.grid();
  const auto lap = laplacian(u);
  ResidualReport rep;
  double sq = 0.0;
  for (std::size_t l = 0; l < g.size(); ++l) {
    if (std::isnan(lap[l]) || dist(g.center(l), excluded.center) <= excluded.radius) continue;
    const double r =
        std::abs(lap[l] - detail::inv_pow(std::max(u[l], u_floor), p) - (f ? (*f)[l] : 0.0));
    rep.sup = std::max(rep.sup, r);
    sq += r * r;
    ++rep.cells;
  }
  rep.l2 = std::sqrt(sq * g.cell_volume());
  return rep;
}

/// max over sampled (x, r) of (r^{-λ} ∫_{B_r(x) ∩ box} |f|^q)^{1/q}; a lower bound of the true seminorm.
inline double morrey_seminorm(const ScalarField& f, double lambda, double q, const std::vector<Point>& centers,
                              const std::vector<double>& radii) {
  require(q >= 1.0 && lambda >= 0.0, ErrorCode::InvalidArgument, "need q >= 1 and lambda >= 0");
  require(!centers.empty() && !radii.empty(), ErrorCode::EmptySample, "empty Morrey sample set");
  std::vector<double> fq(f.values().size());
  for (std::size_t l = 0; l < fq.size(); ++l) fq[l] = std::pow(std::abs(f[l]), q);
  const ScalarField absq(f.grid(), std::move(fq));
  double best = 0.0;
  for (const auto& x : centers) {
    for (double r : radii) {
      double acc = 0.0;
      visit_ball(f.grid(), x, r, [&](std::size_t l, double) { acc += absq[l]; });
      best = std::max(best, std::pow(std::pow(r, -lambda) * acc * f.grid().cell_volume(), 1.0 / q));
    }
  }
  return best;
}

struct GradientTail {
  std::vector<double> lambdas;
  std::vector<double> measures;    // ℒ^n({|∇u| > λ} ∩ region)
  std::vector<double> normalized;  // λ^{2/(1-α)} · measure
  double statistic = 0.0;          // max of normalized
  double slope = kNaN;             // log-log slope of measure against λ (nonzero measures only)
};

/// Weak-Lorentz tail of |∇u| over a geometric λ-ladder.
inline GradientTail gradient_tail(const ScalarField& u, const BallRegion& region, double p,
                                  const std::vector<double>& lambdas) {
  require(!lambdas.empty(), ErrorCode::EmptyLadder, "empty lambda ladder");
  const double alpha = homogeneity_exponent(p);
  const double expo = 2.0 / (1.0 - alpha);
  const auto grad = gradient(u);
  std::vector<double> norms;
  visit_ball(u.grid(), region.center, region.radius,
             [&](std::size_t l, double) { norms.push_back(std::sqrt(grad.norm2(l))); });
  std::sort(norms.begin(), norms.end());
  GradientTail out;
  out.lambdas = lambdas;
  std::vector<double> lx, ly;
  for (double lam : lambdas) {
    const auto above = norms.end() - std::upper_bound(norms.begin(), norms.end(), lam);
    const double m = static_cast<double>(above) * u.grid().cell_volume();
    out.measures.push_back(m);
    out.normalized.push_back(std::pow(lam, expo) * m);
    out.statistic = std::max(out.statistic, out.normalized.back());
    if (m > 0.0) {
      lx.push_back(std::log(lam));
      ly.push_back(std::log(m));
    }
  }
  if (lx.size() >= 2) out.slope = fit_slope(lx, ly);
  return out;
}

/// Harmonic extension of the boundary values of `trace` by SOR; a blend used as solver init.
inline ScalarField harmonic_extension(const ScalarField& trace, double tol = 1e-10, std::size_t max_sweeps = 100000) {
  const Grid& g = trace.grid();
  ScalarField u = trace;
  double mean = 0.0;
  std::size_t nb = 0;
  for (std::size_t l = 0; l < g.size(); ++l)
    if (g.on_boundary(g.unravel(l))) {
      mean += trace[l];
      ++nb;
    }
  mean /= static_cast<double>(std::max<std::size_t>(nb, 1));
  std::vector<std::uint8_t> interior(g.size());
  for (std::size_t l = 0; l < g.size(); ++l) {
    interior[l] = !g.on_boundary(g.unravel(l));
    if (interior[l]) u[l] = mean;
  }
  std::size_t longest = 0;
  for (int a = 0; a < g.dim(); ++a) longest = std::max(longest, g.shape(a));
  const double omega = 2.0 / (1.0 + std::sin(std::numbers::pi / static_cast<double>(longest)));
  const int n = g.dim();
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double change = 0.0;
    for (std::size_t l = 0; l < g.size(); ++l) {
      if (!interior[l]) continue;
      double acc = 0.0;
      for (int a = 0; a < n; ++a) acc += u[l + g.stride(a)] + u[l - g.stride(a)];
      const double delta = omega * (acc / (2.0 * n) - u[l]);
      u[l] += delta;
      change = std::max(change, std::abs(delta));
    }
    if (change < tol) break;
  }
  u.set_name("u_init");
  return u;
}

/// Cells with u <= threshold grouped into 3^n-connected clusters; each cluster is represented by
/// its lowest cell (ties: lowest index).
inline std::vector<std::size_t> rupture_clusters(const ScalarField& u, double threshold) {
  const Grid& g = u.grid();
  const int n = g.dim();
  std::vector<std::uint8_t> seen(g.size(), 0);
  std::vector<std::size_t> reps, stack;
  int neighbours = 1;
  for (int i = 0; i < n; ++i) neighbours *= 3;
  for (std::size_t start = 0; start < g.size(); ++start) {
    if (seen[start] || !(u[start] <= threshold)) continue;
    std::size_t best = start;
    stack.push_back(start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t l = stack.back();
      stack.pop_back();
      if (u[l] < u[best] || (u[l] == u[best] && l < best)) best = l;
      const CellIndex idx = g.unravel(l);
      for (int code = 0; code < neighbours; ++code) {
        CellIndex nb = idx;
        int c = code;
        bool ok = true;
        for (int a = 0; a < n; ++a, c /= 3) {
          nb[a] += c % 3 - 1;
          if (nb[a] < 0 || nb[a] >= static_cast<std::int64_t>(g.shape(a))) ok = false;
        }
        if (!ok) continue;
        const std::size_t m = g.linear(nb);
        if (seen[m] || !(u[m] <= threshold)) continue;
        seen[m] = 1;
        stack.push_back(m);
      }
    }
    reps.push_back(best);
  }
  return reps;
}

struct ScaleProfile {
  std::vector<double> radii;
  std::vector<double> values;
  double min = kInf;
  double max = 0.0;
};

/// sup_{B_r(x)} u / r^α over a radius ladder.
inline ScaleProfile nondegeneracy_profile(const ScalarField& u, const Point& x, double p,
                                          const std::vector<double>& radii) {
  require(!radii.empty(), ErrorCode::EmptyLadder, "empty radius ladder");
  const double alpha = homogeneity_exponent(p);
  ScaleProfile out;
  out.radii = radii;
  for (double r : radii) {
    double sup = 0.0;
    visit_ball(u.grid(), x, r, [&](std::size_t l, double) { sup = std::max(sup, u[l]); });
    const double v = sup / std::pow(r, alpha);
    out.values.push_back(v);
    out.min = std::min(out.min, v);
    out.max = std::max(out.max, v);
  }
  return out;
}

struct InteriorEstimates {
  ScaleProfile gradient;  // ∫_{B_r} |∇u|^2 / r^{2α+n-2}
  ScaleProfile singular;  // ∫_{B_r} (r^α max(u,δ)^{-p} + max(u,δ)^{1-p}) / r^{2α+n-2}
};

inline InteriorEstimates interior_estimates(const ScalarField& u, const Point& x, double p, double delta,
                                            const std::vector<double>& radii) {
  require(!radii.empty(), ErrorCode::EmptyLadder, "empty radius ladder");
  const double alpha = homogeneity_exponent(p);
  const int n = u.grid().dim();
  const auto grad = gradient(u);
  InteriorEstimates out;
  for (double r : radii) {
    double gsum = 0.0, ssum = 0.0;
    visit_ball(u.grid(), x, r, [&](std::size_t l, double) {
      const double v = std::max(u[l], delta);
      gsum += grad.norm2(l);
      ssum += std::pow(r, alpha) * detail::inv_pow(v, p) + std::pow(v, 1.0 - p);
    });
    const double scale = std::pow(r, 2.0 * alpha + n - 2.0) / u.grid().cell_volume();
    for (auto* prof : {&out.gradient, &out.singular}) prof->radii.push_back(r);
    const double gv = gsum / scale, sv = ssum / scale;
    out.gradient.values.push_back(gv);
    out.singular.values.push_back(sv);
    out.gradient.min = std::min(out.gradient.min, gv);
    out.gradient.max = std::max(out.gradient.max, gv);
    out.singular.min = std::min(out.singular.min, sv);
    out.singular.max = std::max(out.singular.max, sv);
  }
  return out;
}

}  // namespace rupture
