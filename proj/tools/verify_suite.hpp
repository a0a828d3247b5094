#pragma once

// Property suite behind `rupture-lab verify` and the acceptance binary: one check per criterion.

#include <rupture/density.hpp>
#include <rupture/exact.hpp>
#include <rupture/field_io.hpp>
#include <rupture/gmt.hpp>
#include <rupture/scenarios.hpp>
#include <rupture/symmetry.hpp>

#include <algorithm>
#include <chrono>
#include <map>
#include <optional>
#include <cstring>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace rupture::verify {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

struct SuiteOptions {
  bool full = false;
  std::uint64_t seed = 1;
  std::function<void(const CriterionResult&)> on_result;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

class Detail {
 public:
  template <class T>
  Detail& operator()(const std::string& key, const T& v) {
    if (!first_) os_ << ", ";
    first_ = false;
    os_ << key << "=" << v;
    return *this;
  }
  std::string str() const { return os_.str(); }

 private:
  std::ostringstream os_{[] {
    std::ostringstream o;
    o.precision(6);
    return o;
  }()};
  bool first_ = true;
};

// ∫_0^∞ φ(t^2) dt: closed form on [0, √8], where φ(t^2) = 10 - t^2, and 8-point Gauss-Legendre on
// [√8, √10], exact there because φ(t^2) is a degree-10 polynomial in t.
inline double cutoff_line_integral() {
  static constexpr std::array<double, 8> x = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                              -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                              0.7966664774136267,  0.9602898564975363};
  static constexpr std::array<double, 8> w = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                              0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                              0.2223810344533745, 0.1012285362903763};
  const double a = std::sqrt(8.0), b = std::sqrt(10.0);
  double tail = 0.0;
  for (std::size_t i = 0; i < 8; ++i) {
    const double t = 0.5 * (a + b) + 0.5 * (b - a) * x[i];
    tail += w[i] * Cutoff::value(t * t);
  }
  return 10.0 * a - a * a * a / 3.0 + 0.5 * (b - a) * tail;
}

struct SolvedCase {
  std::uint64_t seed;
  std::size_t half;
  ScalarField u;
  std::vector<Point> ruptures;
};

inline void lattice_in_ball(const Point& c, double radius, double pitch, std::vector<Point>& out) {
  const int m = static_cast<int>(std::floor(radius / pitch));
  for (int i = -m; i <= m; ++i)
    for (int j = -m; j <= m; ++j) {
      const Point x{c[0] + i * pitch, c[1] + j * pitch};
      if (dist2(x, c) < radius * radius) out.push_back(x);
    }
}

}  // namespace detail

inline std::vector<CriterionResult> run_suite(const SuiteOptions& opt) {
  using detail::Clock;
  using detail::Detail;
  std::vector<CriterionResult> results;
  const auto suite_start = Clock::now();
  auto record = [&](int id, std::string name, auto&& body) {
    CriterionResult r;
    r.id = id;
    r.name = std::move(name);
    const auto t0 = Clock::now();
    try {
      Detail d;
      r.pass = body(d);
      r.detail = d.str();
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = detail::seconds_since(t0);
    results.push_back(r);
    if (opt.on_result) opt.on_result(r);
  };
  const double p = 3.0;
  const HomogeneousSolution planar(2, p);
  const double two_alpha = 2.0 * homogeneity_exponent(p);

  record(1, "exact-solution residual", [&](Detail& d) {
    std::vector<double> sup;
    for (std::size_t n : {128u, 256u, 512u}) {
      const auto u = homogeneous_field(planar, Grid::symmetric(2, n, 1.0 / static_cast<double>(n)));
      sup.push_back(pde_residual_outside(u, nullptr, p, BallRegion(Point{0.0, 0.0}, 0.1)).sup);
    }
    const double r1 = sup[0] / sup[1], r2 = sup[1] / sup[2];
    d("sup_h128", sup[0])("sup_h256", sup[1])("sup_h512", sup[2])("ratio1", r1)("ratio2", r2);
    return r1 >= 3.0 && r1 <= 5.0 && r2 >= 3.0 && r2 <= 5.0;
  });

  // criteria 2, 3, 5, 6, 11, 12 share the h = 1/512 exact field; 10r <= 2.5 needs half-width 2.52
  {
    const double h = 1.0 / 512.0;
    const auto u = homogeneous_field(planar, Grid::symmetric(2, 1290, h));
    const DensityEvaluator ev(u, nullptr, p);
    const Point o{0.0, 0.0};
    const auto ladder = geometric_ladder(0.05, 0.25, 9);
    std::optional<DensityProfile> prof;
    auto profile = [&]() -> const DensityProfile& {
      if (!prof) prof = density_profile(ev, o, ladder);
      return *prof;
    };

    record(2, "density constancy", [&](Detail& d) {
      const auto& pr = profile();
      const double oracle = -std::numbers::pi * detail::cutoff_line_integral();
      double lo = kInf, hi = -kInf, worst = 0.0;
      for (const auto& v : pr.values) {
        lo = std::min(lo, v.theta);
        hi = std::max(hi, v.theta);
        worst = std::max(worst, std::abs(v.theta / oracle - 1.0));
      }
      const double variation = (hi - lo) / std::abs(oracle);
      d("theta_min", lo)("theta_max", hi)("oracle", oracle)("variation", variation)("max_rel_err", worst)(
          "truncated", pr.truncated);
      return pr.values.size() == ladder.size() && variation < 0.01 && worst < 0.01;
    });

    record(3, "frequency identity", [&](Detail& d) {
      const auto& pr = profile();
      double worst = 0.0;
      for (const auto& v : pr.values) worst = std::max(worst, std::abs(v.I_f / two_alpha - 1.0));
      // positive point: I_f should fall as r shrinks
      auto down = geometric_ladder(0.01, 0.16, 9);
      std::reverse(down.begin(), down.end());
      const Point x{0.5, 0.0};
      bool monotone = true;
      double prev = kInf, last = kNaN;
      for (double r : down) {
        const double I = ev.evaluate(x, r).I_f;
        monotone = monotone && I < prev;
        prev = last = I;
      }
      d("max_rel_err_at_rupture", worst)("positive_I_f_smallest_r", last)("monotone", monotone);
      return worst < 0.01 && monotone && last < 0.1 * two_alpha;
    });

    record(5, "H-D_f identity", [&](Detail& d) {
      const auto rep = hd_identity_check(ev, o, ladder);
      d("max_relative_defect", rep.max_relative_defect);
      return rep.max_relative_defect < 0.01;
    });

    record(6, "Minkowski exponent", [&](Detail& d) {
      const auto mc = sublevel_content(u, 0.5, p, BallRegion(o, 1.0), geometric_ladder(8.0 * h, 0.25, 10));
      d("slope", mc.slope)("epsilon", 0.5);
      return std::abs(mc.slope - 2.0) <= 0.2;
    });

    // k = 0 stratum at scale r, ε = 0.1, sampled on a pitch-r lattice in B_{8r} ∩ B_1
    struct StratumRun {
      double r;
      StratumReport rep;
    };
    std::vector<StratumRun> strata;
    auto run_strata = [&]() -> const std::vector<StratumRun>& {
      if (!strata.empty()) return strata;
      for (int j = 3; j <= 7; ++j) {
        const double r = std::ldexp(1.0, -j);
        std::vector<Point> pts;
        detail::lattice_in_ball(o, std::min(1.0, 8.0 * r), r, pts);
        SymmetryOptions so;
        so.seed = opt.seed;
        strata.push_back({r, quantitative_stratum(u, p, 0, 0.1, r, 0.25, pts, so)});
      }
      return strata;
    };

    record(11, "covering content", [&](Detail& d) {
      double lo = kInf, hi = 0.0;
      bool exact = true;
      std::ostringstream counts;
      for (const auto& run : run_strata()) {
        const auto flagged = run.rep.flagged();
        const auto vc = vitali_cover(flagged, run.r);
        exact = exact && vc.disjoint && vc.covers;
        const double c = static_cast<double>(vc.kept.size());
        lo = std::min(lo, c);
        hi = std::max(hi, c);
        counts << (counts.tellp() > 0 ? "/" : "") << vc.kept.size();
      }
      d("counts", counts.str())("C_M", hi)("max_over_min", hi / lo)("disjoint_and_covering", exact);
      return lo > 0.0 && hi / lo <= 2.0 && exact;
    });

    record(12, "stratum inclusion", [&](Detail& d) {
      // ε' is calibrated as half the smallest u/r^α over unflagged samples, across every scale
      double star = kInf;
      for (const auto& run : run_strata())
        for (const auto& sp : run.rep.points)
          if (!sp.flagged) star = std::min(star, u.interpolate(sp.x) / std::sqrt(run.r));
      const double eps_prime = 0.5 * star;
      bool included = true;
      std::size_t sublevel = 0;
      for (const auto& run : run_strata())
        for (const auto& sp : run.rep.points)
          if (u.interpolate(sp.x) < eps_prime * std::sqrt(run.r)) {
            ++sublevel;
            included = included && sp.flagged;
          }
      d("eps_prime", eps_prime)("sublevel_samples", sublevel)("included", included);
      return std::isfinite(eps_prime) && eps_prime > 0.0 && sublevel > strata.size() && included;
    });
  }

  // criteria 4 and 13 share the solved fields
  std::vector<detail::SolvedCase> solved;
  auto solve_cases = [&]() -> const std::vector<detail::SolvedCase>& {
    if (!solved.empty()) return solved;
    const int seeds = opt.full ? 5 : 3;
    for (int s = 0; s < seeds; ++s)
      for (std::size_t half : {64u, 128u}) {
        const auto pr = seeded_rupture_problem(opt.seed + static_cast<std::uint64_t>(s), half);
        auto res = solve_rupture_problem(pr);
        require(res.converged, ErrorCode::QuadratureFailure, "seeded rupture problem did not converge");
        detail::SolvedCase c{opt.seed + static_cast<std::uint64_t>(s), half, std::move(res.u), {}};
        for (auto l : rupture_clusters(c.u, 0.0)) c.ruptures.push_back(c.u.grid().center(l));
        solved.push_back(std::move(c));
      }
    return solved;
  };

  record(4, "monotonicity", [&](Detail& d) {
    const auto ladder = geometric_ladder(0.03, 0.085, 12);
    bool ok = true;
    std::ostringstream defects;
    std::map<std::uint64_t, std::array<double, 2>> worst;
    for (const auto& c : solve_cases()) {
      const double h = c.u.grid().spacing();
      const DensityEvaluator ev(c.u, nullptr, p);
      double w = 0.0;
      ok = ok && !c.ruptures.empty();
      for (const auto& x : c.ruptures) w = std::max(w, density_profile(ev, x, ladder).monotone_defect);
      worst[c.seed][c.half == 64 ? 0 : 1] = w;
      ok = ok && w <= 10.0 * h;
      defects << (defects.tellp() > 0 ? " " : "") << c.seed << ":" << c.half << ":" << w;
    }
    double shrink = kInf;
    for (const auto& [seed, w] : worst) shrink = std::min(shrink, w[0] / w[1]);
    d("defects(seed:half:value)", defects.str())("min_shrink", shrink);
    return ok && shrink >= 2.0;
  });

  record(13, "nondegeneracy", [&](Detail& d) {
    double lo = kInf, hi = 0.0;
    for (const auto& c : solve_cases()) {
      if (c.half != 128) continue;
      const double h = c.u.grid().spacing();
      for (const auto& x : c.ruptures) {
        std::vector<double> radii;
        for (double r = 0.5; r >= 4.0 * h; r *= 0.5)
          if (r <= c.u.grid().distance_to_boundary(x)) radii.push_back(r);
        const auto prof = nondegeneracy_profile(c.u, x, p, radii);
        lo = std::min(lo, prof.min);
        hi = std::max(hi, prof.max);
      }
    }
    d("c", lo)("C", hi);
    return lo > 0.0 && std::isfinite(hi) && hi / lo <= 4.0;
  });

  record(7, "gradient weak-Lorentz tail", [&](Detail& d) {
    // {|∇u| > 1} = B_{1/2}, so a grid over [-0.6, 0.6]^2 captures the whole set inside B_1
    const auto u = homogeneous_field(planar, Grid::symmetric(2, 1229, 1.0 / 2048.0));
    const auto tail = gradient_tail(u, BallRegion(Point{0.0, 0.0}, 1.0), p, geometric_ladder(1.0, 8.0, 7));
    double lo = kInf, hi = 0.0, worst = 0.0;
    for (double v : tail.normalized) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      worst = std::max(worst, std::abs(v / (std::numbers::pi / 4.0) - 1.0));
    }
    d("min", lo)("max", hi)("max_rel_err_vs_pi_over_4", worst)("slope", tail.slope);
    return (hi - lo) / lo <= 0.05 && worst <= 0.05 && std::abs(tail.slope + 4.0) <= 0.2;
  });

  std::mt19937_64 rng(opt.seed);
  auto random_measure = [&](int n, std::size_t atoms) {
    std::uniform_real_distribution<double> U(-1.0, 1.0), W(0.1, 2.0);
    AtomicMeasure mu(n);
    for (std::size_t i = 0; i < atoms; ++i) {
      Point y(n);
      for (int a = 0; a < n; ++a) y[a] = U(rng);
      mu.add(y, W(rng));
    }
    return mu;
  };
  const AtomicMeasure three({Point{0.0, 0.0}, Point{1.0, 0.0}, Point{0.0, 1.0}}, {1.0, 1.0, 1.0});

  record(8, "displacement oracle", [&](Detail& d) {
    double worst = 0.0;
    std::uniform_int_distribution<int> dim(1, 4);
    std::uniform_int_distribution<std::size_t> count(2, 64);
    for (int t = 0; t < 50; ++t) {
      const int n = dim(rng);
      const int k = std::uniform_int_distribution<int>(0, n)(rng);
      const auto mu = random_measure(n, count(rng));
      const double a = displacement(mu, Point::zero(n), 1.2, k);
      const double b = displacement_bruteforce(mu, Point::zero(n), 1.2, k, opt.seed + 100 + static_cast<std::uint64_t>(t));
      worst = std::max(worst, std::abs(a - b) / std::max(a, 1e-300) * (a > 1e-15 ? 1.0 : 0.0));
      if (a <= 1e-15) worst = std::max(worst, std::abs(b) > 1e-15 ? 1.0 : 0.0);
    }
    const double worked = displacement(three, Point{0.0, 0.0}, 2.0, 1);
    d("max_rel_diff", worst)("three_atom", worked);
    return worst <= 1e-9 && std::abs(worked - 1.0 / 24.0) <= 1e-12;
  });

  record(9, "moment identity", [&](Detail& d) {
    double worst = 0.0;
    std::vector<std::pair<AtomicMeasure, BallRegion>> cases;
    cases.emplace_back(three, BallRegion(Point{0.0, 0.0}, 5.0));
    for (int t = 0; t < 40; ++t) {
      const int n = 1 + t % 4;
      cases.emplace_back(random_measure(n, 3 + static_cast<std::size_t>(t)), BallRegion(Point::zero(n), 1.5));
    }
    for (const auto& [mu, ball] : cases)
      worst = std::max(worst, moment_identity_residual(mu, ball, moment_spectrum(mu, ball)));
    d("measures", cases.size())("max_residual", worst);
    return worst <= 1e-10;
  });

  record(10, "rectifiability integral", [&](Detail& d) {
    AtomicMeasure circle(2);
    const std::size_t na = 20000;
    for (std::size_t i = 0; i < na; ++i) {
      const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(na);
      circle.add(Point{std::cos(t), std::sin(t)}, 2.0 * std::numbers::pi / static_cast<double>(na));
    }
    const Point x{1.0, 0.0};
    const double a = rectifiability_integral(circle, x, geometric_ladder(1.0 / 64.0, 0.5, 11), 1).integral;
    const double b = rectifiability_integral(circle, x, geometric_ladder(1.0 / 256.0, 0.5, 15), 1).integral;
    const double change = std::abs(b - a) / a;
    // uniform cloud, weights ω_1 a at pitch a = s_min: the integral per log(1/s_min) must not level off
    std::vector<double> per_log;
    for (int j = 4; j <= 6; ++j) {
      const double pitch = std::ldexp(1.0, -j);
      AtomicMeasure cloud(2);
      const int m = static_cast<int>(std::round(1.0 / pitch));
      for (int i = -m; i <= m; ++i)
        for (int k = -m; k <= m; ++k) cloud.add(Point{i * pitch, k * pitch}, 2.0 * pitch);
      const double I = rectifiability_integral(cloud, Point{0.0, 0.0}, geometric_ladder(pitch, 0.5, j), 1).integral;
      per_log.push_back(I / std::log(1.0 / pitch));
    }
    const bool diverging = per_log[1] >= per_log[0] && per_log[2] >= per_log[1];
    std::ostringstream growth;
    growth << per_log[0] << "/" << per_log[1] << "/" << per_log[2];
    d("circle", a)("circle_extended", b)("change", change)("cloud_per_log", growth.str());
    return std::isfinite(a) && change < 0.05 && diverging;
  });

  record(14, "ODE oracle", [&](Detail& d) {
    const double eps = 0.1, lambda = 2.0 / (p - 1.0);
    const auto sol = ode_profile(p, eps, 20.0);
    double worst = 0.0;
    const double step = 1e-5;
    for (int i = 0; i <= 200; ++i) {
      const double r = i / 200.0;
      const double up = (sol.value(r + step) - sol.value(r - step)) / (2.0 * step);
      const double rhs = lambda * (std::pow(eps, 1.0 - p) - std::pow(sol.value(r), 1.0 - p));
      worst = std::max(worst, std::abs(up * up - rhs) / std::max(1.0, rhs));
    }
    d("max_first_integral_defect", worst)("u0", sol.value(0.0));
    return worst <= 1e-6 && sol.value(0.0) == eps;
  });

  record(15, "infrastructure", [&](Detail& d) {
    std::uniform_real_distribution<double> U(-1e3, 1e3);
    const Grid g = Grid::box(2, 37, 1.3);
    const auto f = ScalarField::sample(g, [&](const Point&) { return U(rng); });
    const auto bytes = encode_field(f);
    const auto back = decode_field(bytes);
    const bool bit_exact = back.grid().size() == f.grid().size() &&
                           std::memcmp(back.values().data(), f.values().data(), f.values().size() * sizeof(double)) == 0 &&
                           encode_field(back) == bytes;
    std::bernoulli_distribution coin(0.02);
    bool edt = true;
    const Grid m64 = Grid::box(2, 64, 1.0);
    for (int t = 0; t < 20; ++t) {
      Mask m(m64);
      for (std::size_t l = 0; l < m64.size(); ++l) m.set(l, coin(rng));
      if (!m.any()) m.set(0, true);
      const auto dt = distance_transform(m);
      for (std::size_t l = 0; l < m64.size(); ++l) {
        double best = kInf;
        for (std::size_t q = 0; q < m64.size(); ++q)
          if (m[q]) best = std::min(best, dist2(m64.center(l), m64.center(q)));
        edt = edt && std::abs(dt[l] - std::sqrt(best)) <= 1e-12;
      }
    }
    const double elapsed = detail::seconds_since(suite_start);
    d("rfld_bit_exact", bit_exact)("edt_matches", edt)("suite_seconds", elapsed);
    return bit_exact && edt && elapsed < 300.0;
  });

  std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return results;
}

}  // namespace rupture::verify
