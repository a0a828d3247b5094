#pragma once

// Blow-ups, k-symmetric fits and quantitative strata.

#include <rupture/field_ops.hpp>
#include <rupture/parallel.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <map>
#include <random>
#include <string>

namespace rupture {

/// Orthonormal k-frame in R^n (k = 0 is the empty frame).
struct Frame {
  int n = 0;
  std::vector<Point> vectors;
  std::string source = "axis-scan";  // axis-scan, random-scan or moment-spectrum

  int k() const noexcept { return static_cast<int>(vectors.size()); }
  /// Component of y orthogonal to span(vectors).
  Point perp(const Point& y) const noexcept {
    Point out = y;
    for (const auto& v : vectors) out -= v * y.dot(v);
    return out;
  }
};

/// T_{x,r}(u - u(x)) sampled on the (2m+1)^n reference lattice of [-1,1]^n; NaN outside B_1 or the box.
struct BlowUp {
  Point x;
  double r = 0.0;
  double alpha = 0.0;
  ScalarField values;
  double clipped_fraction = 0.0;
};

inline Grid reference_grid(int n, std::size_t m) { return Grid::symmetric(n, m, 1.0 / static_cast<double>(m)); }

inline std::size_t default_reference_half(int n) { return n <= 2 ? 16 : (n == 3 ? 8 : 4); }

inline BlowUp blow_up(const ScalarField& u, const Point& x, double r, double alpha, std::size_t m = 0) {
  require(r > 0.0, ErrorCode::InvalidArgument, "blow-up scale must be positive");
  const int n = u.grid().dim();
  if (m == 0) m = default_reference_half(n);
  const double ux = u.interpolate(x);
  require(!std::isnan(ux), ErrorCode::EmptyIntersection, "blow-up center outside the box");
  BlowUp b{x, r, alpha, ScalarField(reference_grid(n, m), kNaN, "blowup"), 0.0};
  const double scale = std::pow(r, -alpha);
  std::size_t in_ball = 0, missing = 0;
  const Grid& rg = b.values.grid();
  for (std::size_t l = 0; l < rg.size(); ++l) {
    const Point y = rg.center(l);
    if (y.norm2() > 1.0) continue;
    ++in_ball;
    const double v = u.interpolate(x + y * r);
    if (std::isnan(v)) {
      ++missing;
      continue;
    }
    b.values[l] = scale * (v - ux);
  }
  require(missing < in_ball, ErrorCode::EmptyIntersection, "blow-up ball lies outside the box");
  b.clipped_fraction = static_cast<double>(missing) / static_cast<double>(in_ball);
  return b;
}

/// T*_{x,r} f(y) = r^{2-α} f(x + r y) on the same reference lattice.
inline ScalarField scale_forcing(const ScalarField& f, const Point& x, double r, double alpha, std::size_t m = 0) {
  require(r > 0.0, ErrorCode::InvalidArgument, "blow-up scale must be positive");
  const int n = f.grid().dim();
  if (m == 0) m = default_reference_half(n);
  ScalarField out(reference_grid(n, m), kNaN, "forcing_blowup");
  const double scale = std::pow(r, 2.0 - alpha);
  for (std::size_t l = 0; l < out.grid().size(); ++l) {
    const Point y = out.grid().center(l);
    if (y.norm2() > 1.0) continue;
    const double v = f.interpolate(x + y * r);
    if (!std::isnan(v)) out[l] = scale * v;
  }
  return out;
}

struct SymmetryFit {
  int k = 0;
  Frame frame;
  std::vector<double> angular_profile;  // g per angular bin of the unit sphere in V-perp
  double defect = kInf;                 // sup over B_1 of |w - h|
  std::string method;                   // frame source, or "zero" for k = n
};

namespace detail {

// Angular bin of a unit vector in a d-dimensional space: sign for d = 1, angle for d = 2,
// cube-map cells for d >= 3.
inline std::size_t angular_bin(const std::array<double, kMaxDim>& e, int d) {
  if (d == 1) return e[0] >= 0.0 ? 1 : 0;
  if (d == 2) {
    constexpr int kBins = 32;
    const double a = std::atan2(e[1], e[0]) + std::numbers::pi;
    return static_cast<std::size_t>(std::min(kBins - 1, static_cast<int>(a / (2.0 * std::numbers::pi) * kBins)));
  }
  constexpr int kCells = 6;
  std::size_t key = 0;
  for (int i = 0; i < d; ++i) {
    const int c = std::clamp(static_cast<int>((e[i] + 1.0) * 0.5 * kCells), 0, kCells - 1);
    key = key * kCells + static_cast<std::size_t>(c);
  }
  return key;
}

inline double median(std::vector<double>& v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  return m;
}

struct Sample {
  Point y;
  double w;
};

inline std::vector<Sample> ball_samples(const BlowUp& b) {
  std::vector<Sample> out;
  const Grid& g = b.values.grid();
  for (std::size_t l = 0; l < g.size(); ++l)
    if (!std::isnan(b.values[l])) out.push_back({g.center(l), b.values[l]});
  return out;
}

inline SymmetryFit fit_frame(const std::vector<Sample>& samples, const Frame& frame, double alpha) {
  SymmetryFit fit;
  fit.k = frame.k();
  fit.frame = frame;
  fit.method = frame.source;
  const int n = frame.n;
  const int d = n - frame.k();
  if (d == 0) {
    fit.defect = 0.0;
    for (const auto& s : samples) fit.defect = std::max(fit.defect, std::abs(s.w));
    return fit;
  }
  // orthonormal basis of V-perp, so directions can be binned in intrinsic coordinates
  std::vector<Point> basis;
  for (int i = 0; i < n && static_cast<int>(basis.size()) < d; ++i) {
    Point e(n);
    e[i] = 1.0;
    Point q = frame.perp(e);
    for (const auto& b : basis) q -= b * q.dot(b);
    if (q.norm() > 1e-8) basis.push_back(q * (1.0 / q.norm()));
  }
  struct Projected {
    double rho, w;
    std::size_t bin;
  };
  std::vector<Projected> proj;
  proj.reserve(samples.size());
  std::map<std::size_t, std::vector<double>> by_bin;
  for (const auto& s : samples) {
    std::array<double, kMaxDim> c{};
    double rho2 = 0.0;
    for (int i = 0; i < d; ++i) {
      c[i] = s.y.dot(basis[i]);
      rho2 += c[i] * c[i];
    }
    const double rho = std::sqrt(rho2);
    if (rho < 1e-12) {
      proj.push_back({0.0, s.w, 0});
      continue;
    }
    for (int i = 0; i < d; ++i) c[i] /= rho;
    const std::size_t bin = angular_bin(c, d);
    proj.push_back({rho, s.w, bin});
    by_bin[bin].push_back(s.w / std::pow(rho, alpha));
  }
  std::map<std::size_t, double> g;
  for (auto& [bin, vals] : by_bin) {
    g[bin] = median(vals);
    fit.angular_profile.push_back(g[bin]);
  }
  fit.defect = 0.0;
  for (const auto& p : proj) {
    const double h = p.rho == 0.0 ? 0.0 : std::pow(p.rho, alpha) * g[p.bin];
    fit.defect = std::max(fit.defect, std::abs(p.w - h));
  }
  return fit;
}

inline Frame orthonormalize(int n, std::vector<Point> vs, std::string source) {
  Frame f{n, {}, std::move(source)};
  for (auto& v : vs) {
    for (const auto& q : f.vectors) v -= q * v.dot(q);
    const double nv = v.norm();
    if (nv > 1e-10) f.vectors.push_back(v * (1.0 / nv));
  }
  return f;
}

}  // namespace detail

/// Axis-aligned k-frames: every k-subset of the coordinate axes.
inline std::vector<Frame> axis_frames(int n, int k) {
  std::vector<Frame> out;
  std::vector<bool> pick(static_cast<std::size_t>(n), false);
  std::fill(pick.begin(), pick.begin() + k, true);
  do {
    Frame f{n, {}};
    for (int i = 0; i < n; ++i) {
      if (!pick[static_cast<std::size_t>(i)]) continue;
      Point e(n);
      e[i] = 1.0;
      f.vectors.push_back(e);
    }
    out.push_back(f);
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return out;
}

inline std::vector<Frame> random_frames(int n, int k, std::size_t count, std::uint64_t seed) {
  std::vector<Frame> out;
  if (k == 0 || k == n) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  while (out.size() < count) {
    std::vector<Point> vs;
    for (int j = 0; j < k; ++j) {
      Point v(n);
      for (int i = 0; i < n; ++i) v[i] = gauss(rng);
      vs.push_back(v);
    }
    auto f = detail::orthonormalize(n, vs, "random-scan");
    if (f.k() == k) out.push_back(f);
  }
  return out;
}

/// Best fit of w by h(y) = |y_⊥|^α g(y_⊥/|y_⊥|) over the candidate frames (h ≡ 0 when k = n).
inline SymmetryFit fit_k_symmetric(const BlowUp& w, int k, const std::vector<Frame>& candidates) {
  const int n = w.values.grid().dim();
  require(k >= 0 && k <= n, ErrorCode::InvalidArgument, "k must lie in [0, n]");
  const auto samples = detail::ball_samples(w);
  if (k == n) {
    auto fit = detail::fit_frame(samples, axis_frames(n, n).front(), w.alpha);
    fit.method = "zero";
    return fit;
  }
  require(!candidates.empty(), ErrorCode::NoCandidates, "no candidate frames");
  SymmetryFit best;
  for (const auto& f : candidates) {
    require(f.n == n && f.k() == k, ErrorCode::InvalidArgument, "candidate frame has the wrong shape");
    auto fit = detail::fit_frame(samples, f, w.alpha);
    if (fit.defect < best.defect) best = std::move(fit);
  }
  return best;
}

struct SymmetryOptions {
  std::size_t reference_half = 0;  // 0: default per dimension
  std::size_t random_frames = 32;
  std::uint64_t seed = 1;
};

struct SymmetryReport {
  int k = 0;
  double defect = kInf;              // best over j-symmetric fits, j >= k (each is also k-symmetric)
  SymmetryFit fit;
  double gradient_criterion = kInf;  // inf over candidate frames of s^{2-2α-n} ∫_{B_s} |V·∇u|^2
  bool symmetric(double eps) const noexcept { return defect < eps; }
};

namespace detail {

inline Point central_gradient(const ScalarField& u, std::size_t l) {
  const Grid& g = u.grid();
  const CellIndex idx = g.unravel(l);
  Point d(g.dim());
  for (int a = 0; a < g.dim(); ++a) {
    const std::size_t s = g.stride(a);
    const auto last = static_cast<std::int64_t>(g.shape(a)) - 1;
    if (idx[a] == 0)
      d[a] = (u[l + s] - u[l]) / g.spacing();
    else if (idx[a] == last)
      d[a] = (u[l] - u[l - s]) / g.spacing();
    else
      d[a] = (u[l + s] - u[l - s]) / (2.0 * g.spacing());
  }
  return d;
}

}  // namespace detail

/// ∫_{B_r(x)} ∇u ⊗ ∇u; its small-eigenvalue directions are the directions u barely varies along.
inline Eigen::MatrixXd gradient_moment(const ScalarField& u, const Point& x, double r) {
  const int n = u.grid().dim();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  visit_ball(u.grid(), x, r, [&](std::size_t l, double) {
    const Point d = detail::central_gradient(u, l);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) += d[i] * d[j];
  });
  return m * u.grid().cell_volume();
}

namespace detail {

inline std::vector<Frame> candidate_frames(int n, const Eigen::MatrixXd& moment, int k, const SymmetryOptions& opt) {
  auto frames = axis_frames(n, k);
  if (k == 0 || k == n) return frames;
  for (auto& f : random_frames(n, k, opt.random_frames, opt.seed)) frames.push_back(std::move(f));
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(moment);
  std::vector<Point> vs;
  for (int j = 0; j < k; ++j) {
    Point v(n);
    for (int i = 0; i < n; ++i) v[i] = es.eigenvectors()(i, j);
    vs.push_back(v);
  }
  frames.push_back(orthonormalize(n, vs, "moment-spectrum"));
  return frames;
}

}  // namespace detail

inline std::vector<Frame> candidate_frames(const ScalarField& u, const Point& x, double r, int k,
                                           const SymmetryOptions& opt) {
  return detail::candidate_frames(u.grid().dim(), gradient_moment(u, x, r), k, opt);
}

/// Defect of u from (k, ε)-symmetry in B_r(x), with the moment-spectrum gradient criterion.
inline SymmetryReport symmetry_defect(const ScalarField& u, const Point& x, double r, int k, double p,
                                      const SymmetryOptions& opt = {}) {
  const int n = u.grid().dim();
  require(k >= 0 && k <= n, ErrorCode::InvalidArgument, "k must lie in [0, n]");
  const double alpha = homogeneity_exponent(p);
  const auto w = blow_up(u, x, r, alpha, opt.reference_half);
  SymmetryReport rep;
  rep.k = k;
  // Σ |V·∇u|^2 over the ball equals tr(V^T M V) for the gradient moment M
  const Eigen::MatrixXd moment = gradient_moment(u, x, r);
  for (int j = k; j <= n; ++j) {
    const auto frames = detail::candidate_frames(n, moment, j, opt);
    auto fit = fit_k_symmetric(w, j, frames);
    if (fit.defect < rep.defect) {
      rep.defect = fit.defect;
      rep.fit = fit;
    }
    if (j == k && k > 0) {
      double best = kInf;
      for (const auto& f : frames) {
        double acc = 0.0;
        for (const auto& v : f.vectors)
          for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) acc += v[a] * moment(a, b) * v[b];
        best = std::min(best, acc);
      }
      rep.gradient_criterion = std::pow(r, 2.0 - 2.0 * alpha - n) * best;
    }
  }
  return rep;
}

struct StratumPoint {
  Point x;
  bool flagged = false;
  double best_defect = kInf;  // min over scales of the (k+1)-symmetry defect
  double best_scale = kNaN;
};

struct StratumReport {
  double epsilon = 0.0, r_min = 0.0, r_max = 0.0;
  int k = 0;
  std::vector<double> scales;  // dyadic, from r_max down to >= r_min
  std::vector<StratumPoint> points;

  std::vector<Point> flagged() const {
    std::vector<Point> out;
    for (const auto& p : points)
      if (p.flagged) out.push_back(p.x);
    return out;
  }
  std::size_t flagged_count() const {
    return static_cast<std::size_t>(std::count_if(points.begin(), points.end(), [](const auto& p) { return p.flagged; }));
  }
};

inline std::vector<double> dyadic_scales(double r_min, double r_max) {
  require(r_min > 0.0 && r_max >= r_min, ErrorCode::InvalidArgument, "need 0 < r_min <= r_max");
  std::vector<double> s;
  for (double t = r_max; t >= r_min * (1.0 - 1e-12); t *= 0.5) s.push_back(t);
  return s;
}

/// Flags x iff no dyadic scale in [r_min, r_max] is (k+1, ε)-symmetric. The per-point scan stops
/// at the first symmetric scale, so best_defect is exact only for flagged points.
inline StratumReport quantitative_stratum(const ScalarField& u, double p, int k, double epsilon, double r_min,
                                          double r_max, const std::vector<Point>& samples,
                                          const SymmetryOptions& opt = {}) {
  const int n = u.grid().dim();
  require(k >= 0 && k < n, ErrorCode::InvalidArgument, "stratum index must lie in [0, n)");
  StratumReport rep{epsilon, r_min, r_max, k, dyadic_scales(r_min, r_max), {}};
  require(!rep.scales.empty(), ErrorCode::EmptyLadder, "empty scale ladder");
  for (const auto& x : samples)
    require(u.grid().distance_to_boundary(x) >= r_max, ErrorCode::InvalidArgument,
            "sample point closer than r_max to the box boundary");
  rep.points.resize(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    StratumPoint sp;
    sp.x = samples[i];
    sp.flagged = true;
    for (double s : rep.scales) {
      const double d = symmetry_defect(u, sp.x, s, k + 1, p, opt).defect;
      if (d < sp.best_defect) {
        sp.best_defect = d;
        sp.best_scale = s;
      }
      if (d < epsilon) {
        sp.flagged = false;
        break;
      }
    }
    rep.points[i] = sp;
  });
  return rep;
}

/// Cell centers in `within` with u < ε r^α (strict).
inline std::vector<Point> rupture_points(const ScalarField& u, double epsilon, double r, double p,
                                         const BallRegion& within) {
  const double t = epsilon * std::pow(r, homogeneity_exponent(p));
  std::vector<Point> out;
  visit_ball(u.grid(), within.center, within.radius, [&](std::size_t l, double) {
    if (u[l] < t) out.push_back(u.grid().center(l));
  });
  return out;
}

}  // namespace rupture
