#pragma once

// Discrete measures, best-fit planes, displacement, Reifenberg and covering checks, Minkowski content.

#include <rupture/density.hpp>
#include <rupture/field_ops.hpp>

#include <Eigen/Dense>

#include <numeric>
#include <random>
#include <unordered_map>

namespace rupture {

/// μ = Σ w_i δ_{y_i}.
class AtomicMeasure {
 public:
  explicit AtomicMeasure(int dim) : dim_(dim) {
    require(dim >= 1 && dim <= kMaxDim, ErrorCode::InvalidArgument, "measure dimension out of range");
  }
  AtomicMeasure(std::vector<Point> points, std::vector<double> weights) : dim_(0) {
    require(points.size() == weights.size(), ErrorCode::SizeMismatch, "point and weight counts differ");
    require(!points.empty(), ErrorCode::EmptySample, "measure needs at least one atom to fix its dimension");
    dim_ = points.front().dim();
    for (std::size_t i = 0; i < points.size(); ++i) add(points[i], weights[i]);
  }

  void add(const Point& y, double w) {
    require(y.dim() == dim_, ErrorCode::InvalidArgument, "atom dimension mismatch");
    require(w > 0.0 && std::isfinite(w), ErrorCode::InvalidArgument, "atom weights must be positive");
    points_.push_back(y);
    weights_.push_back(w);
  }

  int dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return points_.size(); }
  const Point& point(std::size_t i) const noexcept { return points_[i]; }
  double weight(std::size_t i) const noexcept { return weights_[i]; }
  const std::vector<Point>& points() const noexcept { return points_; }
  double total_mass() const noexcept { return std::accumulate(weights_.begin(), weights_.end(), 0.0); }
  /// μ(B_r(x)), open ball.
  double mass_in(const BallRegion& ball) const noexcept {
    double m = 0.0;
    for (std::size_t i = 0; i < size(); ++i)
      if (dist2(points_[i], ball.center) < ball.radius * ball.radius) m += weights_[i];
    return m;
  }

 private:
  int dim_;
  std::vector<Point> points_;
  std::vector<double> weights_;
};

/// Atoms at the true cells of a mask, each carrying `weight`.
inline AtomicMeasure atoms_from_mask(const Mask& mask, double weight) {
  AtomicMeasure mu(mask.grid().dim());
  for (std::size_t l = 0; l < mask.grid().size(); ++l)
    if (mask[l]) mu.add(mask.grid().center(l), weight);
  return mu;
}

struct AffineSubspace {
  Point base;
  std::vector<Point> frame;

  int k() const noexcept { return static_cast<int>(frame.size()); }
  double distance(const Point& y) const noexcept {
    Point d = y - base;
    for (const auto& v : frame) d -= v * d.dot(v);
    return d.norm();
  }
};

struct MomentSpectrum {
  Point x_cm;
  double mass = 0.0;
  std::vector<double> eigenvalues;  // descending
  std::vector<Point> eigenvectors;
};

namespace detail {

inline Eigen::VectorXd to_eigen(const Point& p) {
  Eigen::VectorXd v(p.dim());
  for (int i = 0; i < p.dim(); ++i) v(i) = p[i];
  return v;
}

inline Point from_eigen(const Eigen::VectorXd& v) {
  Point p(static_cast<int>(v.size()));
  for (int i = 0; i < p.dim(); ++i) p[i] = v(i);
  return p;
}

inline std::vector<std::size_t> atoms_in(const AtomicMeasure& mu, const BallRegion& ball) {
  std::vector<std::size_t> idx;
  const double r2 = ball.radius * ball.radius;
  for (std::size_t i = 0; i < mu.size(); ++i)
    if (dist2(mu.point(i), ball.center) < r2) idx.push_back(i);
  return idx;
}

}  // namespace detail

/// Uniform bucket grid over the atoms for ball queries.
class AtomIndex {
 public:
  AtomIndex(const AtomicMeasure& mu, double cell) : mu_(&mu), cell_(cell) {
    require(cell > 0.0, ErrorCode::InvalidArgument, "index cell must be positive");
    for (std::size_t i = 0; i < mu.size(); ++i) buckets_[key(cell_of(mu.point(i)))].push_back(i);
  }

  /// Atoms strictly inside the ball, in increasing index order.
  std::vector<std::size_t> query(const BallRegion& ball) const {
    const int n = mu_->dim();
    std::array<std::int64_t, kMaxDim> lo{}, hi{};
    double cells = 1.0;
    for (int i = 0; i < n; ++i) {
      lo[i] = static_cast<std::int64_t>(std::floor((ball.center[i] - ball.radius) / cell_));
      hi[i] = static_cast<std::int64_t>(std::floor((ball.center[i] + ball.radius) / cell_));
      cells *= static_cast<double>(hi[i] - lo[i] + 1);
    }
    std::vector<std::size_t> out;
    const double r2 = ball.radius * ball.radius;
    if (cells > static_cast<double>(buckets_.size())) {
      for (const auto& [k, v] : buckets_)
        for (auto i : v)
          if (dist2(mu_->point(i), ball.center) < r2) out.push_back(i);
    } else {
      std::array<std::int64_t, kMaxDim> c = lo;
      while (true) {
        if (auto it = buckets_.find(key(c)); it != buckets_.end())
          for (auto i : it->second)
            if (dist2(mu_->point(i), ball.center) < r2) out.push_back(i);
        int a = 0;
        for (; a < n; ++a) {
          if (++c[a] <= hi[a]) break;
          c[a] = lo[a];
        }
        if (a == n) break;
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::array<std::int64_t, kMaxDim> cell_of(const Point& y) const {
    std::array<std::int64_t, kMaxDim> c{};
    for (int i = 0; i < y.dim(); ++i) c[i] = static_cast<std::int64_t>(std::floor(y[i] / cell_));
    return c;
  }
  using Cell = std::array<std::int64_t, kMaxDim>;
  struct CellHash {
    std::size_t operator()(const Cell& c) const noexcept {
      std::size_t h = 0;
      for (auto v : c) h = h * 1000003u ^ std::hash<std::int64_t>{}(v);
      return h;
    }
  };
  static const Cell& key(const Cell& c) { return c; }

  const AtomicMeasure* mu_;
  double cell_;
  std::unordered_map<Cell, std::vector<std::size_t>, CellHash> buckets_;
};

namespace detail {

inline MomentSpectrum spectrum_of(const AtomicMeasure& mu, const std::vector<std::size_t>& idx) {
  const int n = mu.dim();
  MomentSpectrum s;
  for (auto i : idx) s.mass += mu.weight(i);
  require(s.mass > 0.0, ErrorCode::ZeroMass, "no mass in the ball");
  Eigen::VectorXd cm = Eigen::VectorXd::Zero(n);
  for (auto i : idx) cm += mu.weight(i) * to_eigen(mu.point(i));
  cm /= s.mass;
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
  for (auto i : idx) {
    const Eigen::VectorXd d = to_eigen(mu.point(i)) - cm;
    c += mu.weight(i) * d * d.transpose();
  }
  c /= s.mass;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
  s.x_cm = from_eigen(cm);
  for (int j = n - 1; j >= 0; --j) {
    Eigen::VectorXd v = es.eigenvectors().col(j);
    for (int i = 0; i < n; ++i) {
      if (std::abs(v(i)) > 1e-12) {
        if (v(i) < 0.0) v = -v;
        break;
      }
    }
    s.eigenvalues.push_back(std::max(0.0, es.eigenvalues()(j)));
    s.eigenvectors.push_back(from_eigen(v));
  }
  return s;
}

}  // namespace detail

/// Mass-normalized center of mass and second-moment spectrum of μ restricted to the open ball.
/// Eigenvectors are signed so their first component above 1e-12 in magnitude is positive.
inline MomentSpectrum moment_spectrum(const AtomicMeasure& mu, const BallRegion& ball) {
  return detail::spectrum_of(mu, detail::atoms_in(mu, ball));
}

/// max_j ‖M^{-1} Σ w ((y - x_cm)·v_j)(y - x_cm) - λ_j v_j‖.
inline double moment_identity_residual(const AtomicMeasure& mu, const BallRegion& ball, const MomentSpectrum& s) {
  double worst = 0.0;
  const auto idx = detail::atoms_in(mu, ball);
  for (std::size_t j = 0; j < s.eigenvectors.size(); ++j) {
    Point acc = Point::zero(mu.dim());
    for (auto i : idx) {
      const Point d = mu.point(i) - s.x_cm;
      acc += d * (mu.weight(i) * d.dot(s.eigenvectors[j]));
    }
    acc = acc * (1.0 / s.mass) - s.eigenvectors[j] * s.eigenvalues[j];
    worst = std::max(worst, acc.norm());
  }
  return worst;
}

struct BestFit {
  AffineSubspace plane;
  double m_value = 0.0;  // mass-normalized: Σ_{i>k} λ_i
  double mass = 0.0;
};

inline BestFit best_fit_affine(const AtomicMeasure& mu, const BallRegion& ball, int k) {
  require(k >= 0 && k <= mu.dim(), ErrorCode::InvalidArgument, "k must lie in [0, n]");
  const auto s = moment_spectrum(mu, ball);
  BestFit fit;
  fit.plane.base = s.x_cm;
  fit.mass = s.mass;
  for (int i = 0; i < k; ++i) fit.plane.frame.push_back(s.eigenvectors[static_cast<std::size_t>(i)]);
  for (int i = k; i < mu.dim(); ++i) fit.m_value += s.eigenvalues[static_cast<std::size_t>(i)];
  return fit;
}

namespace detail {
inline double displacement_of(const AtomicMeasure& mu, const std::vector<std::size_t>& idx, double r, int k) {
  require(k >= 0 && k <= mu.dim(), ErrorCode::InvalidArgument, "k must lie in [0, n]");
  if (idx.empty()) return 0.0;
  const auto s = spectrum_of(mu, idx);
  double m = 0.0;
  for (int i = k; i < mu.dim(); ++i) m += s.eigenvalues[static_cast<std::size_t>(i)];
  return std::pow(r, -k - 2.0) * s.mass * m;
}
}  // namespace detail

/// D^k_μ(x, r) = r^{-k-2} min_L ∫_{B_r(x)} dist²(y, L) dμ; 0 on an empty ball.
inline double displacement(const AtomicMeasure& mu, const Point& x, double r, int k) {
  require(r > 0.0, ErrorCode::InvalidArgument, "displacement radius must be positive");
  return detail::displacement_of(mu, detail::atoms_in(mu, BallRegion(x, r)), r, k);
}

inline double displacement(const AtomicMeasure& mu, const AtomIndex& index, const Point& x, double r, int k) {
  require(r > 0.0, ErrorCode::InvalidArgument, "displacement radius must be positive");
  return detail::displacement_of(mu, index.query(BallRegion(x, r)), r, k);
}

/// Same quantity by direct minimization over (base, frame): Riemannian gradient descent with QR
/// retraction and Armijo backtracking from 64 seeded starts. Slow; for testing only.
inline double displacement_bruteforce(const AtomicMeasure& mu, const Point& x, double r, int k,
                                      std::uint64_t seed = 7, int starts = 64) {
  require(r > 0.0, ErrorCode::InvalidArgument, "displacement radius must be positive");
  const int n = mu.dim();
  require(k >= 0 && k <= n, ErrorCode::InvalidArgument, "k must lie in [0, n]");
  const auto idx = detail::atoms_in(mu, BallRegion(x, r));
  if (idx.empty() || k == n) return 0.0;
  const auto m = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd Y(n, m);
  Eigen::VectorXd w(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    Y.col(i) = detail::to_eigen(mu.point(idx[static_cast<std::size_t>(i)]));
    w(i) = mu.weight(idx[static_cast<std::size_t>(i)]);
  }
  auto objective = [&](const Eigen::VectorXd& b, const Eigen::MatrixXd& V) {
    const Eigen::MatrixXd D = Y.colwise() - b;
    const Eigen::MatrixXd P = D - V * (V.transpose() * D);
    return (P.colwise().squaredNorm().transpose().array() * w.array()).sum();
  };
  auto orthonormal = [&](const Eigen::MatrixXd& A) -> Eigen::MatrixXd {
    if (k == 0) return Eigen::MatrixXd(n, 0);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
    return qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
  };
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  double best = kInf;
  for (int st = 0; st < starts; ++st) {
    Eigen::VectorXd b(n);
    Eigen::MatrixXd V(n, k);
    for (int i = 0; i < n; ++i) b(i) = x[i] + r * gauss(rng);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) V(i, j) = gauss(rng);
    V = orthonormal(V);
    double f = objective(b, V);
    // Barzilai-Borwein trial steps with Armijo backtracking
    double step = 1.0 / std::max(w.sum(), 1e-300);
    Eigen::VectorXd prev_x, prev_g;
    for (int it = 0; it < 5000; ++it) {
      const Eigen::MatrixXd D = Y.colwise() - b;
      const Eigen::MatrixXd P = D - V * (V.transpose() * D);
      Eigen::VectorXd g(n + n * k), xv(n + n * k);
      g.head(n) = -2.0 * (P * w);
      xv.head(n) = b;
      if (k > 0) {
        const Eigen::MatrixXd G = -2.0 * (D * w.asDiagonal() * D.transpose()) * V;
        const Eigen::MatrixXd gV = G - V * (V.transpose() * G);
        g.tail(n * k) = Eigen::Map<const Eigen::VectorXd>(gV.data(), n * k);
        xv.tail(n * k) = Eigen::Map<const Eigen::VectorXd>(V.data(), n * k);
      }
      const double g2 = g.squaredNorm();
      if (g2 <= 1e-30 * std::max(1.0, f * f)) break;
      if (it > 0) {
        const Eigen::VectorXd dx = xv - prev_x, dg = g - prev_g;
        const double sy = dx.dot(dg);
        if (sy > 0.0) step = dx.squaredNorm() / sy;
      }
      prev_x = xv;
      prev_g = g;
      double t = step;
      bool moved = false;
      for (int bt = 0; bt < 60; ++bt, t *= 0.5) {
        const Eigen::VectorXd b2 = b - t * g.head(n);
        Eigen::MatrixXd V2 = V;
        if (k > 0) V2 = orthonormal(V - t * Eigen::Map<const Eigen::MatrixXd>(g.tail(n * k).data(), n, k));
        const double f2 = objective(b2, V2);
        if (f2 <= f - 1e-4 * t * g2) {
          moved = f - f2 > 1e-15 * f;
          b = b2;
          V = V2;
          f = f2;
          break;
        }
      }
      if (!moved) break;
    }
    best = std::min(best, f);
  }
  return std::pow(r, -k - 2.0) * best;
}

struct RectifiabilityIntegral {
  std::vector<double> scales;  // ascending
  std::vector<double> values;  // D^k(x, s)
  double integral = 0.0;       // ∫ D ds/s, trapezoid in log s
};

inline RectifiabilityIntegral rectifiability_integral(const AtomicMeasure& mu, const Point& x,
                                                      std::vector<double> scales, int k) {
  require(scales.size() >= 2, ErrorCode::EmptyLadder, "need at least two scales");
  std::sort(scales.begin(), scales.end());
  RectifiabilityIntegral out;
  out.scales = scales;
  for (double s : scales) out.values.push_back(displacement(mu, x, s, k));
  for (std::size_t i = 0; i + 1 < scales.size(); ++i)
    out.integral += 0.5 * (out.values[i] + out.values[i + 1]) * std::log(scales[i + 1] / scales[i]);
  return out;
}

struct ReifenbergOptions {
  std::size_t lattice_per_axis = 9;  // centers on a cubic lattice over the region ball
  int t_levels = 4;                  // t = r/10, r/20, ...
  int s_levels_per_t = 8;            // ladder below each t, ratio 1/2
};

struct ReifenbergReport {
  double hypothesis_max = 0.0;  // max over (x, t) of t^{-k} ∫_{B_t(x)} ∫_0^t D^k(y, s) ds/s dμ(y)
  bool hypothesis_holds = false;
  double content_ratio = 0.0;   // μ(B_r(x0)) / r^k
  std::size_t samples = 0;
};

/// Hypothesis of the discrete Reifenberg theorem on a lattice of (x, t), plus the content ratio.
inline ReifenbergReport reifenberg_check(const AtomicMeasure& mu, const BallRegion& region, int k, double delta,
                                         const ReifenbergOptions& opt = {}) {
  const int n = mu.dim();
  require(k >= 0 && k <= n, ErrorCode::InvalidArgument, "k must lie in [0, n]");
  require(opt.lattice_per_axis >= 1 && opt.t_levels >= 1 && opt.s_levels_per_t >= 1, ErrorCode::InvalidArgument,
          "empty Reifenberg lattice");
  const double r = region.radius;
  const double t_max = r / 10.0;
  std::vector<double> ladder;  // ascending
  const int total = opt.t_levels + opt.s_levels_per_t;
  for (int j = total - 1; j >= 0; --j) ladder.push_back(t_max * std::ldexp(1.0, -j));

  // per-atom cumulative ∫_{ladder[0]}^{ladder[q]} D(y, s) ds/s, in log s (trapezoid)
  const AtomIndex index(mu, t_max);
  const auto idx = index.query(BallRegion(region.center, r + t_max));
  std::vector<std::vector<double>> cum(idx.size());
  parallel_for(idx.size(), [&](std::size_t a) {
    const Point& y = mu.point(idx[a]);
    std::vector<double> c(ladder.size(), 0.0);
    double prev = displacement(mu, index, y, ladder[0], k);
    for (std::size_t q = 1; q < ladder.size(); ++q) {
      const double cur = displacement(mu, index, y, ladder[q], k);
      c[q] = c[q - 1] + 0.5 * (prev + cur) * std::log(ladder[q] / ladder[q - 1]);
      prev = cur;
    }
    cum[a] = std::move(c);
  });

  std::vector<Point> centers;
  const std::size_t L = opt.lattice_per_axis;
  std::size_t total_cells = 1;
  for (int i = 0; i < n; ++i) total_cells *= L;
  for (std::size_t c = 0; c < total_cells; ++c) {
    Point x = region.center;
    std::size_t q = c;
    for (int i = 0; i < n; ++i, q /= L) {
      const double u = L == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(q % L) / static_cast<double>(L - 1);
      x[i] += u * r;
    }
    if (dist2(x, region.center) < r * r || L == 1) centers.push_back(x);
  }

  ReifenbergReport rep;
  for (const auto& x : centers) {
    for (int lv = 0; lv < opt.t_levels; ++lv) {
      const std::size_t q = ladder.size() - 1 - static_cast<std::size_t>(lv);
      const double t = ladder[q];
      double acc = 0.0;
      for (std::size_t a = 0; a < idx.size(); ++a)
        if (dist2(mu.point(idx[a]), x) < t * t) acc += mu.weight(idx[a]) * (cum[a][q] - cum[a][q - static_cast<std::size_t>(opt.s_levels_per_t)]);
      rep.hypothesis_max = std::max(rep.hypothesis_max, acc / std::pow(t, k));
      ++rep.samples;
    }
  }
  rep.hypothesis_holds = rep.hypothesis_max < delta;
  rep.content_ratio = mu.mass_in(region) / std::pow(r, k);
  return rep;
}

struct EffectiveSpan {
  int k_max = 0;
  AffineSubspace span;               // x_0 + span{x_i - x_0}
  std::vector<std::size_t> chosen;   // x_0 first
};

/// Greedy s-effective spanning: repeatedly adds the point farthest from the current affine span
/// while that distance is at least 2s.
inline EffectiveSpan effective_span(const std::vector<Point>& points, double s) {
  require(!points.empty(), ErrorCode::EmptySample, "effective_span needs at least one point");
  require(s >= 0.0, ErrorCode::InvalidArgument, "spanning scale must be nonnegative");
  EffectiveSpan out;
  out.span.base = points.front();
  out.chosen.push_back(0);
  const int n = points.front().dim();
  while (out.k_max < n) {
    double far = -1.0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double d = out.span.distance(points[i]);
      if (d > far) {
        far = d;
        arg = i;
      }
    }
    if (far < 2.0 * s || far <= 0.0) break;
    Point v = points[arg] - out.span.base;
    for (const auto& q : out.span.frame) v -= q * v.dot(q);
    out.span.frame.push_back(v * (1.0 / v.norm()));
    out.chosen.push_back(arg);
    ++out.k_max;
  }
  return out;
}

/// max over points of s|α| / |x - x_0|, α the coefficients of the projection of x - x_0 in the
/// (non-orthogonal) basis x_i - x_0. Bounded by a constant depending only on n.
inline double span_coefficient_constant(const EffectiveSpan& sp, const std::vector<Point>& chosen_from,
                                        const std::vector<Point>& queries, double s) {
  const int k = sp.k_max;
  if (k == 0) return 0.0;
  const int n = sp.span.base.dim();
  Eigen::MatrixXd B(n, k);
  for (int j = 0; j < k; ++j)
    B.col(j) = detail::to_eigen(chosen_from[sp.chosen[static_cast<std::size_t>(j) + 1]] - sp.span.base);
  const auto qr = B.colPivHouseholderQr();
  double c = 0.0;
  for (const auto& x : queries) {
    const Point d = x - sp.span.base;
    const double nd = d.norm();
    if (nd == 0.0) continue;
    const Eigen::VectorXd a = qr.solve(detail::to_eigen(d));
    c = std::max(c, s * a.cwiseAbs().maxCoeff() / nd);
  }
  return c;
}

struct VitaliCover {
  std::vector<std::size_t> kept;
  bool disjoint = false;  // kept open balls pairwise disjoint
  bool covers = false;    // every input ball lies in the 5x dilate of a kept ball
};

/// Greedy Vitali selection: largest radius first (ties by index), keep a ball iff it is disjoint from
/// every kept ball.
inline VitaliCover vitali_cover(const std::vector<Point>& centers, const std::vector<double>& radii) {
  require(centers.size() == radii.size(), ErrorCode::SizeMismatch, "center and radius counts differ");
  for (double r : radii) require(r > 0.0, ErrorCode::InvalidArgument, "cover radii must be positive");
  std::vector<std::size_t> order(centers.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return radii[a] > radii[b]; });
  // relative slack so lattice points at exactly twice the radius count as disjoint
  auto overlap = [&](std::size_t i, std::size_t j) {
    const double sum = radii[i] + radii[j];
    return dist2(centers[i], centers[j]) < sum * sum * (1.0 - 1e-12);
  };
  VitaliCover vc;
  for (auto i : order) {
    bool ok = true;
    for (auto j : vc.kept) {
      if (overlap(i, j)) {
        ok = false;
        break;
      }
    }
    if (ok) vc.kept.push_back(i);
  }
  vc.disjoint = true;
  for (std::size_t a = 0; a < vc.kept.size(); ++a)
    for (std::size_t b = a + 1; b < vc.kept.size(); ++b) {
      if (overlap(vc.kept[a], vc.kept[b])) vc.disjoint = false;
    }
  vc.covers = true;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    bool inside = false;
    for (auto j : vc.kept)
      if (std::sqrt(dist2(centers[i], centers[j])) + radii[i] <= 5.0 * radii[j]) {
        inside = true;
        break;
      }
    vc.covers = vc.covers && inside;
  }
  return vc;
}

inline VitaliCover vitali_cover(const std::vector<Point>& centers, double radius) {
  return vitali_cover(centers, std::vector<double>(centers.size(), radius));
}

struct MinkowskiContent {
  int k = 0;
  std::vector<double> radii;
  std::vector<double> volumes;   // ℒ^n(B_r(S)), strict inequality dist < r
  std::vector<double> contents;  // (2r)^{k-n} ℒ^n(B_r(S))
  double slope = kNaN;           // of log volume against log r
  double dimension = kNaN;       // n - slope
};

namespace detail {
inline void finish_content(MinkowskiContent& mc, int n) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < mc.radii.size(); ++i) {
    mc.contents.push_back(std::pow(2.0 * mc.radii[i], mc.k - n) * mc.volumes[i]);
    if (mc.volumes[i] > 0.0) {
      lx.push_back(std::log(mc.radii[i]));
      ly.push_back(std::log(mc.volumes[i]));
    }
  }
  if (lx.size() >= 2) {
    mc.slope = fit_slope(lx, ly);
    mc.dimension = n - mc.slope;
  }
}
}  // namespace detail

inline MinkowskiContent minkowski_content(const Mask& mask, int k, const std::vector<double>& radii) {
  require(!radii.empty(), ErrorCode::EmptyLadder, "empty radius ladder");
  const auto dist = distance_transform(mask);
  std::vector<double> sorted = dist.values();
  std::sort(sorted.begin(), sorted.end());
  MinkowskiContent mc;
  mc.k = k;
  mc.radii = radii;
  const double vol = mask.grid().cell_volume();
  for (double r : radii) {
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), r) - sorted.begin();
    mc.volumes.push_back(static_cast<double>(below) * vol);
  }
  detail::finish_content(mc, mask.grid().dim());
  return mc;
}

/// ℒ^n(B_r({u < ε r^α} ∩ B)) over a radius ladder; the sublevel set changes with r.
inline MinkowskiContent sublevel_content(const ScalarField& u, double epsilon, double p, const BallRegion& within,
                                         const std::vector<double>& radii, int k = 0) {
  require(!radii.empty(), ErrorCode::EmptyLadder, "empty radius ladder");
  const double alpha = homogeneity_exponent(p);
  const Grid& g = u.grid();
  MinkowskiContent mc;
  mc.k = k;
  mc.radii = radii;
  for (double r : radii) {
    const double t = epsilon * std::pow(r, alpha);
    Mask m(g);
    visit_ball(g, within.center, within.radius, [&](std::size_t l, double) { m.set(l, u[l] < t); });
    if (!m.any()) {
      mc.volumes.push_back(0.0);
      continue;
    }
    const auto dist = distance_transform(m);
    std::size_t count = 0;
    for (double d : dist.values())
      if (d < r) ++count;
    mc.volumes.push_back(static_cast<double>(count) * g.cell_volume());
  }
  detail::finish_content(mc, g.dim());
  return mc;
}

struct CoverLeaf {
  Point x;
  double r = 0.0;
  int depth = 0;
  int span_k = 0;
  std::string outcome;  // "near-plane", "depth-limit" or "no-pinched-points"
};

struct PinchedCoverOptions {
  double delta = 0.5;      // pinching threshold on W at scale r/4
  double rho = 1.0;        // spanning scale ρ r / 10
  int max_depth = 8;
  double min_radius = 0.0; // stop refining below this radius
};

struct PinchedCover {
  std::vector<CoverLeaf> leaves;
  double content = 0.0;  // Σ r_leaf^k / R^k
};

/// Executable covering: in each ball keep the candidate points with small pinching, test whether they
/// ρr/10-effectively span a (k+1)-plane, and either stop (near a k-plane) or refine one dyadic level by
/// a Vitali family of half-radius balls.
inline PinchedCover pinched_cover(const DensityEvaluator& ev, const BallRegion& root, int k,
                                  const std::vector<Point>& candidates, const PinchedCoverOptions& opt = {}) {
  PinchedCover out;
  struct Node {
    Point x;
    double r;
    int depth;
  };
  std::vector<Node> stack{{root.center, root.radius, 0}};
  const Grid& g = ev.field().grid();
  while (!stack.empty()) {
    const Node nd = stack.back();
    stack.pop_back();
    std::vector<Point> inside;
    for (const auto& c : candidates)
      if (dist2(c, nd.x) < nd.r * nd.r) inside.push_back(c);
    if (inside.empty()) continue;
    const double s = nd.r / 4.0;
    std::vector<Point> pinched;
    for (const auto& y : inside) {
      if (g.distance_to_boundary(y) < 2.0 * Cutoff::kSupport * s) {
        pinched.push_back(y);  // no room for the densities; keep conservatively
        continue;
      }
      if (std::abs(pinch_W(ev, y, s)) < opt.delta) pinched.push_back(y);
    }
    if (pinched.empty()) {
      out.leaves.push_back({nd.x, nd.r, nd.depth, 0, "no-pinched-points"});
      continue;
    }
    const auto span = effective_span(pinched, opt.rho * nd.r / 10.0);
    if (span.k_max <= k) {
      out.leaves.push_back({nd.x, nd.r, nd.depth, span.k_max, "near-plane"});
      continue;
    }
    if (nd.depth >= opt.max_depth || nd.r / 2.0 < opt.min_radius) {
      out.leaves.push_back({nd.x, nd.r, nd.depth, span.k_max, "depth-limit"});
      continue;
    }
    const auto vc = vitali_cover(inside, nd.r / 10.0);
    for (auto i : vc.kept) stack.push_back({inside[i], nd.r / 2.0, nd.depth + 1});
  }
  for (const auto& l : out.leaves) out.content += std::pow(l.r / root.radius, k);
  return out;
}

}  // namespace rupture
