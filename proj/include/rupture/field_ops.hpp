#pragma once

// Differential operators, ball quadrature and distance transforms on uniform grids.

#include <rupture/grid.hpp>

#include <vector>

namespace rupture {

/// Central differences in the interior, second-order one-sided differences at box faces.
inline VectorField gradient(const ScalarField& u) {
  const Grid& g = u.grid();
  const int n = g.dim();
  for (int i = 0; i < n; ++i)
    require(g.shape(i) >= 3, ErrorCode::GridTooSmall, "gradient needs >= 3 cells per axis");
  const double inv2h = 1.0 / (2.0 * g.spacing());
  VectorField out(g);
  for (std::size_t l = 0; l < g.size(); ++l) {
    const CellIndex idx = g.unravel(l);
    for (int a = 0; a < n; ++a) {
      const std::size_t s = g.stride(a);
      const auto last = static_cast<std::int64_t>(g.shape(a)) - 1;
      double d;
      if (idx[a] == 0)
        d = (-3.0 * u[l] + 4.0 * u[l + s] - u[l + 2 * s]) * inv2h;
      else if (idx[a] == last)
        d = (3.0 * u[l] - 4.0 * u[l - s] + u[l - 2 * s]) * inv2h;
      else
        d = (u[l + s] - u[l - s]) * inv2h;
      out(l, a) = d;
    }
  }
  return out;
}

/// (2n+1)-point Laplacian; boundary cells hold NaN.
inline ScalarField laplacian(const ScalarField& u) {
  const Grid& g = u.grid();
  const int n = g.dim();
  const double inv_h2 = 1.0 / (g.spacing() * g.spacing());
  ScalarField out(g, kNaN, "lap_" + u.name());
  for (std::size_t l = 0; l < g.size(); ++l) {
    const CellIndex idx = g.unravel(l);
    if (g.on_boundary(idx)) continue;
    double acc = -2.0 * n * u[l];
    for (int a = 0; a < n; ++a) acc += u[l + g.stride(a)] + u[l - g.stride(a)];
    out[l] = acc * inv_h2;
  }
  return out;
}

struct BallIntegral {
  double value = 0.0;
  double clipped_fraction = 0.0;
  std::size_t cells = 0;
};

/// Midpoint-rule sum of g(y) * weight(|y-x|^2/r^2) * h^n over cells with |y-x| < support_factor * r.
/// NaN samples of g (boundary sentinels) are skipped.
template <class Weight>
BallIntegral ball_integral(const ScalarField& g, const BallRegion& ball, Weight&& weight,
                           double support_factor = 1.0) {
  const double inv_r2 = 1.0 / (ball.radius * ball.radius);
  double acc = 0.0;
  const auto cov = visit_ball(g.grid(), ball.center, support_factor * ball.radius, [&](std::size_t l, double d2) {
    const double v = g[l];
    if (!std::isnan(v)) acc += v * weight(d2 * inv_r2);
  });
  require(cov.inside_cells > 0, ErrorCode::EmptyIntersection, "ball does not meet the grid");
  return {acc * g.grid().cell_volume(), cov.clipped_fraction(), cov.inside_cells};
}

inline BallIntegral ball_integral(const ScalarField& g, const BallRegion& ball) {
  return ball_integral(g, ball, [](double) { return 1.0; });
}

namespace detail {

// Squared distance transform of a 1-D sampled function (lower envelope of parabolas).
// Infinite samples carry no parabola.
inline void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::size_t n,
                   std::vector<std::size_t>& v, std::vector<double>& z) {
  std::ptrdiff_t k = -1;
  for (std::size_t q = 0; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    const auto qd = static_cast<double>(q);
    double s;
    while (true) {
      const auto vd = static_cast<double>(v[k]);
      s = ((f[q] + qd * qd) - (f[v[k]] + vd * vd)) / (2.0 * (qd - vd));
      if (k > 0 && s <= z[k]) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(n), kInf);
    return;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double diff = static_cast<double>(q) - static_cast<double>(v[k]);
    d[q] = diff * diff + f[v[k]];
  }
}

}  // namespace detail

/// Exact Euclidean distance from every cell center to the nearest true cell center.
inline ScalarField distance_transform(const Mask& mask) {
  const Grid& g = mask.grid();
  require(mask.any(), ErrorCode::EmptyMask, "distance transform of an all-false mask");
  std::vector<double> sq(g.size());
  for (std::size_t l = 0; l < g.size(); ++l) sq[l] = mask[l] ? 0.0 : kInf;
  std::size_t maxn = 0;
  for (int a = 0; a < g.dim(); ++a) maxn = std::max(maxn, g.shape(a));
  std::vector<std::size_t> v(maxn);
  std::vector<double> z(maxn + 1), buf(maxn), line(maxn);
  for (int a = 0; a < g.dim(); ++a) {
    const std::size_t n = g.shape(a);
    const std::size_t s = g.stride(a);
    for (std::size_t l = 0; l < g.size(); ++l) {
      if ((l / s) % n != 0) continue;  // l is the first cell of a line along axis a
      for (std::size_t q = 0; q < n; ++q) buf[q] = sq[l + q * s];
      detail::edt_1d(buf, line, n, v, z);
      for (std::size_t q = 0; q < n; ++q) sq[l + q * s] = line[q];
    }
  }
  const double h = g.spacing();
  std::vector<double> out(g.size());
  for (std::size_t l = 0; l < g.size(); ++l) out[l] = std::sqrt(sq[l]) * h;
  return ScalarField(g, std::move(out), "dist");
}

/// h^n * #{cells in `within` with u < threshold}.
inline double sublevel_measure(const ScalarField& u, double threshold, const BallRegion& within) {
  std::size_t count = 0;
  visit_ball(u.grid(), within.center, within.radius, [&](std::size_t l, double) {
    if (u[l] < threshold) ++count;
  });
  return static_cast<double>(count) * u.grid().cell_volume();
}

}  // namespace rupture
