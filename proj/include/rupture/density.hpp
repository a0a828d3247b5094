#pragma once

// Mollified energy functionals, frequency, densities and pinching.

#include <rupture/field_ops.hpp>
#include <rupture/parallel.hpp>

#include <array>
#include <optional>

namespace rupture {

/// The cutoff φ: 10 - t on [0,8], a quintic C^2 tail on [8,10], zero beyond.
struct Cutoff {
  static constexpr double kSupport = 10.0;

  static constexpr double value(double t) noexcept {
    if (t <= 8.0) return 10.0 - t;
    if (t >= 10.0) return 0.0;
    const double s = 10.0 - t;
    return s * s * s * (1.5 + s * (-1.0 + s * 0.1875));
  }
  static constexpr double derivative(double t) noexcept {
    if (t <= 8.0) return -1.0;
    if (t >= 10.0) return 0.0;
    const double s = 10.0 - t;
    return -s * s * (4.5 + s * (-4.0 + s * 0.9375));
  }
};

struct FunctionalValues {
  double D = 0.0, D_f = 0.0, F = 0.0, H = 0.0;
  double I_f = kNaN;  // NaN when H <= 0
  double theta = 0.0, theta_f = 0.0;
  Point x;
  double r = 0.0;
  double clipped_fraction = 0.0;
  double alpha = 0.0, p = 0.0;

  bool frequency_defined() const noexcept { return !std::isnan(I_f); }
};

/// Default floor applied to u before evaluating u^{-p} and u^{1-p}: the planar radial profile
/// (α²)^{-1/(p+1)} |y|^α at half a cell, so a rupture cell is weighted like its neighbours.
inline double default_u_floor(const Grid& g, double p, double delta_min = 1e-6) {
  const double a = homogeneity_exponent(p);
  return std::max(delta_min, std::pow(a * a, -1.0 / (p + 1.0)) * std::pow(0.5 * g.spacing(), a));
}

/// Precomputes ∇u and the pointwise integrands once; each evaluate() is one pass over the
/// support of φ_{x,r}, the ball of radius √10 r.
class DensityEvaluator {
 public:
  DensityEvaluator(const ScalarField& u, const ScalarField* f, double p, std::optional<double> u_floor = {})
      : u_(u), f_(f), p_(p), alpha_(homogeneity_exponent(p)) {
    const Grid& g = u.grid();
    if (f) require(f->grid() == g, ErrorCode::SizeMismatch, "forcing grid differs from field grid");
    floor_ = u_floor ? *u_floor : default_u_floor(g, p);
    require(floor_ > 0.0, ErrorCode::InvalidArgument, "u_floor must be positive");
    grad_ = gradient(u);
    grad2_.resize(g.size());
    pot_.resize(g.size());
    parallel_for(g.size(), [&](std::size_t l) {
      double s = 0.0;
      for (int a = 0; a < g.dim(); ++a) s += grad_(l, a) * grad_(l, a);
      grad2_[l] = s;
      pot_[l] = std::pow(std::max(u[l], floor_), 1.0 - p);
    });
  }

  double alpha() const noexcept { return alpha_; }
  double p() const noexcept { return p_; }
  double u_floor() const noexcept { return floor_; }
  const ScalarField& field() const noexcept { return u_; }
  const ScalarField* forcing() const noexcept { return f_; }

  /// (y - x)·∇u - α u at cell l.
  double radial_defect(std::size_t l, const Point& x) const noexcept {
    const Point y = u_.grid().center(l);
    double s = 0.0;
    for (int a = 0; a < y.dim(); ++a) s += (y[a] - x[a]) * grad_(l, a);
    return s - alpha_ * u_[l];
  }

  /// Cutoff weights over one cell: φ and φ' averaged, plus the first moment of φ' (for a
  /// linear reconstruction of u^2). Cells straddling the steep tail t ∈ [8,10] are supersampled;
  /// elsewhere the center value is used.
  struct CellWeight {
    double w = 0.0, dw = 0.0;
    std::array<double, kMaxDim> dw_moment{};
  };

  template <class Fn>
  BallCoverage for_each_weighted(const Point& x, double r, Fn&& fn) const {
    const Grid& g = u_.grid();
    const int n = g.dim();
    const double h = g.spacing();
    const double half_diag = 0.5 * h * std::sqrt(static_cast<double>(n));
    const double inv_r2 = 1.0 / (r * r);
    const double reach = std::sqrt(Cutoff::kSupport) * r;
    const int S = n <= 2 ? 8 : (n == 3 ? 4 : 3);
    std::size_t subpoints = 1;
    for (int a = 0; a < n; ++a) subpoints *= static_cast<std::size_t>(S);
    return visit_ball(g, x, reach + half_diag, [&](std::size_t l, double d2) {
      const double d = std::sqrt(d2);
      const double lo = std::max(0.0, d - half_diag), hi = d + half_diag;
      const double t_lo = lo * lo * inv_r2, t_hi = hi * hi * inv_r2;
      if (t_lo >= Cutoff::kSupport) return;
      CellWeight cw;
      if (t_hi < 8.0) {
        const double t = d2 * inv_r2;
        cw.w = Cutoff::value(t);
        cw.dw = Cutoff::derivative(t);
        fn(l, cw);
        return;
      }
      const Point y = g.center(l);
      std::array<int, kMaxDim> j{};
      for (std::size_t q = 0; q < subpoints; ++q) {
        double t = 0.0;
        std::array<double, kMaxDim> o{};
        for (int a = 0; a < n; ++a) {
          o[a] = ((j[a] + 0.5) / S - 0.5) * h;
          const double z = y[a] - x[a] + o[a];
          t += z * z;
        }
        t *= inv_r2;
        const double dw = Cutoff::derivative(t);
        cw.w += Cutoff::value(t);
        cw.dw += dw;
        for (int a = 0; a < n; ++a) cw.dw_moment[a] += dw * o[a];
        for (int a = 0; a < n && ++j[a] == S; ++a) j[a] = 0;
      }
      const double inv = 1.0 / static_cast<double>(subpoints);
      cw.w *= inv;
      cw.dw *= inv;
      for (int a = 0; a < n; ++a) cw.dw_moment[a] *= inv;
      fn(l, cw);
    });
  }

  FunctionalValues evaluate(const Point& x, double r) const {
    require(r > 0.0, ErrorCode::InvalidArgument, "radius must be positive");
    const Grid& g = u_.grid();
    const int n = g.dim();
    double sD = 0, sfu = 0, sF = 0, sH = 0, sfc = 0;
    const auto cov = for_each_weighted(x, r, [&](std::size_t l, const CellWeight& cw) {
      const double w = cw.w;
      sD += (grad2_[l] + pot_[l]) * w;
      sF += (0.5 * grad2_[l] - pot_[l] / (p_ - 1.0)) * w;
      double slope = 0.0;
      for (int a = 0; a < n; ++a) slope += grad_(l, a) * cw.dw_moment[a];
      sH += u_[l] * (u_[l] * cw.dw + 2.0 * slope);
      if (f_) {
        const double fv = (*f_)[l];
        sfu += fv * u_[l] * w;
        sfc += radial_defect(l, x) * fv * w;
      }
    });
    require(cov.inside_cells > 0, ErrorCode::EmptyIntersection, "ball does not meet the grid");
    const double vol = g.cell_volume();
    FunctionalValues v;
    v.x = x;
    v.r = r;
    v.p = p_;
    v.alpha = alpha_;
    v.clipped_fraction = cov.clipped_fraction();
    const double scale = std::pow(r, 2.0 - n) * vol;
    v.D = scale * sD;
    v.D_f = scale * (sD + sfu);
    v.F = scale * sF;
    v.H = -std::pow(r, -n) * vol * sH;
    if (v.H > 0.0) v.I_f = v.D_f / v.H;
    v.theta = std::pow(r, -2.0 * alpha_) * (v.F - alpha_ * v.H);
    v.theta_f = v.theta;
    if (f_) {
      const double m = n + 2.0 * alpha_ - 2.0;
      require(std::abs(m) > 1e-12, ErrorCode::InvalidArgument, "forcing correction undefined for n + 2α = 2");
      v.theta_f -= std::pow(r, 2.0 - 2.0 * alpha_ - n) * vol * sfc / m;
      v.theta_f -= 2.0 / (m * m) * forcing_tail(x, r);
    }
    return v;
  }

  /// ∫_0^r ρ^{-2α-n-1} ∫ |f|^2 |y-x|^4 φ'(|y-x|^2/ρ^2) dy dρ on a 32-node geometric ladder
  /// from r/1024 to r (trapezoid rule, integrand taken as 0 at ρ = 0).
  double forcing_tail(const Point& x, double r) const {
    if (!f_) return 0.0;
    const Grid& g = u_.grid();
    const int n = g.dim();
    const auto nodes = geometric_ladder(r / 1024.0, r, 32);
    std::vector<double> vals(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const double rho = nodes[i];
      double acc = 0.0;
      for_each_weighted(x, rho, [&](std::size_t l, const CellWeight& cw) {
        const double fv = (*f_)[l];
        const double d2 = dist2(g.center(l), x);
        acc += fv * fv * d2 * d2 * cw.dw;
      });
      vals[i] = std::pow(rho, -2.0 * alpha_ - n - 1.0) * acc * g.cell_volume();
    }
    double sum = 0.5 * nodes[0] * vals[0];
    for (std::size_t i = 1; i < nodes.size(); ++i) sum += 0.5 * (nodes[i] - nodes[i - 1]) * (vals[i] + vals[i - 1]);
    return sum;
  }

  /// -2 r^{-2α-n-1} ∫ |(y-x)·∇u - αu|^2 φ'(|y-x|^2/r^2): the r-derivative of θ when f ≡ 0.
  double theta_derivative_rhs(const Point& x, double r) const {
    const Grid& g = u_.grid();
    double acc = 0.0;
    for_each_weighted(x, r, [&](std::size_t l, const CellWeight& cw) {
      const double q = radial_defect(l, x);
      acc += q * q * cw.dw;
    });
    return -2.0 * std::pow(r, -2.0 * alpha_ - g.dim() - 1.0) * acc * g.cell_volume();
  }

 private:
  const ScalarField& u_;
  const ScalarField* f_;
  double p_, alpha_, floor_ = 0.0;
  VectorField grad_;
  std::vector<double> grad2_, pot_;
};

inline FunctionalValues evaluate_functionals(const ScalarField& u, const ScalarField* f, const Point& x, double r,
                                             double p) {
  return DensityEvaluator(u, f, p).evaluate(x, r);
}

namespace detail {

// Derivative at the middle node of three (possibly unevenly spaced) samples; exact for quadratics.
inline double three_point_derivative(double x0, double x1, double x2, double y0, double y1, double y2) {
  const double a = x1 - x0, b = x2 - x1;
  return (-b / (a * (a + b))) * y0 + ((b - a) / (a * b)) * y1 + (a / (b * (a + b))) * y2;
}

inline void check_ladder(const std::vector<double>& radii) {
  require(!radii.empty(), ErrorCode::EmptyLadder, "radius ladder is empty");
  require(radii.front() > 0.0, ErrorCode::InvalidArgument, "radii must be positive");
  for (std::size_t i = 1; i < radii.size(); ++i)
    require(radii[i] > radii[i - 1], ErrorCode::InvalidArgument, "radii must be strictly increasing");
}

}  // namespace detail

struct DensityProfile {
  std::vector<double> radii;
  std::vector<FunctionalValues> values;
  double monotone_defect = 0.0;
  bool truncated = false;  // radii with 10r beyond the box were dropped
  // f ≡ 0 only: dθ/dr by finite differences against its closed form, at interior ladder nodes
  std::vector<double> dtheta_fd, dtheta_rhs;
  double derivative_defect = kNaN;  // max |fd - rhs| / max |rhs|

  std::vector<double> theta_f() const {
    std::vector<double> out;
    for (const auto& v : values) out.push_back(v.theta_f);
    return out;
  }
};

inline double monotone_defect(const std::vector<double>& theta) {
  double d = 0.0;
  for (std::size_t i = 1; i < theta.size(); ++i) d = std::max(d, theta[i - 1] - theta[i]);
  return d;
}

inline DensityProfile density_profile(const DensityEvaluator& ev, const Point& x, std::vector<double> radii) {
  detail::check_ladder(radii);
  DensityProfile prof;
  const double reach = ev.field().grid().distance_to_boundary(x);
  while (!radii.empty() && Cutoff::kSupport * radii.back() > reach) {
    radii.pop_back();
    prof.truncated = true;
  }
  prof.radii = radii;
  prof.values.resize(radii.size());
  parallel_for(radii.size(), [&](std::size_t i) { prof.values[i] = ev.evaluate(x, radii[i]); });
  prof.monotone_defect = monotone_defect(prof.theta_f());
  if (!ev.forcing() && radii.size() >= 3) {
    double scale = 0.0, worst = 0.0;
    for (std::size_t i = 1; i + 1 < radii.size(); ++i) {
      const double fd = detail::three_point_derivative(radii[i - 1], radii[i], radii[i + 1], prof.values[i - 1].theta,
                                                       prof.values[i].theta, prof.values[i + 1].theta);
      const double rhs = ev.theta_derivative_rhs(x, radii[i]);
      prof.dtheta_fd.push_back(fd);
      prof.dtheta_rhs.push_back(rhs);
      scale = std::max(scale, std::abs(rhs));
      worst = std::max(worst, std::abs(fd - rhs));
    }
    prof.derivative_defect = scale > 0.0 ? worst / scale : worst;
  }
  return prof;
}

inline DensityProfile density_profile(const ScalarField& u, const ScalarField* f, const Point& x,
                                      std::vector<double> radii, double p) {
  return density_profile(DensityEvaluator(u, f, p), x, std::move(radii));
}

struct HdIdentityReport {
  std::vector<double> radii;  // interior ladder nodes
  std::vector<double> dH, Df_over_r;
  double max_relative_defect = 0.0;
};

/// dH/dr by three-point differences against D_f / r at interior nodes of the ladder.
inline HdIdentityReport hd_identity_check(const DensityEvaluator& ev, const Point& x, const std::vector<double>& radii) {
  detail::check_ladder(radii);
  require(radii.size() >= 3, ErrorCode::EmptyLadder, "identity check needs >= 3 radii");
  std::vector<FunctionalValues> v(radii.size());
  parallel_for(radii.size(), [&](std::size_t i) { v[i] = ev.evaluate(x, radii[i]); });
  HdIdentityReport rep;
  for (std::size_t i = 1; i + 1 < radii.size(); ++i) {
    const double d =
        detail::three_point_derivative(radii[i - 1], radii[i], radii[i + 1], v[i - 1].H, v[i].H, v[i + 1].H);
    const double rhs = v[i].D_f / radii[i];
    rep.radii.push_back(radii[i]);
    rep.dH.push_back(d);
    rep.Df_over_r.push_back(rhs);
    rep.max_relative_defect = std::max(rep.max_relative_defect, std::abs(d - rhs) / std::max(std::abs(rhs), 1e-300));
  }
  return rep;
}

inline HdIdentityReport hd_identity_check(const ScalarField& u, const ScalarField* f, const Point& x,
                                          const std::vector<double>& radii, double p) {
  return hd_identity_check(DensityEvaluator(u, f, p), x, radii);
}

/// r^{-2α-n} ∫_{B_{4r}(x)} |(y-x)·∇u - αu|^2.
inline double homogeneity_defect(const DensityEvaluator& ev, const Point& x, double r) {
  require(r > 0.0, ErrorCode::InvalidArgument, "radius must be positive");
  const Grid& g = ev.field().grid();
  double acc = 0.0;
  const auto cov = visit_ball(g, x, 4.0 * r, [&](std::size_t l, double) {
    const double q = ev.radial_defect(l, x);
    acc += q * q;
  });
  require(cov.inside_cells > 0, ErrorCode::EmptyIntersection, "ball does not meet the grid");
  return std::pow(r, -2.0 * ev.alpha() - g.dim()) * acc * g.cell_volume();
}

inline double homogeneity_defect(const ScalarField& u, const Point& x, double r, double p) {
  return homogeneity_defect(DensityEvaluator(u, nullptr, p), x, r);
}

/// W_f(x, s) = θ_f(x, 2s) - θ_f(x, s).
inline double pinch_W(const DensityEvaluator& ev, const Point& x, double s) {
  return ev.evaluate(x, 2.0 * s).theta_f - ev.evaluate(x, s).theta_f;
}

inline double pinch_W(const ScalarField& u, const ScalarField* f, const Point& x, double s, double p) {
  return pinch_W(DensityEvaluator(u, f, p), x, s);
}

struct DyadicDrop {
  double s_x = 0.0;
  double drop = 0.0;        // θ_f(s_x) - θ_f(s_x / 2)
  double total = 0.0;       // θ_f(s) - θ_f(s / 2^ℓ)
  std::size_t levels = 0;   // ℓ with 2^{-ℓ-1} <= σ < 2^{-ℓ}
  std::vector<double> scales, drops;
};

/// Smallest one-step drop among the scales s, s/2, ..., s/2^{ℓ-1}; by pigeonhole drop <= total/ℓ.
inline DyadicDrop dyadic_drop(const DensityEvaluator& ev, const Point& x, double s, double sigma) {
  require(sigma > 0.0 && sigma < 1.0 && s > 0.0, ErrorCode::InvalidArgument, "need 0 < sigma < 1 and s > 0");
  DyadicDrop out;
  out.levels = static_cast<std::size_t>(std::max(1.0, std::floor(-std::log2(sigma))));
  std::vector<double> theta(out.levels + 1);
  parallel_for(theta.size(), [&](std::size_t i) { theta[i] = ev.evaluate(x, std::ldexp(s, -static_cast<int>(i))).theta_f; });
  out.drop = kInf;
  for (std::size_t i = 0; i < out.levels; ++i) {
    const double d = theta[i] - theta[i + 1];
    out.scales.push_back(std::ldexp(s, -static_cast<int>(i)));
    out.drops.push_back(d);
    if (d < out.drop) {
      out.drop = d;
      out.s_x = out.scales.back();
    }
  }
  out.total = theta.front() - theta.back();
  return out;
}

enum class RuptureClass { RupturelikeDensityBounded, PositiveDensityDiverging };

inline const char* to_string(RuptureClass c) {
  return c == RuptureClass::RupturelikeDensityBounded ? "RupturelikeDensityBounded" : "PositiveDensityDiverging";
}

struct Classification {
  RuptureClass kind = RuptureClass::RupturelikeDensityBounded;
  std::vector<double> radii;  // dyadic, decreasing from r
  std::vector<double> theta_f, I_f;
  double inf_u = kInf;        // inf over B_r(x)
  double min_theta_f = kInf;
  double density = kNaN;      // θ_f at the smallest radius (the grid's stand-in for the r -> 0 limit)
};

/// Positive when min θ_f < -C_star, or when I_f falls below α at the smallest radius after
/// decreasing along the ladder. The ladder stops at 4h; fewer than three radii is an error.
inline Classification rupture_classifier(const DensityEvaluator& ev, const Point& x, double r, double C_star) {
  const Grid& g = ev.field().grid();
  Classification c;
  for (double s = r; s >= 4.0 * g.spacing() * (1.0 - 1e-12); s *= 0.5) c.radii.push_back(s);
  require(c.radii.size() >= 3, ErrorCode::EmptyLadder, "dyadic ladder from r to 4h has fewer than 3 radii");
  std::vector<FunctionalValues> v(c.radii.size());
  parallel_for(v.size(), [&](std::size_t i) { v[i] = ev.evaluate(x, c.radii[i]); });
  for (const auto& fv : v) {
    c.theta_f.push_back(fv.theta_f);
    c.I_f.push_back(fv.I_f);
    c.min_theta_f = std::min(c.min_theta_f, fv.theta_f);
  }
  c.density = c.theta_f.back();
  visit_ball(g, x, r, [&](std::size_t l, double) { c.inf_u = std::min(c.inf_u, ev.field()[l]); });
  const double last = c.I_f.back();
  const bool frequency_falls = std::isnan(last) || (last < ev.alpha() && last < c.I_f.front());
  if (c.min_theta_f < -C_star || frequency_falls) c.kind = RuptureClass::PositiveDensityDiverging;
  return c;
}

}  // namespace rupture
