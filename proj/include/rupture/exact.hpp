#pragma once

// Closed-form and quadrature-exact solutions of  Δu = u^{-p}.

#include <rupture/grid.hpp>

#include <array>
#include <vector>

namespace rupture {

/// u(x) = coeff * |x_perp|^alpha, x_perp the component orthogonal to an optional k-frame.
/// coeff = (alpha (alpha + m - 2))^{-1/(p+1)} with m = n - k the number of active directions,
/// obtained by substituting c r^alpha into the radial Laplacian in R^m.
class HomogeneousSolution {
 public:
  HomogeneousSolution(int dim, double p, std::vector<Point> axis_frame = {})
      : dim_(dim), p_(p), alpha_(homogeneity_exponent(p)), frame_(std::move(axis_frame)) {
    require(dim >= 2 && dim <= kMaxDim, ErrorCode::InvalidArgument, "homogeneous solution needs n >= 2");
    for (const auto& v : frame_) require(v.dim() == dim, ErrorCode::InvalidArgument, "frame vector dimension");
    orthonormalize();
    const int active = dim - static_cast<int>(frame_.size());
    require(active >= 2, ErrorCode::InvalidArgument, "need at least two directions orthogonal to the axis");
    coeff_ = std::pow(alpha_ * (alpha_ + active - 2.0), -1.0 / (p + 1.0));
  }

  int dim() const noexcept { return dim_; }
  double p() const noexcept { return p_; }
  double alpha() const noexcept { return alpha_; }
  double coeff() const noexcept { return coeff_; }
  const std::vector<Point>& axis_frame() const noexcept { return frame_; }

  Point perp(const Point& x) const noexcept {
    Point r = x;
    for (const auto& v : frame_) r -= v * v.dot(x);
    return r;
  }
  double value(const Point& x) const noexcept {
    const double rho = perp(x).norm();
    return rho == 0.0 ? 0.0 : coeff_ * std::pow(rho, alpha_);
  }
  /// |∇u|^2 = (coeff alpha)^2 |x_perp|^{2 alpha - 2}.
  double gradient_norm2(const Point& x) const noexcept {
    const double rho = perp(x).norm();
    return std::pow(coeff_ * alpha_, 2) * std::pow(rho, 2.0 * alpha_ - 2.0);
  }

 private:
  void orthonormalize() {
    std::vector<Point> q;
    for (auto v : frame_) {
      for (const auto& e : q) v -= e * e.dot(v);
      const double nv = v.norm();
      require(nv > 1e-12, ErrorCode::InvalidArgument, "axis frame is degenerate");
      q.push_back(v * (1.0 / nv));
    }
    frame_ = std::move(q);
  }

  int dim_;
  double p_;
  double alpha_;
  double coeff_ = 0.0;
  std::vector<Point> frame_;
};

inline ScalarField homogeneous_field(const HomogeneousSolution& sol, const Grid& grid) {
  require(grid.dim() == sol.dim(), ErrorCode::InvalidArgument, "grid dimension mismatch");
  return ScalarField::sample(grid, [&](const Point& x) { return sol.value(x); }, "u_exact");
}

/// Even convex solution of u'' = u^{-p} with u(0) = eps, u'(0) = 0, built from the inverse map
///   v(s) = ∫_eps^s dt / sqrt(lambda (eps^{1-p} - t^{1-p})),   lambda = 2/(p-1),   u = v^{-1}(|r|).
/// The substitution t = eps + tau^2 removes the endpoint singularity; the integrand in tau is smooth.
class OdeSolution {
 public:
  OdeSolution(double p, double eps, double s_max) : p_(p), eps_(eps), lambda_(2.0 / (p - 1.0)) {
    require(p > 1.0, ErrorCode::InvalidArgument, "p must exceed 1");
    require(eps > 0.0 && eps < s_max, ErrorCode::InvalidArgument, "need 0 < eps < s_max");
    tabulate(std::sqrt(s_max - eps));
  }

  double p() const noexcept { return p_; }
  double eps() const noexcept { return eps_; }
  double lambda() const noexcept { return lambda_; }
  double s_max() const noexcept { return eps_ + knots_.back() * knots_.back(); }
  /// Largest |r| at which u is tabulated.
  double r_max() const noexcept { return cumulative_.back(); }

  /// v(s) for eps <= s <= s_max.
  double v(double s) const {
    require(s >= eps_ && s <= s_max() * (1 + 1e-14), ErrorCode::InvalidArgument, "s outside the tabulated range");
    return integral_to(std::sqrt(std::max(0.0, s - eps_)));
  }

  /// u(r) = v^{-1}(|r|).
  double value(double r) const {
    const double target = std::abs(r);
    require(target <= r_max() * (1 + 1e-14), ErrorCode::InvalidArgument, "r outside the tabulated range");
    if (target == 0.0) return eps_;
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
    std::size_t k = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, it - cumulative_.begin() - 1));
    k = std::min(k, knots_.size() - 2);
    double lo = knots_[k], hi = knots_[k + 1];
    // Newton on V(tau) = target with V' = g, safeguarded by bisection.
    double tau = 0.5 * (lo + hi);
    for (int iter = 0; iter < 100; ++iter) {
      const double f = panel_integral(k, tau) - target;
      if (f > 0) hi = tau; else lo = tau;
      double next = tau - f / integrand(tau);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - tau) <= 1e-16 * std::max(1.0, tau)) {
        tau = next;
        break;
      }
      tau = next;
    }
    return eps_ + tau * tau;
  }

  /// u'(r) from the first integral (u')^2 = lambda (eps^{1-p} - u^{1-p}), signed like r.
  double derivative(double r) const {
    const double u = value(r);
    const double d = std::sqrt(lambda_ * first_integral_gap(u));
    return r < 0 ? -d : d;
  }

 private:
  // eps^{1-p} - t^{1-p} without cancellation.
  double first_integral_gap(double t) const noexcept {
    return std::pow(eps_, 1.0 - p_) * -std::expm1((1.0 - p_) * std::log1p((t - eps_) / eps_));
  }

  double integrand(double tau) const noexcept {
    if (tau == 0.0) return std::sqrt(2.0) * std::pow(eps_, 0.5 * p_);
    const double gap = std::pow(eps_, 1.0 - p_) * -std::expm1((1.0 - p_) * std::log1p(tau * tau / eps_));
    return 2.0 * tau / std::sqrt(lambda_ * gap);
  }

  static constexpr std::array<double, 8> kGaussX = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                                    -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                                    0.7966664774136267,  0.9602898564975363};
  static constexpr std::array<double, 8> kGaussW = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                                    0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                                    0.2223810344533745, 0.1012285362903763};

  double gauss(double a, double b) const noexcept {
    const double c = 0.5 * (a + b), hw = 0.5 * (b - a);
    double acc = 0.0;
    for (std::size_t i = 0; i < 8; ++i) acc += kGaussW[i] * integrand(c + hw * kGaussX[i]);
    return acc * hw;
  }

  double panel_integral(std::size_t k, double tau) const noexcept {
    return cumulative_[k] + gauss(knots_[k], tau);
  }

  double integral_to(double tau) const {
    auto it = std::upper_bound(knots_.begin(), knots_.end(), tau);
    std::size_t k = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, it - knots_.begin() - 1));
    k = std::min(k, knots_.size() - 2);
    return panel_integral(k, tau);
  }

  void tabulate(double tau_max) {
    // g varies on the scale sqrt(eps) near tau = 0 and is nearly linear beyond.
    const double width = std::min(std::sqrt(eps_), tau_max) / 64.0;
    const auto panels = static_cast<std::size_t>(std::ceil(tau_max / width));
    knots_.resize(panels + 1);
    cumulative_.assign(panels + 1, 0.0);
    for (std::size_t k = 0; k <= panels; ++k)
      knots_[k] = tau_max * static_cast<double>(k) / static_cast<double>(panels);
    for (std::size_t k = 0; k < panels; ++k) {
      const double a = knots_[k], b = knots_[k + 1], m = 0.5 * (a + b);
      const double whole = gauss(a, b);
      const double split = gauss(a, m) + gauss(m, b);
      require(std::abs(whole - split) <= 1e-13 * std::max(1.0, std::abs(split)), ErrorCode::QuadratureFailure,
              "ODE profile quadrature did not converge");
      cumulative_[k + 1] = cumulative_[k] + split;
    }
  }

  double p_;
  double eps_;
  double lambda_;
  std::vector<double> knots_;       // tau nodes
  std::vector<double> cumulative_;  // v(eps + tau_k^2)
};

inline OdeSolution ode_profile(double p, double eps, double s_max) { return OdeSolution(p, eps, s_max); }

/// u(x) = U(x_axis): the 1-D profile extended constantly in the remaining directions.
inline ScalarField ode_field(const OdeSolution& sol, const Grid& grid, int axis = 0) {
  return ScalarField::sample(grid, [&](const Point& x) { return sol.value(x[axis]); }, "u_ode");
}

}  // namespace rupture
