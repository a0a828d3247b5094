#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rupture {

inline constexpr int kMaxDim = 4;
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class ErrorCode {
  InvalidArgument,
  GridTooSmall,
  CellBudgetExceeded,
  EmptyIntersection,
  EmptyMask,
  BadMagic,
  BadVersion,
  Truncated,
  SizeMismatch,
  IoFailure,
  QuadratureFailure,
  NegativeInit,
  BoundaryMismatch,
  NoCandidates,
  EmptyLadder,
  ZeroMass,
  EmptySample,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::GridTooSmall: return "GridTooSmall";
    case ErrorCode::CellBudgetExceeded: return "CellBudgetExceeded";
    case ErrorCode::EmptyIntersection: return "EmptyIntersection";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::BadVersion: return "BadVersion";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::QuadratureFailure: return "QuadratureFailure";
    case ErrorCode::NegativeInit: return "NegativeInit";
    case ErrorCode::BoundaryMismatch: return "BoundaryMismatch";
    case ErrorCode::NoCandidates: return "NoCandidates";
    case ErrorCode::EmptyLadder: return "EmptyLadder";
    case ErrorCode::ZeroMass: return "ZeroMass";
    case ErrorCode::EmptySample: return "EmptySample";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

/// Point in R^n, n <= kMaxDim, stored inline.
class Point {
 public:
  Point() = default;
  explicit Point(int dim) : dim_(dim) {
    require(dim >= 0 && dim <= kMaxDim, ErrorCode::InvalidArgument, "point dimension out of range");
  }
  Point(std::initializer_list<double> xs) : Point(static_cast<int>(xs.size())) {
    std::copy(xs.begin(), xs.end(), c_.begin());
  }
  static Point from(std::span<const double> xs) {
    Point p(static_cast<int>(xs.size()));
    std::copy(xs.begin(), xs.end(), p.c_.begin());
    return p;
  }
  static Point zero(int dim) { return Point(dim); }

  int dim() const noexcept { return dim_; }
  double& operator[](int i) noexcept { return c_[static_cast<std::size_t>(i)]; }
  double operator[](int i) const noexcept { return c_[static_cast<std::size_t>(i)]; }
  const double* begin() const noexcept { return c_.data(); }
  const double* end() const noexcept { return c_.data() + dim_; }
  std::span<const double> coords() const noexcept { return {c_.data(), static_cast<std::size_t>(dim_)}; }

  Point& operator+=(const Point& o) noexcept {
    for (int i = 0; i < dim_; ++i) c_[i] += o.c_[i];
    return *this;
  }
  Point& operator-=(const Point& o) noexcept {
    for (int i = 0; i < dim_; ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Point& operator*=(double s) noexcept {
    for (int i = 0; i < dim_; ++i) c_[i] *= s;
    return *this;
  }
  friend Point operator+(Point a, const Point& b) noexcept { return a += b; }
  friend Point operator-(Point a, const Point& b) noexcept { return a -= b; }
  friend Point operator*(Point a, double s) noexcept { return a *= s; }
  friend Point operator*(double s, Point a) noexcept { return a *= s; }
  friend bool operator==(const Point& a, const Point& b) noexcept {
    if (a.dim_ != b.dim_) return false;
    for (int i = 0; i < a.dim_; ++i)
      if (a.c_[i] != b.c_[i]) return false;
    return true;
  }

  double dot(const Point& o) const noexcept {
    double s = 0.0;
    for (int i = 0; i < dim_; ++i) s += c_[i] * o.c_[i];
    return s;
  }
  double norm2() const noexcept { return dot(*this); }
  double norm() const noexcept { return std::sqrt(norm2()); }

 private:
  std::array<double, kMaxDim> c_{};
  int dim_ = 0;
};

inline double dist2(const Point& a, const Point& b) noexcept { return (a - b).norm2(); }
inline double dist(const Point& a, const Point& b) noexcept { return std::sqrt(dist2(a, b)); }

/// Volume of the unit ball in R^n.
inline double unit_ball_volume(int n) {
  return std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n + 1.0);
}

/// alpha = 2/(p+1), the homogeneity exponent of the nonlinearity u^{-p}.
inline double homogeneity_exponent(double p) {
  require(p > 1.0, ErrorCode::InvalidArgument, "p must exceed 1");
  return 2.0 / (p + 1.0);
}

/// Geometric ladder of `count` values from lo to hi inclusive.
inline std::vector<double> geometric_ladder(double lo, double hi, int count) {
  require(lo > 0.0 && hi >= lo && count >= 1, ErrorCode::InvalidArgument, "bad ladder bounds");
  std::vector<double> out(static_cast<std::size_t>(count));
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  const double step = std::log(hi / lo) / (count - 1);
  for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = lo * std::exp(step * i);
  out.back() = hi;
  return out;
}

/// Least-squares slope of y against x.
inline double fit_slope(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorCode::InvalidArgument, "slope fit needs >= 2 points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  require(sxx > 0.0, ErrorCode::InvalidArgument, "degenerate abscissae in slope fit");
  return sxy / sxx;
}

}  // namespace rupture
