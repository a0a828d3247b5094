#pragma once

// Uniform cell-centered grids and the fields that live on them.

#include <rupture/common.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace rupture {

inline constexpr std::size_t kDefaultCellBudget = std::size_t{1} << 27;

using CellIndex = std::array<std::int64_t, kMaxDim>;

class Grid {
 public:
  Grid() = default;

  Grid(std::vector<std::size_t> shape, Point origin, std::vector<double> spacing,
       std::size_t cell_budget = kDefaultCellBudget)
      : dim_(static_cast<int>(shape.size())), origin_(origin) {
    require(dim_ >= 1 && dim_ <= kMaxDim, ErrorCode::InvalidArgument, "grid dimension must be in [1,4]");
    require(origin.dim() == dim_ && spacing.size() == shape.size(), ErrorCode::InvalidArgument,
            "origin/spacing arity must match shape");
    size_ = 1;
    for (int i = 0; i < dim_; ++i) {
      require(shape[i] > 0, ErrorCode::InvalidArgument, "shape entries must be positive");
      require(spacing[i] > 0.0 && std::isfinite(spacing[i]), ErrorCode::InvalidArgument,
              "spacing must be positive");
      require(std::abs(spacing[i] - spacing[0]) <= 1e-12 * spacing[0], ErrorCode::InvalidArgument,
              "grid spacing must be isotropic");
      shape_[i] = shape[i];
      spacing_[i] = spacing[i];
      require(size_ <= cell_budget / shape[i], ErrorCode::CellBudgetExceeded, "grid exceeds cell budget");
      size_ *= shape[i];
    }
    std::size_t stride = 1;
    for (int i = dim_ - 1; i >= 0; --i) {
      strides_[i] = stride;
      stride *= shape_[i];
    }
  }

  /// Cube [-half_width, half_width]^n split into `cells` cells per axis.
  static Grid box(int dim, std::size_t cells, double half_width) {
    const double h = 2.0 * half_width / static_cast<double>(cells);
    Point o(dim);
    for (int i = 0; i < dim; ++i) o[i] = -half_width + 0.5 * h;
    return Grid(std::vector<std::size_t>(dim, cells), o, std::vector<double>(dim, h));
  }

  /// 2N+1 cells per axis with a cell center exactly at the origin.
  static Grid symmetric(int dim, std::size_t half_cells, double h) {
    Point o(dim);
    for (int i = 0; i < dim; ++i) o[i] = -static_cast<double>(half_cells) * h;
    return Grid(std::vector<std::size_t>(dim, 2 * half_cells + 1), o, std::vector<double>(dim, h));
  }

  int dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return size_; }
  std::size_t shape(int axis) const noexcept { return shape_[axis]; }
  std::vector<std::size_t> shape() const { return {shape_.begin(), shape_.begin() + dim_}; }
  const Point& origin() const noexcept { return origin_; }
  double spacing() const noexcept { return spacing_[0]; }
  double spacing(int axis) const noexcept { return spacing_[axis]; }
  std::vector<double> spacings() const { return {spacing_.begin(), spacing_.begin() + dim_}; }
  double cell_volume() const noexcept { return std::pow(spacing_[0], dim_); }
  std::size_t stride(int axis) const noexcept { return strides_[axis]; }

  double box_lo(int axis) const noexcept { return origin_[axis] - 0.5 * spacing_[axis]; }
  double box_hi(int axis) const noexcept {
    return origin_[axis] + (static_cast<double>(shape_[axis]) - 0.5) * spacing_[axis];
  }

  std::size_t linear(const CellIndex& idx) const noexcept {
    std::size_t l = 0;
    for (int i = 0; i < dim_; ++i) l += static_cast<std::size_t>(idx[i]) * strides_[i];
    return l;
  }
  CellIndex unravel(std::size_t l) const noexcept {
    CellIndex idx{};
    for (int i = 0; i < dim_; ++i) {
      idx[i] = static_cast<std::int64_t>(l / strides_[i]);
      l %= strides_[i];
    }
    return idx;
  }
  Point center(const CellIndex& idx) const noexcept {
    Point p(dim_);
    for (int i = 0; i < dim_; ++i) p[i] = origin_[i] + static_cast<double>(idx[i]) * spacing_[i];
    return p;
  }
  Point center(std::size_t l) const noexcept { return center(unravel(l)); }

  /// Linear index of the cell whose center is closest to x (clamped into the grid).
  std::size_t nearest(const Point& x) const noexcept {
    CellIndex idx{};
    for (int i = 0; i < dim_; ++i) {
      const double t = std::round((x[i] - origin_[i]) / spacing_[i]);
      idx[i] = std::clamp<std::int64_t>(static_cast<std::int64_t>(t), 0, static_cast<std::int64_t>(shape_[i]) - 1);
    }
    return linear(idx);
  }

  bool on_boundary(const CellIndex& idx) const noexcept {
    for (int i = 0; i < dim_; ++i)
      if (idx[i] == 0 || idx[i] + 1 == static_cast<std::int64_t>(shape_[i])) return true;
    return false;
  }

  bool in_box(const Point& x) const noexcept {
    for (int i = 0; i < dim_; ++i)
      if (x[i] < box_lo(i) || x[i] > box_hi(i)) return false;
    return true;
  }

  /// Signed distance from x to the nearest box face (positive inside).
  double distance_to_boundary(const Point& x) const noexcept {
    double d = kInf;
    for (int i = 0; i < dim_; ++i) d = std::min({d, x[i] - box_lo(i), box_hi(i) - x[i]});
    return d;
  }

  friend bool operator==(const Grid& a, const Grid& b) noexcept {
    if (a.dim_ != b.dim_ || !(a.origin_ == b.origin_)) return false;
    for (int i = 0; i < a.dim_; ++i)
      if (a.shape_[i] != b.shape_[i] || a.spacing_[i] != b.spacing_[i]) return false;
    return true;
  }

 private:
  int dim_ = 0;
  std::array<std::size_t, kMaxDim> shape_{};
  std::array<std::size_t, kMaxDim> strides_{};
  std::array<double, kMaxDim> spacing_{};
  Point origin_;
  std::size_t size_ = 0;
};

struct BallRegion {
  Point center;
  double radius = 1.0;

  BallRegion() = default;
  BallRegion(Point c, double r) : center(c), radius(r) {
    require(r > 0.0, ErrorCode::InvalidArgument, "ball radius must be positive");
  }
};

class ScalarField {
 public:
  ScalarField() = default;
  ScalarField(Grid grid, std::vector<double> values, std::string name = "u")
      : grid_(std::move(grid)), values_(std::move(values)), name_(std::move(name)) {
    require(values_.size() == grid_.size(), ErrorCode::SizeMismatch, "value count does not match grid");
  }
  ScalarField(Grid grid, double fill, std::string name = "u")
      : grid_(std::move(grid)), values_(grid_.size(), fill), name_(std::move(name)) {}

  template <class Fn>
  static ScalarField sample(const Grid& grid, Fn&& fn, std::string name = "u") {
    std::vector<double> v(grid.size());
    for (std::size_t l = 0; l < grid.size(); ++l) v[l] = fn(grid.center(l));
    return ScalarField(grid, std::move(v), std::move(name));
  }

  const Grid& grid() const noexcept { return grid_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::vector<double>& values() noexcept { return values_; }
  const std::string& name() const noexcept { return name_; }
  void set_name(std::string n) { name_ = std::move(n); }
  double operator[](std::size_t l) const noexcept { return values_[l]; }
  double& operator[](std::size_t l) noexcept { return values_[l]; }
  double at(const CellIndex& idx) const noexcept { return values_[grid_.linear(idx)]; }

  bool all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }
  bool nonnegative() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return v >= 0.0; });
  }

  /// Multilinear interpolation; NaN outside the hull of cell centers.
  double interpolate(const Point& x) const noexcept {
    const int n = grid_.dim();
    const double h = grid_.spacing();
    std::array<std::int64_t, kMaxDim> base{};
    std::array<double, kMaxDim> frac{};
    for (int i = 0; i < n; ++i) {
      const double t = (x[i] - grid_.origin()[i]) / h;
      const auto last = static_cast<double>(grid_.shape(i) - 1);
      if (t < -1e-9 || t > last + 1e-9) return kNaN;
      if (grid_.shape(i) == 1) {
        base[i] = 0;
        frac[i] = 0.0;
        continue;
      }
      auto b = static_cast<std::int64_t>(std::floor(std::clamp(t, 0.0, last)));
      b = std::min<std::int64_t>(b, static_cast<std::int64_t>(grid_.shape(i)) - 2);
      base[i] = b;
      frac[i] = std::clamp(t - static_cast<double>(b), 0.0, 1.0);
    }
    double acc = 0.0;
    for (int corner = 0; corner < (1 << n); ++corner) {
      double w = 1.0;
      std::size_t l = 0;
      for (int i = 0; i < n; ++i) {
        const bool up = (corner >> i) & 1;
        w *= up ? frac[i] : 1.0 - frac[i];
        l += static_cast<std::size_t>(base[i] + (up ? 1 : 0)) * grid_.stride(i);
      }
      if (w != 0.0) acc += w * values_[l];
    }
    return acc;
  }

  friend bool operator==(const ScalarField& a, const ScalarField& b) noexcept {
    if (!(a.grid_ == b.grid_) || a.values_.size() != b.values_.size()) return false;
    for (std::size_t i = 0; i < a.values_.size(); ++i) {
      // bitwise comparison so NaN sentinels compare equal
      if (std::bit_cast<std::uint64_t>(a.values_[i]) != std::bit_cast<std::uint64_t>(b.values_[i])) return false;
    }
    return true;
  }

 private:
  Grid grid_;
  std::vector<double> values_;
  std::string name_ = "u";
};

/// n components per cell, interleaved.
class VectorField {
 public:
  VectorField() = default;
  explicit VectorField(Grid grid) : grid_(std::move(grid)), values_(grid_.size() * grid_.dim(), 0.0) {}

  const Grid& grid() const noexcept { return grid_; }
  int components() const noexcept { return grid_.dim(); }
  double operator()(std::size_t cell, int axis) const noexcept {
    return values_[cell * static_cast<std::size_t>(grid_.dim()) + axis];
  }
  double& operator()(std::size_t cell, int axis) noexcept {
    return values_[cell * static_cast<std::size_t>(grid_.dim()) + axis];
  }
  Point at(std::size_t cell) const noexcept {
    Point g(grid_.dim());
    for (int i = 0; i < grid_.dim(); ++i) g[i] = (*this)(cell, i);
    return g;
  }
  double norm2(std::size_t cell) const noexcept {
    double s = 0.0;
    for (int i = 0; i < grid_.dim(); ++i) s += (*this)(cell, i) * (*this)(cell, i);
    return s;
  }
  ScalarField component(int axis) const {
    std::vector<double> v(grid_.size());
    for (std::size_t l = 0; l < grid_.size(); ++l) v[l] = (*this)(l, axis);
    return ScalarField(grid_, std::move(v), "grad_" + std::to_string(axis));
  }

 private:
  Grid grid_;
  std::vector<double> values_;
};

class Mask {
 public:
  Mask() = default;
  explicit Mask(Grid grid) : grid_(std::move(grid)), values_(grid_.size(), 0) {}
  Mask(Grid grid, std::vector<std::uint8_t> values) : grid_(std::move(grid)), values_(std::move(values)) {
    require(values_.size() == grid_.size(), ErrorCode::SizeMismatch, "mask size does not match grid");
  }
  template <class Pred>
  static Mask where(const ScalarField& f, Pred&& pred) {
    Mask m(f.grid());
    for (std::size_t l = 0; l < f.grid().size(); ++l) m.values_[l] = pred(f[l]) ? 1 : 0;
    return m;
  }

  const Grid& grid() const noexcept { return grid_; }
  bool operator[](std::size_t l) const noexcept { return values_[l] != 0; }
  void set(std::size_t l, bool v) noexcept { values_[l] = v ? 1 : 0; }
  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count_if(values_.begin(), values_.end(), [](auto v) { return v != 0; }));
  }
  bool any() const noexcept { return count() > 0; }

 private:
  Grid grid_;
  std::vector<std::uint8_t> values_;
};

struct BallCoverage {
  std::size_t inside_cells = 0;   // lattice points in the ball and in the grid
  std::size_t lattice_cells = 0;  // lattice points in the ball, grid extended to infinity
  double clipped_fraction() const noexcept {
    return lattice_cells == 0 ? 0.0
                              : 1.0 - static_cast<double>(inside_cells) / static_cast<double>(lattice_cells);
  }
};

/// Visits every cell whose center lies in the open ball B_radius(center).
/// fn(linear_index, squared_distance). Ordering is row-major and deterministic.
template <class Fn>
BallCoverage visit_ball(const Grid& grid, const Point& center, double radius, Fn&& fn) {
  const int n = grid.dim();
  const double h = grid.spacing();
  const double r2 = radius * radius;
  BallCoverage cov;
  CellIndex lo{}, hi{}, idx{};
  for (int i = 0; i < n - 1; ++i) {
    lo[i] = static_cast<std::int64_t>(std::ceil((center[i] - radius - grid.origin()[i]) / h));
    hi[i] = static_cast<std::int64_t>(std::floor((center[i] + radius - grid.origin()[i]) / h));
    if (hi[i] < lo[i]) return cov;
    idx[i] = lo[i];
  }
  const int last = n - 1;
  const auto shape_last = static_cast<std::int64_t>(grid.shape(last));
  while (true) {
    double partial = 0.0;
    bool outside_grid = false;
    for (int i = 0; i < last; ++i) {
      const double d = grid.origin()[i] + static_cast<double>(idx[i]) * h - center[i];
      partial += d * d;
      if (idx[i] < 0 || idx[i] >= static_cast<std::int64_t>(grid.shape(i))) outside_grid = true;
    }
    if (partial < r2) {
      const double w = std::sqrt(r2 - partial);
      auto a = static_cast<std::int64_t>(std::ceil((center[last] - w - grid.origin()[last]) / h));
      auto b = static_cast<std::int64_t>(std::floor((center[last] + w - grid.origin()[last]) / h));
      auto d2_at = [&](std::int64_t j) {
        const double d = grid.origin()[last] + static_cast<double>(j) * h - center[last];
        return partial + d * d;
      };
      while (a <= b && d2_at(a) >= r2) ++a;
      while (b >= a && d2_at(b) >= r2) --b;
      if (a <= b) {
        cov.lattice_cells += static_cast<std::size_t>(b - a + 1);
        if (!outside_grid) {
          const std::int64_t ca = std::max<std::int64_t>(a, 0);
          const std::int64_t cb = std::min<std::int64_t>(b, shape_last - 1);
          if (ca <= cb) {
            idx[last] = ca;
            std::size_t l = grid.linear(idx);
            for (std::int64_t j = ca; j <= cb; ++j, ++l) {
              fn(l, d2_at(j));
              ++cov.inside_cells;
            }
          }
        }
      }
    }
    int axis = last - 1;
    while (axis >= 0) {
      if (++idx[axis] <= hi[axis]) break;
      idx[axis] = lo[axis];
      --axis;
    }
    if (axis < 0) break;
  }
  return cov;
}

}  // namespace rupture
