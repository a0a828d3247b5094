#include <rupture/field_io.hpp>
#include <rupture/field_ops.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

using namespace rupture;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("rupture_test_" + name);
}

double sqrt_solution(const Point& x) {
  const double r = x.norm();
  return std::sqrt(2.0) * std::sqrt(r);
}

}  // namespace

TEST(FieldIo, ZeroFieldRoundTrip) {
  const ScalarField u(Grid::box(2, 4, 1.0), 0.0);
  const auto path = temp_path("zeros.rfld");
  save_field(u, path);
  EXPECT_EQ(load_field(path), u);
}

TEST(FieldIo, RandomFiniteValuesRoundTripBitExact) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> coord(-1e3, 1e3);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 1 + trial % 4;
    std::vector<std::size_t> shape;
    for (int i = 0; i < n; ++i) shape.push_back(1 + rng() % 6);
    Point origin(n);
    for (int i = 0; i < n; ++i) origin[i] = coord(rng);
    const double h = std::ldexp(1.0 + (rng() % 1000) / 1000.0, -static_cast<int>(rng() % 20));
    Grid g(shape, origin, std::vector<double>(n, h));
    std::vector<double> values(g.size());
    for (auto& v : values) {
      // arbitrary finite bit patterns, including subnormals and signed zeros
      double d;
      do d = std::bit_cast<double>(rng()); while (!std::isfinite(d));
      v = d;
    }
    const ScalarField u(g, values);
    EXPECT_EQ(decode_field(encode_field(u)), u) << "trial " << trial;
  }
}

TEST(FieldIo, ByteLengthMatchesFormat) {
  const ScalarField u(Grid::box(2, 512, 1.0), 1.0);
  const auto bytes = encode_field(u);
  // magic + version + n + 2 shape words + 2 origin + 2 spacing doubles
  const std::size_t header = 4 + 4 + 4 + 2 * 4 + 2 * 8 + 2 * 8;
  EXPECT_EQ(rfld_header_bytes(2), header);
  EXPECT_EQ(bytes.size(), header + 512u * 512u * 8u);
}

TEST(FieldIo, DistinctErrorCodes) {
  const ScalarField u(Grid::box(2, 3, 1.0), 2.5);
  auto bytes = encode_field(u);

  auto code_of = [](const std::vector<unsigned char>& b) {
    try {
      decode_field(b);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };

  auto bad_magic = bytes;
  std::fill_n(bad_magic.begin(), 4, 'X');
  EXPECT_EQ(code_of(bad_magic), ErrorCode::BadMagic);

  auto truncated = bytes;
  truncated.resize(truncated.size() - 5);
  EXPECT_EQ(code_of(truncated), ErrorCode::Truncated);

  auto header_only = bytes;
  header_only.resize(10);
  EXPECT_EQ(code_of(header_only), ErrorCode::Truncated);

  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_EQ(code_of(trailing), ErrorCode::SizeMismatch);

  auto version = bytes;
  version[4] = 9;
  EXPECT_EQ(code_of(version), ErrorCode::BadVersion);

  EXPECT_THROW(load_field(temp_path("does/not/exist.rfld")), Error);
}

TEST(Grid, RejectsAnisotropicSpacing) {
  EXPECT_THROW(Grid({4, 4}, Point{0.0, 0.0}, {0.1, 0.2}), Error);
  EXPECT_THROW(Grid({1u << 14, 1u << 14}, Point{0.0, 0.0}, {0.1, 0.1}, 1u << 20), Error);
}

TEST(Gradient, LinearFieldIsExact) {
  const Grid g = Grid::box(2, 32, 1.0);
  const auto u = ScalarField::sample(g, [](const Point& x) { return x[0]; });
  const auto grad = gradient(u);
  for (std::size_t l = 0; l < g.size(); ++l) {
    EXPECT_NEAR(grad(l, 0), 1.0, 1e-12);
    EXPECT_NEAR(grad(l, 1), 0.0, 1e-12);
  }
}

TEST(Gradient, ConstantFieldHasZeroGradient) {
  const ScalarField u(Grid::box(3, 8, 1.0), 3.0);
  const auto grad = gradient(u);
  for (std::size_t l = 0; l < u.grid().size(); ++l) EXPECT_EQ(grad.norm2(l), 0.0);
}

TEST(Gradient, SquareRootSolution) {
  // |∇u|^2 = 1/(2r) = 2 at r = 0.25
  const Grid g = Grid::symmetric(2, 256, 1.0 / 256.0);
  const auto u = ScalarField::sample(g, sqrt_solution);
  const auto grad = gradient(u);
  const std::size_t l = g.linear({256 + 64, 256});
  EXPECT_NEAR(g.center(l)[0], 0.25, 1e-14);
  EXPECT_NEAR(grad.norm2(l), 2.0, 0.02 * 2.0);
}

TEST(Gradient, GridTooSmall) {
  const ScalarField u(Grid::box(2, 2, 1.0), 1.0);
  try {
    gradient(u);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::GridTooSmall);
  }
}

TEST(Laplacian, QuadraticIsExactAndBoundaryIsFlagged) {
  const Grid g = Grid::box(2, 20, 1.0);
  const auto u = ScalarField::sample(g, [](const Point& x) { return x.norm2(); });
  const auto lap = laplacian(u);
  for (std::size_t l = 0; l < g.size(); ++l) {
    if (g.on_boundary(g.unravel(l)))
      EXPECT_TRUE(std::isnan(lap[l]));
    else
      EXPECT_NEAR(lap[l], 4.0, 1e-9);
  }
}

TEST(Laplacian, LinearIsZero) {
  const Grid g = Grid::box(3, 10, 1.0);
  const auto u = ScalarField::sample(g, [](const Point& x) { return 2 * x[0] - x[1] + 0.5 * x[2]; });
  const auto lap = laplacian(u);
  for (std::size_t l = 0; l < g.size(); ++l) {
    if (!g.on_boundary(g.unravel(l))) {
      EXPECT_NEAR(lap[l], 0.0, 1e-10);
    }
  }
}

TEST(Laplacian, SquareRootSolutionResidualIsSecondOrder) {
  // Δ(√2 r^{1/2}) = u^{-3} = 2√2 at r = 0.25
  const double target = 2.0 * std::sqrt(2.0);
  double previous = 0.0;
  for (int level = 0; level < 3; ++level) {
    const std::size_t half = 128u << level;
    const Grid g = Grid::symmetric(2, half, 1.0 / static_cast<double>(half));
    const auto lap = laplacian(ScalarField::sample(g, sqrt_solution));
    const double err = std::abs(lap[g.linear({static_cast<std::int64_t>(half + half / 4),
                                              static_cast<std::int64_t>(half)})] - target);
    EXPECT_LT(err, 0.01 * target);
    if (level > 0) {
      EXPECT_GT(previous / err, 3.0);
      EXPECT_LT(previous / err, 5.0);
    }
    previous = err;
  }
}

TEST(BallIntegral, UnitDiscArea) {
  const Grid g = Grid::box(2, 1200, 1.2);  // h ≈ 1/500
  const auto one = ScalarField(g, 1.0);
  const auto res = ball_integral(one, BallRegion(Point{0.0, 0.0}, 1.0));
  EXPECT_NEAR(res.value, std::numbers::pi, 0.01 * std::numbers::pi);
  EXPECT_EQ(res.clipped_fraction, 0.0);
}

TEST(BallIntegral, ZeroIntegrandAndClipping) {
  const Grid g = Grid::box(2, 64, 1.0);
  const ScalarField zero(g, 0.0);
  EXPECT_EQ(ball_integral(zero, BallRegion(Point{0.0, 0.0}, 0.5)).value, 0.0);
  const auto half = ball_integral(ScalarField(g, 1.0), BallRegion(Point{1.0, 0.0}, 0.5));
  EXPECT_NEAR(half.clipped_fraction, 0.5, 0.05);
  EXPECT_THROW(ball_integral(zero, BallRegion(Point{5.0, 5.0}, 0.5)), Error);
}

TEST(BallIntegral, ConvergesUnderRefinement) {
  // ∫_{B_0.7} (1 + x^2) = π r^2 + π r^4 / 4
  const double r = 0.7;
  const double exact = std::numbers::pi * r * r + std::numbers::pi * std::pow(r, 4) / 4.0;
  double previous = kInf;
  for (std::size_t cells : {100u, 200u, 400u, 800u}) {
    const Grid g = Grid::box(2, cells, 1.0);
    const auto f = ScalarField::sample(g, [](const Point& x) { return 1.0 + x[0] * x[0]; });
    const double err = std::abs(ball_integral(f, BallRegion(Point{0.0, 0.0}, r)).value - exact);
    EXPECT_LT(err, previous * 1.05);
    previous = err;
  }
  EXPECT_LT(previous, 2e-3);
}

TEST(DistanceTransform, SingleCellIsExactNorm) {
  const Grid g = Grid::symmetric(2, 20, 0.05);
  Mask m(g);
  m.set(g.linear({20, 20}), true);
  const auto d = distance_transform(m);
  for (std::size_t l = 0; l < g.size(); ++l) EXPECT_NEAR(d[l], g.center(l).norm(), 1e-12);
}

TEST(DistanceTransform, TwoCells) {
  const Grid g = Grid::symmetric(2, 4, 0.5);
  Mask m(g);
  m.set(g.linear({2, 4}), true);  // (-1, 0)
  m.set(g.linear({6, 4}), true);  // (1, 0)
  EXPECT_NEAR(distance_transform(m)[g.linear({4, 4})], 1.0, 1e-15);
}

TEST(DistanceTransform, EmptyMaskIsAnError) {
  const Mask m(Grid::box(2, 8, 1.0));
  EXPECT_THROW(distance_transform(m), Error);
}

namespace {

double brute_force_distance(const Mask& m, std::size_t l) {
  const Grid& g = m.grid();
  double best = kInf;
  const Point x = g.center(l);
  for (std::size_t j = 0; j < g.size(); ++j)
    if (m[j]) best = std::min(best, dist(x, g.center(j)));
  return best;
}

}  // namespace

TEST(DistanceTransform, MatchesBruteForceOnRandomMasks) {
  std::mt19937_64 rng(1234);
  const Grid g = Grid::box(2, 64, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Mask m(g);
    const double density = std::ldexp(1.0, -(1 + trial % 8));
    std::bernoulli_distribution pick(density);
    for (std::size_t l = 0; l < g.size(); ++l) m.set(l, pick(rng));
    if (!m.any()) m.set(rng() % g.size(), true);
    const auto d = distance_transform(m);
    for (std::size_t l = 0; l < g.size(); ++l) ASSERT_NEAR(d[l], brute_force_distance(m, l), 1e-12);
  }
}

TEST(DistanceTransform, MatchesBruteForceIn3D) {
  std::mt19937_64 rng(99);
  const Grid g({9, 7, 11}, Point{0.0, 0.0, 0.0}, {0.3, 0.3, 0.3});
  Mask m(g);
  for (int i = 0; i < 4; ++i) m.set(rng() % g.size(), true);
  const auto d = distance_transform(m);
  for (std::size_t l = 0; l < g.size(); ++l) ASSERT_NEAR(d[l], brute_force_distance(m, l), 1e-12);
}

TEST(SublevelMeasure, Examples) {
  const Grid g = Grid::box(2, 1024, 1.0);  // h = 1/512
  const BallRegion unit(Point{0.0, 0.0}, 1.0);
  EXPECT_EQ(sublevel_measure(ScalarField(g, 1.0), 0.5, unit), 0.0);

  // {√2 r^{1/2} < 1/2} is the disc r < 1/8 with area π/64
  const auto u = ScalarField::sample(g, sqrt_solution);
  EXPECT_NEAR(sublevel_measure(u, 0.5, unit), std::numbers::pi / 64.0, 0.02 * std::numbers::pi / 64.0);

  const double all = sublevel_measure(u, kInf, BallRegion(Point{0.0, 0.0}, 0.5));
  std::size_t cells = 0;
  visit_ball(g, Point{0.0, 0.0}, 0.5, [&](std::size_t, double) { ++cells; });
  EXPECT_DOUBLE_EQ(all, static_cast<double>(cells) * g.cell_volume());
}

TEST(Interpolation, ExactOnMultilinearAndNaNOutside) {
  const Grid g = Grid::box(2, 10, 1.0);
  const auto u = ScalarField::sample(g, [](const Point& x) { return 1 + 2 * x[0] - x[1] + 3 * x[0] * x[1]; });
  const Point x{0.123, -0.321};
  EXPECT_NEAR(u.interpolate(x), 1 + 2 * x[0] - x[1] + 3 * x[0] * x[1], 1e-12);
  EXPECT_TRUE(std::isnan(u.interpolate(Point{0.99, 0.0})));
}
