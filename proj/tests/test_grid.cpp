#include "mmfg/grid.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace mmfg;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

template <class Real>
GridField<Real> random_band_limited(const TorusGrid& g, int cutoff, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> nd;
  GridField<Real> f(g);
  for (std::size_t j = 0; j < g.size(); ++j) f[j] = Real(nd(rng));
  return spectral::truncate(f, cutoff);
}

}  // namespace

TEST(Grid, RejectsBadSizes) {
  EXPECT_THROW(TorusGrid(1, 4), ValidationError);
  EXPECT_THROW(TorusGrid(1, 12), ValidationError);
  EXPECT_THROW(TorusGrid(3, 16), ValidationError);
  TorusGrid g(2, 16);
  EXPECT_EQ(g.size(), 256u);
  EXPECT_EQ(g.spacing() * g.n(), 1.0);
  EXPECT_EQ(g.wavenumber(8), -8);
  EXPECT_EQ(g.wavenumber(7), 7);
}

TEST(Grid, GradientOfConstantIsZero) {
  TorusGrid g(2, 16);
  auto D = gradient(GridField<double>(g, 3.0));
  EXPECT_LE(norm_inf(D[0]), 1e-14);
  EXPECT_LE(norm_inf(D[1]), 1e-14);
}

TEST(Grid, GradientOfSine) {
  TorusGrid g(1, 64);
  auto f = GridField<double>::from_function(g, [](auto x) { return std::sin(kTwoPi * x[0]); });
  auto D = gradient(f);
  for (std::size_t j = 0; j < g.size(); ++j)
    EXPECT_NEAR(D[0][j], kTwoPi * std::cos(kTwoPi * j / 64.0), 1e-12);
}

TEST(Grid, GradientTwoDimensional) {
  TorusGrid g(2, 16);
  auto f = GridField<double>::from_function(g, [](auto x) { return std::cos(kTwoPi * x[1]); });
  auto D = gradient(f);
  EXPECT_LE(norm_inf(D[0]), 1e-12);
  for (std::size_t j = 0; j < g.size(); ++j) {
    auto x = g.coordinate<double>(j);
    EXPECT_NEAR(D[1][j], -kTwoPi * std::sin(kTwoPi * x[1]), 1e-12);
  }
}

TEST(Grid, GradientMatchesNaiveTransformIncludingNyquist) {
  TorusGrid g(1, 32);
  std::mt19937 rng(7);
  std::normal_distribution<double> nd;
  GridField<double> f(g);
  std::vector<long double> ref(32);
  for (int j = 0; j < 32; ++j) ref[j] = f[j] = nd(rng);
  auto want = oracle::derivative1(ref);
  auto got = gradient(f);
  for (int j = 0; j < 32; ++j) EXPECT_NEAR(got[0][j], double(want[j]), 1e-11);
}

TEST(Grid, GradientRejectsNonFinite) {
  TorusGrid g(1, 8);
  GridField<double> f(g);
  f[5] = std::nan("");
  try {
    gradient(f);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("node 5"), std::string::npos);
  }
}

TEST(Grid, DivergenceExamples) {
  TorusGrid g2(2, 16);
  GridVectorField<double> V(g2);
  V[0] += 1.0;
  V[1] += 1.0;
  EXPECT_LE(norm_inf(divergence(V)), 1e-14);

  TorusGrid g(1, 64);
  GridVectorField<double> W({GridField<double>::from_function(g, [](auto x) { return std::sin(kTwoPi * x[0]); })});
  auto dv = divergence(W);
  for (std::size_t j = 0; j < g.size(); ++j) EXPECT_NEAR(dv[j], kTwoPi * std::cos(kTwoPi * j / 64.0), 1e-12);
}

TEST(Grid, DivergenceRejectsMixedGrids) {
  TorusGrid a(2, 16), b(2, 32);
  EXPECT_THROW(GridVectorField<double>({GridField<double>(a), GridField<double>(b)}), ValidationError);
}

TEST(Grid, AdjointnessOnRandomFields) {
  for (int d : {1, 2}) {
    TorusGrid g(d, 32);
    std::mt19937 rng(11 + d);
    std::normal_distribution<double> nd;
    GridField<double> f(g);
    std::vector<GridField<double>> comps(d, GridField<double>(g));
    for (std::size_t j = 0; j < g.size(); ++j) {
      f[j] = nd(rng);
      for (auto& c : comps) c[j] = nd(rng);
    }
    GridVectorField<double> V(comps);
    double lhs = inner(divergence(V), f);
    double rhs = -inner(V, gradient(f));
    double scale = std::sqrt(inner(V, V)) * norm_l2(f);
    EXPECT_LE(std::abs(lhs - rhs), 1e-12 * scale) << "d=" << d;
  }
}

TEST(Grid, CompositionOnNyquistFreeFields) {
  TorusGrid g(1, 64);
  auto f = random_band_limited<double>(g, 31, 3);
  auto lhs = divergence(gradient(f));
  auto rhs = laplacian(f);
  EXPECT_LE(norm_inf(lhs - rhs), 1e-12 * norm_inf(rhs));
}

TEST(Grid, LaplacianPowerExamples) {
  TorusGrid g(1, 64);
  EXPECT_LE(norm_inf(laplacian_power(GridField<double>(g, 2.5), 1)), 1e-13);
  auto f = GridField<double>::from_function(g, [](auto x) { return std::cos(kTwoPi * x[0]); });
  double fourpi2 = kTwoPi * kTwoPi;
  auto l1 = laplacian_power(f, 1);
  for (std::size_t j = 0; j < g.size(); ++j) EXPECT_NEAR(l1[j], -fourpi2 * f[j], 1e-10);
  // Roundoff in the high modes is amplified by |xi|^4, so the squared operator is checked in quad.
  auto fq = GridField<quad>::from_function(g, [](auto x) { return cos(two_pi<quad>() * x[0]); });
  auto l2 = laplacian_power(fq, 2);
  quad sym = 16 * ipow(pi<quad>(), 4);
  for (std::size_t j = 0; j < g.size(); ++j) EXPECT_LE(to_double(abs(l2[j] - sym * fq[j])), 1e-24);
  EXPECT_THROW(laplacian_power(f, 0), ValidationError);
}

TEST(Grid, LaplacianPowerSelfAdjointAndNonnegative) {
  TorusGrid g(2, 16);
  auto f = random_band_limited<quad>(g, 8, 1);
  auto h = random_band_limited<quad>(g, 8, 2);
  int k = 3;
  quad a = inner(laplacian_power(f, 2 * k), h);
  quad b = inner(f, laplacian_power(h, 2 * k));
  EXPECT_LE(to_double(abs(a - b) / abs(a)), 1e-20);
  auto lk = laplacian_power(f, k);
  quad c = inner(laplacian_power(f, 2 * k), f);
  EXPECT_GE(to_double(c), 0.0);
  EXPECT_LE(to_double(abs(c - inner(lk, lk)) / c), 1e-20);
}

TEST(Grid, Quadrature) {
  TorusGrid g(1, 64);
  EXPECT_DOUBLE_EQ(integrate(GridField<double>(g, 1.0)), 1.0);
  auto s = GridField<double>::from_function(g, [](auto x) { return std::sin(kTwoPi * x[0]); });
  EXPECT_LE(std::abs(integrate(s)), 1e-14);
  auto c = GridField<double>::from_function(g, [](auto x) { return std::cos(kTwoPi * x[0]); });
  EXPECT_NEAR(inner(c, c), 0.5, 1e-14);
  TorusGrid other(1, 32);
  EXPECT_THROW(inner(c, GridField<double>(other)), ValidationError);
}

TEST(Grid, ApplyRegExamples) {
  TorusGrid g(1, 64);
  auto one = apply_reg(GridField<double>(g, 1.0), 0.3, 2);
  for (std::size_t j = 0; j < g.size(); ++j) EXPECT_NEAR(one[j], 0.3, 1e-15);
  auto c = GridField<quad>::from_function(g, [](auto x) { return cos(two_pi<quad>() * x[0]); });
  auto r = apply_reg(c, quad(1), 1);
  quad pi4 = ipow(pi<quad>(), 4);
  for (std::size_t j = 0; j < g.size(); ++j) EXPECT_LE(to_double(abs(r[j] - (1 + 16 * pi4) * c[j])), 1e-24);
  EXPECT_THROW(apply_reg(c, quad(0), 1), ValidationError);
  auto f = random_band_limited<double>(g, 20, 5);
  EXPECT_GE(inner(apply_reg(f, 0.01, 2), f), 0.01 * inner(f, f));
}

TEST(Grid, OutputsAreReal) {
  TorusGrid g(2, 16);
  auto f = random_band_limited<double>(g, 7, 9);
  double imag = 0;
  spectral::apply(f, [&](const std::array<int, 2>& xi) { return spectral::derivative_symbol<double>(g, xi, 1); }, &imag);
  EXPECT_LE(imag, 1e-13);
}
