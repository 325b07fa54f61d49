#include "mmfg/monotone.hpp"
#include "mmfg/solvers/stationary.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace mmfg;

namespace {

constexpr double kPi = 3.14159265358979323846;

template <class Real>
MFGProblem<Real> flat_problem(const TorusGrid& g, HamiltonianSpec h = {}, CouplingSpec c = {}, double nu = 0.0) {
  return MFGProblem<Real>(g, h, c, GridField<Real>(g), GridField<Real>(g, Real(1)), nu);
}

template <class Real>
StatePair<Real> random_pair(const TorusGrid& g, std::mt19937_64& rng, double floor) {
  auto f = detail::random_trig_field<Real>(g, g.n() / 8, rng, true);
  auto m = hadamard(f, f);
  m += Real(floor);
  return StatePair<Real>(std::move(m), detail::random_trig_field<Real>(g, g.n() / 8, rng, true));
}

}  // namespace

TEST(Gap, IdenticalArgumentsGiveZero) {
  TorusGrid g(1, 32);
  auto pb = flat_problem<double>(g);
  std::mt19937_64 rng(3);
  auto s = random_pair<double>(g, rng, 0.1);
  RegParams reg{0.1, 2, RegVariant::penalized};
  auto gap = monotonicity_gap(pb, OperatorChoice::regularized(reg), s, s);
  EXPECT_EQ(gap.total, 0);
  EXPECT_EQ(gap.sum_of_parts(), 0);
}

TEST(Gap, ConstantDensitiesHandValue) {
  TorusGrid g(1, 32);
  auto pb = flat_problem<double>(g);
  StatePair<double> s1(GridField<double>(g, 1.0), GridField<double>(g));
  StatePair<double> s2(GridField<double>(g, 2.0), GridField<double>(g));
  auto gap = monotonicity_gap(pb, OperatorChoice::plain(), s1, s2);
  EXPECT_NEAR(gap.coupling, 1.0, 1e-14);
  EXPECT_NEAR(gap.total, 1.0, 1e-14);
  EXPECT_EQ(gap.bregman1, 0);
  EXPECT_EQ(gap.bregman2, 0);
  EXPECT_EQ(gap.penalty, 0);
  EXPECT_EQ(gap.reg, 0);
}

TEST(Gap, RandomPairsNonnegativeAndDecomposed) {
  TorusGrid g(1, 64);
  for (double alpha : {1.5, 2.0, 3.0}) {
    for (auto c : {CouplingSpec{}, CouplingSpec{CouplingKind::power, 2.0}}) {
      for (double nu : {0.0, 1.0}) {
        auto pb = flat_problem<quad>(g, HamiltonianSpec{alpha}, c, nu);
        for (auto op : {OperatorChoice::plain(), OperatorChoice::regularized({0.05, 2, RegVariant::penalized})}) {
          std::mt19937_64 rng(17);
          for (int i = 0; i < 40; ++i) {
            auto s1 = random_pair<quad>(g, rng, 0.02);
            auto s2 = random_pair<quad>(g, rng, 0.02);
            auto gap = monotonicity_gap(pb, op, s1, s2);
            EXPECT_GE(to_double(gap.total), -1e-10);
            EXPECT_LE(to_double(gap.mismatch()), 1e-10);
            EXPECT_GE(to_double(gap.bregman1), -1e-12);
            EXPECT_GE(to_double(gap.bregman2), -1e-12);
            EXPECT_GE(to_double(gap.coupling), -1e-12);
            EXPECT_GE(to_double(gap.penalty), -1e-12);
          }
        }
      }
    }
  }
}

TEST(Gap, TwoDimensionalDecomposition) {
  TorusGrid g(2, 16);
  auto pb = flat_problem<quad>(g, HamiltonianSpec{3.0, {1.0, 2.0}}, {}, 1.0);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10; ++i) {
    auto s1 = random_pair<quad>(g, rng, 0.05);
    auto s2 = random_pair<quad>(g, rng, 0.05);
    auto gap = monotonicity_gap(pb, OperatorChoice::regularized({0.1, 3, RegVariant::plain}), s1, s2);
    EXPECT_GE(to_double(gap.total), -1e-10);
    EXPECT_LE(to_double(gap.mismatch()), 1e-10);
  }
}

TEST(Gap, StrictlyPositiveForDistinctDensities) {
  TorusGrid g(1, 64);
  auto pb = flat_problem<quad>(g);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 20; ++i) {
    auto s1 = random_pair<quad>(g, rng, 0.2);
    auto s2 = random_pair<quad>(g, rng, 0.2);
    EXPECT_GT(to_double(monotonicity_gap(pb, OperatorChoice::plain(), s1, s2).total), 0);
  }
}

TEST(Gap, RegularizationAddsItsQuadraticDifference) {
  TorusGrid g(1, 64);
  auto pb = flat_problem<quad>(g);
  std::mt19937_64 rng(9);
  RegParams reg{0.1, 2, RegVariant::plain};
  for (int i = 0; i < 10; ++i) {
    auto s1 = random_pair<quad>(g, rng, 0.1);
    auto s2 = random_pair<quad>(g, rng, 0.1);
    auto plain = monotonicity_gap(pb, OperatorChoice::plain(), s1, s2);
    auto regd = monotonicity_gap(pb, OperatorChoice::regularized(reg), s1, s2);
    EXPECT_GE(to_double(regd.reg), 0);
    EXPECT_NEAR(to_double(regd.total - plain.total), to_double(regd.reg), 1e-10 * to_double(regd.reg));
  }
}

TEST(Gap, RejectsNegativeDensity) {
  TorusGrid g(1, 16);
  auto pb = flat_problem<double>(g);
  StatePair<double> s1(g), s2(g);
  s1.m[3] = -1;
  try {
    monotonicity_gap(pb, OperatorChoice::plain(), s1, s2);
    FAIL() << "negative density accepted";
  } catch (const DomainError& e) {
    EXPECT_EQ(e.node(), 3);
  }
}

TEST(Bank, UnitMassFloorAndDeterminism) {
  TorusGrid g(1, 64);
  auto a = make_test_bank<double>(g, 32, 11, BankConstraint::unit_mass_nonneg);
  auto b = make_test_bank<double>(g, 32, 11, BankConstraint::unit_mass_nonneg);
  ASSERT_EQ(a.size(), 32u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(integrate(a[i].m), 1.0, 1e-12);
    EXPECT_GE(min_value(a[i].m), 0.05 - 1e-15);
    EXPECT_EQ(a[i].m.values(), b[i].m.values());
    EXPECT_EQ(a[i].u.values(), b[i].u.values());
    EXPECT_LE(spectral::support_radius(a[i].m, 1e-13), 16);
    EXPECT_LE(spectral::support_radius(a[i].u, 1e-13), 16);
  }
  auto c = make_test_bank<double>(g, 32, 12, BankConstraint::unit_mass_nonneg);
  EXPECT_NE(a[5].u.values(), c[5].u.values());
}

TEST(Bank, CanonicalElements) {
  TorusGrid g(1, 16);
  GridField<double> phi(g, 1.0);
  phi[0] = 3;
  auto bank = make_test_bank<double>(g, 4, 1, BankConstraint::nonneg, &phi);
  EXPECT_EQ(bank[0].m.values(), phi.values());
  EXPECT_EQ(norm_inf(bank[0].u), 0);
  EXPECT_EQ(min_value(bank[1].m), 1);
  EXPECT_EQ(max_value(bank[1].m), 1);
  EXPECT_THROW(make_test_bank<double>(g, 0, 1, BankConstraint::nonneg), ValidationError);
}

TEST(WeakVI, SelfPairingIsZero) {
  TorusGrid g(1, 32);
  auto pb = flat_problem<double>(g);
  auto bank = make_test_bank<double>(g, 5, 2, BankConstraint::unit_mass_nonneg);
  for (const auto& t : bank) EXPECT_EQ(weak_vi_residual(pb, t, t), 0);
}

TEST(WeakVI, StrongSolutionAndPerturbation) {
  // Manufactured root of F: choose V and phi so that (m*, u*) solves F = 0.
  TorusGrid g(1, 64);
  using Q = quad;
  auto m = GridField<Q>::from_function(g, [](auto x) { return 1 + Q(0.2) * cos(two_pi<Q>() * x[0]); });
  auto u = GridField<Q>::from_function(g, [](auto x) { return Q(0.01) * sin(two_pi<Q>() * x[0]); });
  StatePair<Q> star(m, u);
  auto zero = flat_problem<Q>(g);
  auto parts = operator_parts(zero, star);
  GridField<Q> V = parts.g - parts.H - u;
  GridField<Q> phi = m - parts.transport;
  MFGProblem<Q> pb(g, {}, {}, V, phi);
  ASSERT_LE(to_double(norm_inf(apply_F(pb, star))), 1e-12);
  auto bank = make_test_bank<Q>(g, 32, 4, BankConstraint::unit_mass_nonneg, &pb.phi());
  for (const auto& t : bank) {
    double bound = 1e-9 * to_double(norm_l2(star - t)) + 1e-12;
    EXPECT_LE(to_double(weak_vi_residual(pb, star, t)), bound);
  }
  StatePair<Q> bad = star;
  bad.u += GridField<Q>::from_function(g, [](auto x) { return Q(2) * cos(two_pi<Q>() * x[0]) + Q(1); });
  Q worst = -1;
  for (const auto& t : bank) worst = std::max(worst, weak_vi_residual(pb, bad, t));
  EXPECT_GT(to_double(worst), 1e-3);
}

TEST(Apriori, ZeroGradientState) {
  TorusGrid g(1, 32);
  auto phi = GridField<double>::from_function(g, [](auto x) { return 1 + 0.5 * std::cos(2 * kPi * x[0]); });
  MFGProblem<double> pb(g, {}, {}, GridField<double>(g), phi);
  StatePair<double> s(pb.phi(), GridField<double>(g));
  auto r = apriori_quantities(pb, RegParams{}, 1.0, s);
  EXPECT_EQ(r.mDu, 0);
  EXPECT_EQ(r.phiDu, 0);
  EXPECT_NEAR(r.mgm, inner(pb.phi(), pb.phi()), 1e-15);
  EXPECT_TRUE(r.nonneg_ok);
}

TEST(Apriori, ClosedFormIntegrals) {
  TorusGrid g(1, 64);
  auto pb = flat_problem<quad>(g);
  auto u = GridField<quad>::from_function(g, [](auto x) { return quad(0.1) * sin(two_pi<quad>() * x[0]); });
  StatePair<quad> s(GridField<quad>(g, quad(1)), u);
  auto r = apriori_quantities(pb, RegParams{}, 1.0, s);
  EXPECT_NEAR(to_double(r.mgm), 1.0, 1e-15);
  EXPECT_NEAR(to_double(r.mDu), 0.02 * kPi * kPi, 1e-14);
  EXPECT_NEAR(to_double(r.phiDu), 0.02 * kPi * kPi, 1e-14);
  EXPECT_NEAR(to_double(r.intH), 0.01 * kPi * kPi, 1e-14);
  EXPECT_NEAR(to_double(r.intU), 0.0, 1e-15);
}

TEST(Apriori, PenaltyInactiveAboveEpsilon) {
  TorusGrid g(1, 32);
  auto pb = flat_problem<double>(g);
  std::mt19937_64 rng(2);
  auto s = random_pair<double>(g, rng, 0.1);
  auto r = apriori_quantities(pb, RegParams{0.05, 2, RegVariant::penalized}, 0.5, s);
  EXPECT_EQ(r.penMass, 0);
  EXPECT_EQ(r.penGap, 0);
}
