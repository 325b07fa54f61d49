#include "mmfg/monotone.hpp"
#include "mmfg/solvers/stationary.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace mmfg;

namespace {

using Q = quad;

MFGProblem<Q> baseline_problem() {
  TorusGrid g(1, 64);
  auto V = GridField<Q>::from_function(g, [](auto x) { return Q(0.5) * cos(two_pi<Q>() * x[0]); });
  return MFGProblem<Q>(g, {}, {}, V, GridField<Q>(g, Q(1)));
}

RegParams baseline_reg(RegVariant v = RegVariant::penalized) { return {1e-2, 2, v}; }

GridField<Q> smooth_field(const TorusGrid& g, std::mt19937_64& rng) {
  return detail::random_trig_field<Q>(g, g.n() / 8, rng, true);
}

}  // namespace

TEST(RegLinear, ConstantsAndSingleMode) {
  TorusGrid g(1, 32);
  auto u = solve_reg_linear(GridField<Q>(g, Q(0.25)), Q(0.25), 2);
  for (std::size_t j = 0; j < g.size(); ++j) EXPECT_NEAR(to_double(u[j]), 1.0, 1e-30);
  auto c = GridField<Q>::from_function(g, [](auto x) { return cos(two_pi<Q>() * x[0]); });
  auto v = solve_reg_linear(c, Q(1), 1);
  Q den = 1 + 16 * ipow(pi<Q>(), 4);
  for (std::size_t j = 0; j < g.size(); ++j) EXPECT_NEAR(to_double(v[j] - c[j] / den), 0.0, 1e-30);
}

TEST(RegLinear, InverseOfApplyReg) {
  TorusGrid g(2, 16);
  std::mt19937_64 rng(1);
  GridField<Q> rhs(g);
  std::normal_distribution<double> nd;
  for (auto& v : rhs.values()) v = nd(rng);
  auto u = solve_reg_linear(rhs, Q(0.03), 3);
  auto back = apply_reg(u, Q(0.03), 3);
  EXPECT_LE(to_double(norm_inf(back - rhs) / norm_inf(rhs)), 1e-12);
  // Bilinear identity B[u, v] = <rhs, v>.
  GridField<Q> v(g);
  for (auto& x : v.values()) x = nd(rng);
  EXPECT_LE(to_double(abs(inner(back, v) - inner(rhs, v)) / norm_l2(rhs) / norm_l2(v)), 1e-12);
}

TEST(Obstacle, NonnegativeDataGivesZero) {
  TorusGrid g(1, 64);
  auto f = GridField<Q>::from_function(g, [](auto x) { return 1 + sin(two_pi<Q>() * x[0]); });
  auto r = solve_obstacle(f, Q(1e-2), 2);
  EXPECT_EQ(r.status, SolveStatus::converged);
  EXPECT_EQ(to_double(norm_inf(r.w)), 0.0);
}

TEST(Obstacle, NegativeConstant) {
  TorusGrid g(1, 32);
  auto r = solve_obstacle(GridField<Q>(g, Q(-3) / 10), Q(1) / 10, 2);
  EXPECT_EQ(r.status, SolveStatus::converged);
  for (std::size_t j = 0; j < g.size(); ++j) EXPECT_NEAR(to_double(r.w[j] - 3), 0.0, 1e-25);
}

TEST(Obstacle, KKTForOscillatingData) {
  // The regularizer damps sin(2 pi x) by 1 + (4 pi^2)^{2k}, so the mean dominates
  // and the constraint is inactive: w equals the unconstrained minimizer.
  TorusGrid g(1, 64);
  auto f = GridField<Q>::from_function(g, [](auto x) { return sin(two_pi<Q>() * x[0]) - Q(0.1); });
  for (double eps : {1e-1, 1e-2, 1e-3}) {
    auto r = solve_obstacle(f, Q(eps), 2, 1e-9);
    ASSERT_EQ(r.status, SolveStatus::converged) << eps;
    EXPECT_GT(to_double(min_value(r.w)), 0.0);
    EXPECT_GE(to_double(r.minR), -1e-9);
    EXPECT_LE(to_double(abs(r.complementarity)), 1e-9);
    auto unc = solve_reg_linear(f, Q(eps), 2) * Q(-1);
    EXPECT_LE(to_double(norm_inf(r.w - unc)), 1e-20);
  }
}

namespace {

/// sin(2 pi x) minus half of its damped amplitude: the unconstrained minimizer changes sign.
GridField<Q> mixed_sign_data(const TorusGrid& g, int k) {
  Q shift = Q(0.5) / (1 + ipow(4 * pi<Q>() * pi<Q>(), unsigned(2 * k)));
  return GridField<Q>::from_function(g, [&](auto x) { return sin(two_pi<Q>() * x[0]) - shift; });
}

}  // namespace

TEST(Obstacle, KKTWithFreeBoundary) {
  TorusGrid g(1, 64);
  for (double eps : {1e-1, 1e-2, 1e-3}) {
    auto r = solve_obstacle(mixed_sign_data(g, 2), Q(eps), 2, 1e-9);
    ASSERT_EQ(r.status, SolveStatus::converged) << eps;
    EXPECT_GE(to_double(min_value(r.w)), 0.0);
    EXPECT_GE(to_double(r.minR), -1e-9);
    EXPECT_LE(to_double(abs(r.complementarity)), 1e-9);
    int active = 0;
    for (std::size_t j = 0; j < g.size(); ++j) active += r.w[j] == 0;
    EXPECT_GT(active, 0);
    EXPECT_LT(active, int(g.size()));
  }
}

TEST(Obstacle, MatchesExhaustiveActiveSetOracle) {
  const int n = 16;
  TorusGrid g(1, n);
  auto f = mixed_sign_data(g, 1);
  auto r = solve_obstacle(f, Q(0.1), 1, 1e-12);
  ASSERT_EQ(r.status, SolveStatus::converged);
  auto K = oracle::reg_matrix1(n, 0.1L, 1);
  std::vector<long double> fl(n);
  for (int j = 0; j < n; ++j) fl[j] = static_cast<long double>(f[j]);
  auto w = oracle::obstacle_by_enumeration(K, fl);
  ASSERT_EQ(int(w.size()), n);
  int active = 0;
  for (int j = 0; j < n; ++j) {
    EXPECT_NEAR(to_double(r.w[j]), double(w[j]), 1e-12) << j;
    active += w[j] == 0;
  }
  EXPECT_GT(active, 0);
}

TEST(Obstacle, PrimalFallbackAgreesWithActiveSet) {
  TorusGrid g(1, 32);
  RegObstacleOperator<Q> op(g, Q(1e-2), 2);
  auto f = mixed_sign_data(g, 2);
  auto pd = solve_obstacle_qp(op, f.values());
  ObstacleOptions forced;
  forced.max_dual = 0;
  auto pr = solve_obstacle_qp(op, f.values(), forced);
  ASSERT_EQ(pd.status, SolveStatus::converged);
  ASSERT_EQ(pr.status, SolveStatus::converged);
  EXPECT_FALSE(pd.used_fallback);
  EXPECT_TRUE(pr.used_fallback);
  for (std::size_t j = 0; j < g.size(); ++j) EXPECT_NEAR(to_double(pd.w[j] - pr.w[j]), 0.0, 1e-12);
}

TEST(Obstacle, WarmStartHintDoesNotChangeTheMinimizer) {
  TorusGrid g(1, 32);
  RegObstacleOperator<Q> op(g, Q(1e-2), 2);
  auto f = mixed_sign_data(g, 2);
  auto cold = solve_obstacle_qp(op, f.values());
  ASSERT_EQ(cold.status, SolveStatus::converged);
  // Exact hint, every node, and an arbitrary wrong set.
  std::vector<std::size_t> all(g.size()), odd;
  for (std::size_t j = 0; j < g.size(); ++j) {
    all[j] = j;
    if (j % 2) odd.push_back(j);
  }
  for (const auto* hint : {&cold.activeSet, &all, &odd}) {
    auto warm = solve_obstacle_qp(op, f.values(), ObstacleOptions{}, hint);
    ASSERT_EQ(warm.status, SolveStatus::converged);
    for (std::size_t j = 0; j < g.size(); ++j) EXPECT_NEAR(to_double(warm.w[j] - cold.w[j]), 0.0, 1e-12);
  }
  auto exact = solve_obstacle_qp(op, f.values(), ObstacleOptions{}, &cold.activeSet);
  EXPECT_EQ(exact.iterations, 0);
}

TEST(Obstacle, RejectsBadInput) {
  TorusGrid g(1, 16);
  GridField<Q> f(g);
  EXPECT_THROW(solve_obstacle(f, Q(0), 2), ValidationError);
  f[2] = std::numeric_limits<Q>::quiet_NaN();
  EXPECT_THROW(solve_obstacle(f, Q(0.1), 2), ValidationError);
}

TEST(Picard, MapOnZeroState) {
  TorusGrid g(1, 32);
  MFGProblem<Q> pb(g, {}, {}, GridField<Q>(g), GridField<Q>(g, Q(1)));
  RegParams reg{0.1, 2, RegVariant::plain};
  auto out = picard_map(pb, reg, StatePair<Q>(g));
  EXPECT_EQ(to_double(norm_inf(out.m)), 0.0);
  auto expect = solve_reg_linear(pb.phi(), Q(0.1), 2);
  EXPECT_LE(to_double(norm_inf(out.u - expect)), 1e-30);
}

TEST(Picard, ConsistentDataConvergesAtOnce) {
  // (1, 0) solves the regularized system when V = 1 + eps, phi = 1, g linear.
  TorusGrid g(1, 32);
  RegParams reg{0.1, 2, RegVariant::plain};
  MFGProblem<Q> pb(g, {}, {}, GridField<Q>(g, 1 + Q(reg.eps)), GridField<Q>(g, Q(1)));
  StatePair<Q> s0(GridField<Q>(g, Q(1)), GridField<Q>(g));
  PicardOptions opt;
  opt.theta = 1.0;
  auto [s, rep] = picard_solve(pb, reg, s0, opt);
  EXPECT_EQ(rep.status, SolveStatus::converged);
  EXPECT_LE(rep.iterations, 2);
  EXPECT_LE(to_double(norm_inf(s - s0)), 1e-25);
}

TEST(Picard, BaselineConvergesAndMatchesContinuation) {
  auto pb = baseline_problem();
  const auto& g = pb.grid();
  auto [sp, rp] = picard_solve(pb, baseline_reg(RegVariant::plain), StatePair<Q>(GridField<Q>(g, Q(1)), GridField<Q>(g)));
  ASSERT_EQ(rp.status, SolveStatus::converged) << rp.message;
  EXPECT_LE(rp.finalResidual, 1e-7);
  EXPECT_GE(rp.minM, 0.0);
  EXPECT_FALSE(rp.dampingChanges.empty());
  // Tail of the step history decreases.
  const auto& h = rp.residualHistory;
  ASSERT_GT(h.size(), 20u);
  EXPECT_LT(h.back(), h[h.size() - 20]);

  auto [sc, rc] = continuation_solve(pb, baseline_reg());
  ASSERT_EQ(rc.status, SolveStatus::converged) << rc.message;
  EXPECT_LE(rc.finalResidual, 1e-9);
  EXPECT_GT(rc.minM, 0.0);
  ASSERT_GE(rc.minM, 1e-2);  // penalty inactive, so both solve the same system
  EXPECT_LE(to_double(norm_l2(sc - sp)), 1e-4);
}

TEST(Picard, AndersonVariantAgrees) {
  auto pb = baseline_problem();
  const auto& g = pb.grid();
  PicardOptions opt;
  opt.anderson_depth = 5;
  auto [sa, ra] = picard_solve(pb, baseline_reg(RegVariant::plain), StatePair<Q>(GridField<Q>(g, Q(1)), GridField<Q>(g)), opt);
  ASSERT_EQ(ra.status, SolveStatus::converged);
  auto [sc, rc] = continuation_solve(pb, baseline_reg());
  EXPECT_LE(to_double(norm_l2(sc - sa)), 1e-6);
}

TEST(Picard, RejectsBadDamping) {
  auto pb = baseline_problem();
  PicardOptions opt;
  opt.theta = 0;
  EXPECT_THROW(picard_solve(pb, baseline_reg(), StatePair<Q>(pb.grid()), opt), ValidationError);
}

TEST(Jacobian, LinearAndFiniteDifference) {
  TorusGrid g(1, 64);
  std::mt19937_64 rng(21);
  for (double alpha : {1.5, 2.0, 3.0}) {
    auto V = smooth_field(g, rng);
    MFGProblem<Q> pb(g, HamiltonianSpec{alpha}, CouplingSpec{CouplingKind::power, 2.0}, V, GridField<Q>(g, Q(1)), 0.5);
    RegParams reg{0.05, 2, RegVariant::penalized};
    for (int trial = 0; trial < 5; ++trial) {
      auto f = smooth_field(g, rng);
      GridField<Q> m = hadamard(f, f) * Q(0.1);
      m += Q(0.03);  // straddles the penalty zone
      StatePair<Q> s(m, smooth_field(g, rng) * Q(0.3));
      StatePair<Q> dir(smooth_field(g, rng), smooth_field(g, rng));
      Q lambda(0.7);
      EXPECT_EQ(to_double(norm_inf(jacobian_apply(pb, reg, lambda, s, StatePair<Q>(g)))), 0.0);
      Q h(1e-5);
      auto fd = (apply_F_eps_lambda(pb, reg, lambda, s + h * dir) - apply_F_eps_lambda(pb, reg, lambda, s - h * dir));
      fd *= 1 / (2 * h);
      auto J = jacobian_apply(pb, reg, lambda, s, dir);
      EXPECT_LE(to_double(norm_inf(fd - J) / norm_inf(J)), 1e-6) << alpha;
    }
  }
}

TEST(Jacobian, CoerciveQuadraticForm) {
  auto pb = baseline_problem();
  const auto& g = pb.grid();
  RegParams reg = baseline_reg();
  std::mt19937_64 rng(5);
  auto s = lambda_zero_state<Q>(g, reg);
  s.u += smooth_field(g, rng) * Q(0.2);
  for (int i = 0; i < 20; ++i) {
    StatePair<Q> dir(smooth_field(g, rng), smooth_field(g, rng));
    auto J = jacobian_apply(pb, reg, Q(1), s, dir);
    auto lw = laplacian_power(dir.m, reg.k);
    auto lv = laplacian_power(dir.u, reg.k);
    Q floor = Q(reg.eps) * (inner(dir.m, dir.m) + inner(lw, lw) + inner(dir.u, dir.u) + inner(lv, lv));
    EXPECT_GE(to_double(inner(J, dir) - floor), -1e-12 * to_double(floor));
  }
}

TEST(Continuation, LambdaZeroClosedForm) {
  TorusGrid g(1, 32);
  for (double eps : {0.5, 0.1, 1e-2, 1e-4}) {
    RegParams reg{eps, 2, RegVariant::penalized};
    auto s = lambda_zero_state<Q>(g, reg);
    Q c = Q(eps) / (1 + Q(eps) * Q(eps));
    EXPECT_NEAR(to_double(s.u[0]), to_double(c), 1e-30);
    MFGProblem<Q> pb(g, {}, {}, GridField<Q>(g), GridField<Q>(g, Q(1)));
    EXPECT_LE(to_double(norm_inf(apply_F_eps_lambda(pb, reg, Q(0), s))), 1e-12);
    // Scalar cross-check: the lambda = 0 residual as a function of c changes sign around c*.
    auto i = [&](Q cc) { return -cc + Q(eps) * (1 - Q(eps) * cc); };
    EXPECT_GT(to_double(i(c - Q(1e-9))), 0);
    EXPECT_LT(to_double(i(c + Q(1e-9))), 0);
  }
}

TEST(Continuation, RequiresPenalizedVariant) {
  auto pb = baseline_problem();
  EXPECT_THROW(continuation_solve(pb, baseline_reg(RegVariant::plain)), ValidationError);
}

TEST(Continuation, PathRecordedAndPositive) {
  auto pb = baseline_problem();
  auto [s, rep] = continuation_solve(pb, baseline_reg());
  ASSERT_EQ(rep.status, SolveStatus::converged);
  ASSERT_GE(rep.lambdaPath.size(), 2u);
  EXPECT_EQ(rep.lambdaPath.front().first, 0.0);
  EXPECT_EQ(rep.lambdaPath.back().first, 1.0);
  for (std::size_t i = 1; i < rep.lambdaPath.size(); ++i)
    EXPECT_GT(rep.lambdaPath[i].first, rep.lambdaPath[i - 1].first);
  EXPECT_GT(rep.minM, 0);
  EXPECT_LE(to_double(norm_inf(apply_F_eps_lambda(pb, baseline_reg(), Q(1), s))), 1e-9);
}

TEST(Continuation, BothPreconditionersAgree) {
  auto pb = baseline_problem();
  ContinuationOptions opt;
  opt.newton.preconditioner = Preconditioner::reg_inverse;
  auto [a, ra] = continuation_solve(pb, baseline_reg(), opt);
  auto [b, rb] = continuation_solve(pb, baseline_reg());
  ASSERT_EQ(ra.status, SolveStatus::converged);
  ASSERT_EQ(rb.status, SolveStatus::converged);
  EXPECT_LE(to_double(norm_inf(a - b)), 1e-9);
}

TEST(Uniqueness, DistinctStartsAgree) {
  auto pb = baseline_problem();
  const auto& g = pb.grid();
  auto bank = make_test_bank<Q>(g, 4, 99, BankConstraint::unit_mass_nonneg);
  PicardOptions opt;
  opt.anderson_depth = 5;
  auto reg = baseline_reg(RegVariant::plain);
  auto [s1, r1] = picard_solve(pb, reg, StatePair<Q>(g), opt);
  auto [s2, r2] = picard_solve(pb, reg, bank[3], opt);
  ASSERT_EQ(r1.status, SolveStatus::converged);
  ASSERT_EQ(r2.status, SolveStatus::converged);
  EXPECT_LE(to_double(norm_inf(s1 - s2)), 1e-6);
}
