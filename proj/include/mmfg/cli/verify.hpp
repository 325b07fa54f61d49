#pragma once

// The invariant suite behind `mmfg verify`. Each check returns named metrics
// with their limits; a check passes when every metric is within its limit.
// Random draws depend on the seed, pass/fail should not.

#include "mmfg/cli/config.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace mmfg::cli {

struct Metric {
  std::string name;
  double value = 0;
  double limit = 0;
  bool lower_bound = false;  // pass when value >= limit instead of <=
  bool ok() const { return lower_bound ? value >= limit : value <= limit; }
  /// Distance to the limit, positive when passing.
  double margin() const { return lower_bound ? value - limit : limit - value; }
};

struct CheckResult {
  std::string name;
  std::vector<Metric> metrics;
  std::string error;  // set when the check threw
  double seconds = 0;
  bool passed() const {
    if (!error.empty()) return false;
    return std::all_of(metrics.begin(), metrics.end(), [](const Metric& m) { return m.ok(); });
  }
};

struct VerifyOptions {
  std::uint64_t seed = 1;
  int calculus_trials = 10;
  int legendre_samples = 10;
  int gap_pairs = 20;        // per configuration
  int jacobian_directions = 15;
  int td_pairs = 20;
  double td_eps = 1e-2;
};

namespace verify {

using Q = quad;

inline GridVectorField<Q> random_vector_field(const TorusGrid& g, std::mt19937_64& rng) {
  std::vector<GridField<Q>> c;
  for (int a = 0; a < g.dim(); ++a) c.push_back(mmfg::detail::random_trig_field<Q>(g, g.n() / 4, rng, true));
  return GridVectorField<Q>(std::move(c));
}

/// <div V, f> = -<V, grad f>, div grad = Lap on Nyquist-free fields, <Lap^{2k} f, f> >= 0.
inline CheckResult operator_calculus(const VerifyOptions& o) {
  CheckResult r{"adjointness", {}, {}, 0};
  std::mt19937_64 rng(o.seed);
  double adj = 0, comp = 0, psd = 0;
  for (auto [d, n] : {std::pair{1, 64}, std::pair{2, 32}}) {
    TorusGrid g(d, n);
    for (int t = 0; t < o.calculus_trials; ++t) {
      auto V = random_vector_field(g, rng);
      auto f = mmfg::detail::random_trig_field<Q>(g, n / 4, rng, true);
      Q lhs = inner(divergence(V), f), rhs = -inner(V, gradient(f));
      using std::abs;
      Q scale = std::max(abs(lhs), abs(rhs));
      if (scale > 0) adj = std::max(adj, to_double(abs(lhs - rhs) / scale));
      auto lap = laplacian(f);
      comp = std::max(comp, to_double(norm_inf(divergence(gradient(f)) - lap) / norm_inf(lap)));
      for (int k = 1; k <= 3; ++k) {
        auto p = laplacian_power(f, 2 * k);
        Q q = inner(p, f);
        Q s = norm_l2(p) * norm_l2(f);
        if (q < 0) psd = std::max(psd, to_double(-q / s));
      }
    }
  }
  r.metrics = {{"adjoint_rel_error", adj, 1e-12},
               {"div_grad_minus_lap_rel", comp, 1e-12},
               {"lap_power_negativity_rel", psd, 1e-12}};
  return r;
}

/// Brute-force sup of -v.p - L(v) against the closed-form H.
inline CheckResult legendre(const VerifyOptions& o) {
  CheckResult r{"legendre", {}, {}, 0};
  std::mt19937_64 rng(o.seed + 1);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  double worst = 0;
  int inconclusive = 0;
  for (double alpha : {1.5, 2.0, 3.0}) {
    HamiltonianSpec h{alpha};
    for (int i = 0; i < o.legendre_samples; ++i) {
      std::array<double, 2> p{U(rng), 0.0};
      // |maximizer| = |p|^{alpha - 1} <= 4 here.
      auto c = legendre_verify(h, p, 1, 8.0, 16001);
      worst = std::max(worst, c.gap);
      inconclusive += c.inconclusive;
    }
  }
  r.metrics = {{"max_abs_gap", worst, 1e-3}, {"boundary_maximizers", double(inconclusive), 0}};
  return r;
}

inline StatePair<Q> random_pair(const TorusGrid& g, std::mt19937_64& rng, double floor) {
  auto f = mmfg::detail::random_trig_field<Q>(g, g.n() / 8, rng, true);
  auto m = hadamard(f, f);
  m += Q(floor);
  return StatePair<Q>(std::move(m), mmfg::detail::random_trig_field<Q>(g, g.n() / 8, rng, true));
}

/// Monotonicity gap over alpha x coupling x viscosity x variant.
inline CheckResult gap(const VerifyOptions& o, int d = 1, int n = 32) {
  CheckResult r{"gap_nonnegativity", {}, {}, 0};
  TorusGrid g(d, n);
  double min_total = std::numeric_limits<double>::infinity(), mismatch = 0;
  for (double alpha : {1.5, 2.0, 3.0})
    for (auto c : {CouplingSpec{}, CouplingSpec{CouplingKind::power, 2.0}})
      for (double nu : {0.0, 1.0}) {
        MFGProblem<Q> pb(g, HamiltonianSpec{alpha}, c, GridField<Q>(g), GridField<Q>(g, Q(1)), nu);
        for (auto op : {OperatorChoice::plain(), OperatorChoice::regularized({0.05, 2, RegVariant::penalized})}) {
          std::mt19937_64 rng(o.seed + 2);
          for (int i = 0; i < o.gap_pairs; ++i) {
            auto s1 = random_pair(g, rng, 0.02), s2 = random_pair(g, rng, 0.02);
            auto b = monotonicity_gap(pb, op, s1, s2);
            min_total = std::min(min_total, to_double(b.total));
            mismatch = std::max(mismatch, to_double(b.mismatch()));
          }
        }
      }
  r.metrics = {{"min_gap", min_total, -1e-10, true}, {"direct_vs_parts_rel", mismatch, 1e-10}};
  return r;
}

/// KKT triple of the obstacle subproblem on data with a free boundary.
inline CheckResult kkt(const VerifyOptions&) {
  CheckResult r{"kkt", {}, {}, 0};
  TorusGrid g(1, 64);
  const int k = 2;
  const double tol = 1e-9;
  Q shift = Q(0.5) / (1 + ipow(4 * pi<Q>() * pi<Q>(), unsigned(2 * k)));
  auto f = GridField<Q>::from_function(g, [&](auto x) { return sin(two_pi<Q>() * x[0]) - shift; });
  double minW = 0, minR = 0, comp = 0, fails = 0;
  for (double eps : {1e-1, 1e-2, 1e-3}) {
    auto s = solve_obstacle(f, Q(eps), k, tol);
    double scale = std::max(1.0, to_double(norm_inf(s.w)));
    minW = std::min(minW, to_double(min_value(s.w)));
    minR = std::min(minR, to_double(s.minR) / scale);
    using std::abs;
    comp = std::max(comp, to_double(abs(s.complementarity)) / (scale * scale));
    fails += s.status != SolveStatus::converged;
  }
  r.metrics = {{"min_w", minW, 0.0, true},
               {"min_r_scaled", minR, -tol, true},
               {"complementarity_scaled", comp, tol},
               {"unconverged", fails, 0}};
  return r;
}

/// Central differences of F_eps^lambda against jacobian_apply, and
/// <J dir, dir> >= eps (|w|^2 + |Lap^k w|^2 + |v|^2 + |Lap^k v|^2).
inline CheckResult jacobian(const VerifyOptions& o) {
  CheckResult r{"jacobian_fd", {}, {}, 0};
  TorusGrid g(1, 64);
  std::mt19937_64 rng(o.seed + 3);
  auto smooth = [&] { return mmfg::detail::random_trig_field<Q>(g, g.n() / 8, rng, true); };
  double fd = 0, coer = 0;
  RegParams reg{0.05, 2, RegVariant::penalized};
  int done = 0;
  while (done < o.jacobian_directions) {
    for (double alpha : {1.5, 2.0, 3.0}) {
      if (done >= o.jacobian_directions) break;
      MFGProblem<Q> pb(g, HamiltonianSpec{alpha}, CouplingSpec{CouplingKind::power, 2.0}, smooth(),
                       GridField<Q>(g, Q(1)), 0.5);
      auto f = smooth();
      GridField<Q> m = hadamard(f, f) * Q(0.1);
      m += Q(0.03);  // straddles the penalty zone
      StatePair<Q> s(m, smooth() * Q(0.3));
      StatePair<Q> dir(smooth(), smooth());
      Q lambda(0.7), h(1e-5);
      auto diff = apply_F_eps_lambda(pb, reg, lambda, s + h * dir) - apply_F_eps_lambda(pb, reg, lambda, s - h * dir);
      diff *= 1 / (2 * h);
      auto J = jacobian_apply(pb, reg, lambda, s, dir);
      fd = std::max(fd, to_double(norm_inf(diff - J) / norm_inf(J)));
      auto lw = laplacian_power(dir.m, reg.k), lv = laplacian_power(dir.u, reg.k);
      Q floor = Q(reg.eps) * (inner(dir.m, dir.m) + inner(lw, lw) + inner(dir.u, dir.u) + inner(lv, lv));
      Q q = inner(J, dir);
      if (q < floor) coer = std::max(coer, to_double((floor - q) / floor));
      ++done;
    }
  }
  r.metrics = {{"fd_rel_error", fd, 1e-6}, {"coercivity_deficit_rel", coer, 1e-12}};
  return r;
}

/// The three linear-model solvers against the per-mode oracle.
inline CheckResult oracle_equivalence(const VerifyOptions&) {
  CheckResult r{"oracle_equivalence", {}, {}, 0};
  TorusGrid g(1, 64);
  GridVectorField<Q> b(g);
  b[0] = GridField<Q>(g, Q(0.3));
  LinProblem<Q> pb(b, GridField<Q>::from_function(g, [](auto x) { return cos(two_pi<Q>() * x[0]); }));
  const double eps = 1e-2;
  auto exact = lin_oracle(pb, eps);
  std::vector<GridField<Q>> sols;
  double worst = 0, cross = 0, fails = 0;
  for (auto m : {LinMethod::variational, LinMethod::bilinear, LinMethod::continuation}) {
    auto [u, rep] = lin_solve(pb, eps, m);
    fails += rep.status != SolveStatus::converged;
    worst = std::max(worst, to_double(norm_inf(u - exact)));
    sols.push_back(u);
  }
  for (std::size_t i = 0; i < sols.size(); ++i)
    for (std::size_t j = i + 1; j < sols.size(); ++j) cross = std::max(cross, to_double(norm_inf(sols[i] - sols[j])));
  r.metrics = {{"max_error_to_oracle", worst, 1e-8}, {"max_cross_disagreement", cross, 1e-10}, {"unconverged", fails, 0}};
  return r;
}

/// Picard from the zero state and from a random bank state.
inline CheckResult uniqueness(const RunConfig& cfg, const VerifyOptions& o) {
  CheckResult r{"uniqueness_probe", {}, {}, 0};
  auto pb = cfg.stationary_problem<Q>();
  RegParams reg{cfg.epsilon, cfg.solver.k > 0 ? cfg.solver.k : RegParams::default_k(pb.dim()), RegVariant::plain};
  PicardOptions opt = cfg.solver.picard;
  if (opt.anderson_depth == 0) opt.anderson_depth = 5;
  auto bank = make_test_bank<Q>(pb.grid(), 4, o.seed, BankConstraint::unit_mass_nonneg);
  auto [s1, r1] = picard_solve(pb, reg, StatePair<Q>(pb.grid()), opt);
  auto [s2, r2] = picard_solve(pb, reg, bank.back(), opt);
  double fails = (r1.status != SolveStatus::converged) + (r2.status != SolveStatus::converged);
  r.metrics = {{"max_abs_difference", to_double(norm_inf(s1 - s2)), 1e-6}, {"unconverged", fails, 0}};
  return r;
}

/// Time-dependent solve, pinning, positivity, gap and weak-VI residual.
inline CheckResult timedep(const RunConfig& cfg, const VerifyOptions& o) {
  CheckResult r{"timedep", {}, {}, 0};
  auto pb = cfg.timedep_problem<Q>();
  const auto& g = pb.grid();
  auto [s, rep] = td_picard_solve(pb, o.td_eps, cfg.timedep.picard);
  double pin = std::max(to_double(norm_inf(s.m.slice(0) - pb.m0())), to_double(norm_inf(s.u.slice(g.nt() - 1) - pb.uT())));
  auto bank = make_td_bank(pb, o.td_pairs + 1, o.seed);
  double min_gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i < o.td_pairs; ++i)
    min_gap = std::min(min_gap, to_double(td_monotonicity_gap(pb, bank[std::size_t(i)], bank[std::size_t(i) + 1]).total));
  auto diag = td_diagnostics(pb, o.td_eps, s, bank);
  r.metrics = {{"unconverged", rep.status != SolveStatus::converged ? 1.0 : 0.0, 0},
               {"boundary_slice_deviation", pin, 0},
               {"min_m", to_double(min_value(s.m)), 0.0, true},
               {"min_td_gap", min_gap, -1e-10, true},
               {"max_weak_vi", diag.maxWeakVI, 1e-5}};
  return r;
}

}  // namespace verify

/// Runs every check; exceptions inside a check mark it failed with the message.
inline std::vector<CheckResult> verify_suite(const RunConfig& cfg, const VerifyOptions& o) {
  std::vector<std::function<CheckResult()>> checks{
      [&] { return verify::operator_calculus(o); }, [&] { return verify::legendre(o); },
      [&] { return verify::gap(o); },               [&] { return verify::kkt(o); },
      [&] { return verify::jacobian(o); },          [&] { return verify::oracle_equivalence(o); },
      [&] { return verify::uniqueness(cfg, o); },   [&] { return verify::timedep(cfg, o); }};
  static const char* names[] = {"adjointness", "legendre",           "gap_nonnegativity", "kkt",
                                "jacobian_fd", "oracle_equivalence", "uniqueness_probe",  "timedep"};
  std::vector<CheckResult> out;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    auto t0 = std::chrono::steady_clock::now();
    CheckResult r;
    try {
      r = checks[i]();
    } catch (const std::exception& e) {
      r.name = names[i];
      r.error = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace mmfg::cli
