#pragma once

// Subcommand orchestration: config in, ReportBundle and exit code out.
// Exit codes: 0 converged or pass, 1 failed checks or I/O, 2 validation,
// 3 non-convergence, 4 domain failure.

#include "mmfg/cli/config.hpp"
#include "mmfg/cli/report.hpp"
#include "mmfg/cli/verify.hpp"

#include <cstdlib>
#include <ostream>
#include <string>

namespace mmfg::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kValidation = 2, kNoConvergence = 3, kDomain = 4 };

struct RunOutcome {
  int exit_code = kOk;
  ReportBundle bundle;
};

inline int exit_for(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return kOk;
    case SolveStatus::maxIter: return kNoConvergence;
    case SolveStatus::domainFailure: return kDomain;
  }
  return kFailure;
}

/// Worst of two exit codes: domain over non-convergence over success.
inline int merge_exit(int a, int b) {
  auto rank = [](int c) { return c == kDomain ? 3 : c == kNoConvergence ? 2 : c == kOk ? 0 : 1; };
  return rank(b) > rank(a) ? b : a;
}

inline std::string resolve_output_dir(const RunConfig& cfg, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (!cfg.output.dir.empty()) return cfg.output.dir;
  if (const char* env = std::getenv("MMFG_OUTPUT_DIR"); env && *env) return env;
  return ".";
}

namespace detail {

inline json header(const RunConfig& cfg, const std::string& command) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = command;
  j["seed"] = cfg.seed;
  j["config"] = to_json(cfg);
  return j;
}

template <class Real>
json field_json(const GridField<Real>& f) {
  json a = json::array();
  for (std::size_t j = 0; j < f.size(); ++j) a.push_back(to_double(f[j]));
  return a;
}

inline double ratio(const std::vector<double>& v) {
  if (v.empty()) return 1.0;
  double lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
  if (lo <= 0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

}  // namespace detail

/// Regularized stationary solves along `schedule` (one entry for solve-stationary).
inline RunOutcome run_stationary(const RunConfig& cfg, const std::vector<double>& schedule, const std::string& command,
                                 std::ostream& log) {
  using Q = quad;
  auto pb = cfg.stationary_problem<Q>();
  auto bank = cfg.bank_size > 0
                  ? make_test_bank<Q>(pb.grid(), cfg.bank_size, cfg.seed, BankConstraint::unit_mass_nonneg, &pb.phi())
                  : std::vector<StatePair<Q>>{};
  SweepOptions so;
  so.solver = cfg.solver.method == StationaryMethod::continuation ? SweepSolver::continuation : SweepSolver::picard;
  so.warm_start = cfg.solver.warm_start;
  so.picard = cfg.solver.picard;
  so.continuation = cfg.solver.continuation;
  auto rep = minty_sweep(pb, cfg.reg(schedule.empty() ? cfg.epsilon : schedule.front()), schedule, bank, so);

  RunOutcome out;
  auto& j = out.bundle.report;
  j = detail::header(cfg, command);
  json rows = json::array();
  std::vector<double> mgm, mDu, phiDu;
  int code = kOk;
  for (const auto& r : rep.rows) {
    const auto& a = r.apriori;
    rows.push_back({{"epsilon", r.eps},
                    {"status", to_string(r.status)},
                    {"message", r.message},
                    {"iterations", r.iterations},
                    {"residual", r.finalResidual},
                    {"tolerance", r.tolerance},
                    {"apriori",
                     {{"mgm", a.mgm},
                      {"mDu", a.mDu},
                      {"phiDu", a.phiDu},
                      {"regQuad", a.regQuad},
                      {"penMass", a.penMass},
                      {"penGap", a.penGap},
                      {"intM", a.intM},
                      {"intU", a.intU},
                      {"intUM", a.intUM},
                      {"intH", a.intH},
                      {"minM", a.minM},
                      {"nonneg_ok", a.nonneg_ok}}},
                    {"mass_defect", r.massDefect},
                    {"max_weak_vi", r.maxWeakVI}});
    out.bundle.rows.push_back(TableRow{r.eps, a.mgm, a.mDu, a.phiDu, a.regQuad, a.intM, a.intU, a.intUM, a.intH, a.minM,
                                       r.maxWeakVI, r.iterations, r.finalResidual});
    mgm.push_back(a.mgm);
    mDu.push_back(a.mDu);
    phiDu.push_back(a.phiDu);
    code = merge_exit(code, exit_for(r.status));
    log << "eps " << format_double(r.eps) << "  " << to_string(r.status) << "  iters " << r.iterations << "  residual "
        << format_double(r.finalResidual) << "  minM " << format_double(a.minM) << "  weakVI "
        << format_double(r.maxWeakVI) << "  (" << r.seconds << " s)\n";
  }
  out.bundle.has_table = true;
  j["rows"] = rows;
  json cauchy = json::array();
  for (const auto& c : rep.cauchy)
    cauchy.push_back({{"eps_a", c.eps_a}, {"eps_b", c.eps_b}, {"m_l2", c.m_l2}, {"u_w1alpha", c.u_w1a}});
  j["cauchy"] = cauchy;
  j["mass_fit"] = {{"c", rep.massFit.c}, {"rel_residual", rep.massFit.relResidual}};
  j["apriori_ratios"] = {{"mgm", detail::ratio(mgm)}, {"mDu", detail::ratio(mDu)}, {"phiDu", detail::ratio(phiDu)}};
  j["status"] = code == kOk ? "converged" : code == kDomain ? "domainFailure" : "maxIter";
  j["exit_code"] = code;
  out.exit_code = code;
  return out;
}

inline RunOutcome run_linear(const RunConfig& cfg, std::ostream& log) {
  using Q = quad;
  auto pb = cfg.linear_problem<Q>();
  RunOutcome out;
  auto& j = out.bundle.report;
  j = detail::header(cfg, "solve-linear");
  auto exact = lin_oracle(pb, cfg.epsilon);
  auto limit = lin_oracle(pb);
  json rows = json::array();
  int code = kOk;
  for (auto m : cfg.linear.methods) {
    auto [u, rep] = lin_solve(pb, cfg.epsilon, m);
    double err = to_double(norm_inf(u - exact));
    rows.push_back({{"method", to_string(m)},
                    {"status", to_string(rep.status)},
                    {"iterations", rep.iterations},
                    {"residual", rep.finalResidual},
                    {"error_to_oracle", err},
                    {"error_to_unregularized", to_double(norm_inf(u - limit))}});
    code = merge_exit(code, exit_for(rep.status));
    log << to_string(m) << "  " << to_string(rep.status) << "  iters " << rep.iterations << "  residual "
        << format_double(rep.finalResidual) << "  oracle error " << format_double(err) << "\n";
  }
  j["epsilon"] = cfg.epsilon;
  j["methods"] = rows;
  j["oracle"] = detail::field_json(exact);
  j["status"] = code == kOk ? "converged" : "maxIter";
  j["exit_code"] = code;
  out.exit_code = code;
  return out;
}

/// Time-dependent solves along the timedep schedule, warm-started downward.
/// Table columns keep the stationary header; phiDu holds int int |Du|^alpha
/// (there is no source term in the time-dependent problem).
inline RunOutcome run_timedep(const RunConfig& cfg, std::ostream& log) {
  using Q = quad;
  auto pb = cfg.timedep_problem<Q>();
  const auto& g = pb.grid();
  auto bank = cfg.bank_size > 0 ? make_td_bank(pb, cfg.bank_size, cfg.seed) : std::vector<TDState<Q>>{};
  RunOutcome out;
  auto& j = out.bundle.report;
  j = detail::header(cfg, "solve-timedep");
  json rows = json::array();
  std::vector<double> totals;
  int code = kOk;
  std::optional<TDState<Q>> prev;
  for (double eps : cfg.timedep.schedule) {
    const TDState<Q>* start = cfg.timedep.warm_start && prev ? &*prev : nullptr;
    auto [s, rep] = td_picard_solve(pb, eps, cfg.timedep.picard, start);
    auto diag = td_diagnostics(pb, eps, s, bank);
    const auto& a = diag.apriori;
    SpaceTimeField<Q> um(g);
    for (std::size_t i = 0; i < um.size(); ++i) um[i] = s.u[i] * s.m[i];
    double intM = to_double(integrate(s.m)), intU = to_double(integrate(s.u)), intUM = to_double(integrate(um));
    bool pinned = norm_inf(s.m.slice(0) - pb.m0()) == 0 && norm_inf(s.u.slice(g.nt() - 1) - pb.uT()) == 0;
    rows.push_back({{"epsilon", eps},
                    {"status", to_string(rep.status)},
                    {"message", rep.message},
                    {"iterations", rep.iterations},
                    {"residual", rep.finalResidual},
                    {"boundary_slices_exact", pinned},
                    {"apriori",
                     {{"mgm", a.mgm},
                      {"duAlpha", a.duAlpha},
                      {"mDu", a.mDu},
                      {"total", a.total},
                      {"regQuad", a.regQuad},
                      {"intH", a.intH},
                      {"minM", a.minM}}},
                    {"max_weak_vi", bank.empty() ? 0.0 : diag.maxWeakVI},
                    {"slice_mass", diag.sliceMass}});
    out.bundle.rows.push_back(TableRow{eps, a.mgm, a.mDu, a.duAlpha, a.regQuad, intM, intU, intUM, a.intH, a.minM,
                                       bank.empty() ? 0.0 : diag.maxWeakVI, rep.iterations, rep.finalResidual});
    totals.push_back(a.total);
    code = merge_exit(code, exit_for(rep.status));
    log << "eps " << format_double(eps) << "  " << to_string(rep.status) << "  iters " << rep.iterations
        << "  residual " << format_double(rep.finalResidual) << "  minM " << format_double(a.minM) << "  weakVI "
        << format_double(diag.maxWeakVI) << "  (" << rep.seconds << " s)\n";
    if (rep.status == SolveStatus::converged) prev = s;
  }
  out.bundle.has_table = true;
  j["rows"] = rows;
  j["apriori_total_ratio"] = detail::ratio(totals);
  j["status"] = code == kOk ? "converged" : "maxIter";
  j["exit_code"] = code;
  out.exit_code = code;
  return out;
}

inline RunOutcome run_verify(const RunConfig& cfg, std::ostream& log) {
  VerifyOptions vo;
  vo.seed = cfg.seed;
  auto checks = verify_suite(cfg, vo);
  RunOutcome out;
  auto& j = out.bundle.report;
  j = detail::header(cfg, "verify");
  json arr = json::array();
  std::vector<std::string> failed;
  for (const auto& c : checks) {
    json metrics = json::array();
    for (const auto& m : c.metrics)
      metrics.push_back({{"name", m.name},
                         {"value", m.value},
                         {"limit", m.limit},
                         {"kind", m.lower_bound ? "min" : "max"},
                         {"margin", m.margin()},
                         {"pass", m.ok()}});
    arr.push_back({{"name", c.name}, {"pass", c.passed()}, {"error", c.error}, {"metrics", metrics}});
    log << (c.passed() ? "PASS " : "FAIL ") << c.name << "  (" << c.seconds << " s)\n";
    if (!c.error.empty()) log << "     error: " << c.error << "\n";
    for (const auto& m : c.metrics)
      log << "     " << (m.ok() ? "ok   " : "FAIL ") << m.name << " = " << format_double(m.value)
          << (m.lower_bound ? "  (min " : "  (max ") << format_double(m.limit) << ", margin "
          << format_double(m.margin()) << ")\n";
    if (!c.passed()) failed.push_back(c.name);
  }
  j["checks"] = arr;
  j["failed"] = failed;
  out.exit_code = failed.empty() ? kOk : kFailure;
  j["status"] = failed.empty() ? "pass" : "fail";
  j["exit_code"] = out.exit_code;
  if (!failed.empty()) {
    log << "failed checks:";
    for (const auto& f : failed) log << " " << f;
    log << "\n";
  }
  return out;
}

/// Dispatches a subcommand. Validation and domain errors map to their codes;
/// the report is not written when the run could not start.
inline RunOutcome run_command(const RunConfig& cfg, const std::string& command, std::ostream& log) {
  if (command == "solve-stationary") return run_stationary(cfg, {cfg.epsilon}, command, log);
  if (command == "sweep") return run_stationary(cfg, cfg.schedule, command, log);
  if (command == "solve-linear") return run_linear(cfg, log);
  if (command == "solve-timedep") return run_timedep(cfg, log);
  if (command == "verify") return run_verify(cfg, log);
  throw ConfigError("command", "unknown command '" + command + "'");
}

}  // namespace mmfg::cli
