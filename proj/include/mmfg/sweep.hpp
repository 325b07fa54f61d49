#pragma once

// The epsilon -> 0 sweep: solve the regularized problem along a decreasing
// schedule, record a priori quantities and weak-VI residuals against a test
// bank (with the unregularized F), and Cauchy distances between neighbours.

#include "mmfg/monotone.hpp"
#include "mmfg/solvers/stationary.hpp"

#include <cmath>
#include <vector>

namespace mmfg {

enum class SweepSolver { picard, continuation };

struct SweepOptions {
  SweepSolver solver = SweepSolver::continuation;
  bool warm_start = true;
  PicardOptions picard{};
  ContinuationOptions continuation{};
};

struct SweepRow {
  double eps = 0;
  AprioriRecord<double> apriori;
  double maxWeakVI = 0;
  double massDefect = 0;  // |int m - 1|
  int iterations = 0;
  double finalResidual = 0;
  double tolerance = 0;
  SolveStatus status = SolveStatus::maxIter;
  std::string message;
  double seconds = 0;
  bool failed() const { return status != SolveStatus::converged; }
};

struct CauchyRow {
  double eps_a = 0, eps_b = 0;
  double m_l2 = 0;   // discrete L2 distance of the densities
  double u_w1a = 0;  // discrete W^{1,alpha} seminorm of the difference plus |mean difference|
};

struct SqrtFit {
  double c = 0;
  double relResidual = 0;  // |y - c sqrt(eps)| / |y|
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::vector<CauchyRow> cauchy;
  SqrtFit massFit;
};

/// Least-squares fit y ~ c sqrt(eps).
inline SqrtFit fit_sqrt(const std::vector<double>& eps, const std::vector<double>& y) {
  if (eps.size() != y.size()) throw ValidationError("fit_sqrt: size mismatch");
  SqrtFit out;
  double num = 0, den = 0, yy = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    num += y[i] * std::sqrt(eps[i]);
    den += eps[i];
    yy += y[i] * y[i];
  }
  if (den == 0) return out;
  out.c = num / den;
  double rr = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    double r = y[i] - out.c * std::sqrt(eps[i]);
    rr += r * r;
  }
  out.relResidual = yy > 0 ? std::sqrt(rr / yy) : 0.0;
  return out;
}

template <class Real>
AprioriRecord<double> to_double_record(const AprioriRecord<Real>& r) {
  AprioriRecord<double> o;
  o.mgm = to_double(r.mgm);
  o.mDu = to_double(r.mDu);
  o.phiDu = to_double(r.phiDu);
  o.regQuad = to_double(r.regQuad);
  o.penMass = to_double(r.penMass);
  o.penGap = to_double(r.penGap);
  o.intM = to_double(r.intM);
  o.intU = to_double(r.intU);
  o.intUM = to_double(r.intUM);
  o.intH = to_double(r.intH);
  o.minM = to_double(r.minM);
  o.nonneg_ok = r.nonneg_ok;
  o.violations = r.violations;
  return o;
}

template <class Real>
CauchyRow cauchy_distance(const MFGProblem<Real>& pb, const StatePair<Real>& a, const StatePair<Real>& b) {
  using std::abs;
  using std::pow;
  using std::sqrt;
  CauchyRow row;
  auto d = a - b;
  row.m_l2 = to_double(norm_l2(d.m));
  auto Dd = gradient(d.u);
  Real alpha(pb.hamiltonian().alpha);
  Real s = 0;
  for (std::size_t j = 0; j < d.u.size(); ++j) {
    Real p2 = 0;
    for (int c = 0; c < pb.dim(); ++c) p2 += Dd[c][j] * Dd[c][j];
    if (p2 > 0) s += pow(sqrt(p2), alpha);
  }
  s *= pb.grid().template cell_volume<Real>();
  row.u_w1a = to_double(pow(s, 1 / alpha) + abs(integrate(d.u)));
  return row;
}

template <class Real>
SweepReport minty_sweep(const MFGProblem<Real>& pb, const RegParams& reg_template, const std::vector<double>& schedule,
                        const std::vector<StatePair<Real>>& bank, const SweepOptions& opt = {}) {
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (!(schedule[i] > 0.0 && schedule[i] < 1.0)) throw ValidationError("sweep: every epsilon must lie in (0, 1)");
    if (i > 0 && !(schedule[i] < schedule[i - 1])) throw ValidationError("sweep: schedule must be strictly decreasing");
  }
  if (opt.solver == SweepSolver::continuation && reg_template.variant != RegVariant::penalized)
    throw ValidationError("sweep: continuation needs the penalized variant");
  for (const auto& t : bank)
    if (!(t.grid() == pb.grid())) throw ValidationError("sweep: bank element on wrong grid");

  SweepReport rep;
  std::vector<StatePair<Real>> sols;
  const auto& g = pb.grid();
  for (double eps : schedule) {
    RegParams reg = reg_template;
    reg.eps = eps;
    SweepRow row;
    row.eps = eps;
    std::pair<StatePair<Real>, SolveReport> res{StatePair<Real>(g), SolveReport{}};
    bool warm = opt.warm_start && !sols.empty();
    if (opt.solver == SweepSolver::picard) {
      row.tolerance = opt.picard.tol;
      StatePair<Real> s0 = warm ? sols.back() : StatePair<Real>(pb.phi(), GridField<Real>(g));
      res = picard_solve(pb, reg, s0, opt.picard);
    } else {
      row.tolerance = opt.continuation.newton.tol;
      if (warm) {
        StatePair<Real> s0 = sols.back();
        // The penalized operator is defined only for m > 0.
        if (min_value(s0.m) > 0) res = newton_at_target(pb, reg, s0, opt.continuation.newton);
      }
      if (res.second.status != SolveStatus::converged) {
        auto cold = continuation_solve(pb, reg, opt.continuation);
        cold.second.iterations += res.second.iterations;
        res = std::move(cold);
      }
    }
    const auto& s = res.first;
    const auto& sr = res.second;
    row.status = sr.status;
    row.message = sr.message;
    row.iterations = sr.iterations;
    row.finalResidual = sr.finalResidual;
    row.seconds = sr.seconds;
    if (row.status == SolveStatus::converged && row.finalResidual > row.tolerance) row.status = SolveStatus::maxIter;
    try {
      row.apriori = to_double_record(apriori_quantities(pb, reg, 1.0, s));
    } catch (const DomainError& e) {
      row.status = SolveStatus::domainFailure;
      row.message = e.what();
    }
    row.massDefect = std::abs(to_double(integrate(s.m)) - 1.0);
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& t : bank) worst = std::max(worst, to_double(weak_vi_residual(pb, s, t)));
    row.maxWeakVI = bank.empty() ? 0.0 : worst;
    if (!sols.empty()) {
      auto c = cauchy_distance(pb, sols.back(), s);
      c.eps_a = rep.rows.back().eps;
      c.eps_b = eps;
      rep.cauchy.push_back(c);
    }
    sols.push_back(s);
    rep.rows.push_back(std::move(row));
  }
  std::vector<double> e, y;
  for (const auto& r : rep.rows) {
    e.push_back(r.eps);
    y.push_back(r.massDefect);
  }
  rep.massFit = fit_sqrt(e, y);
  return rep;
}

}  // namespace mmfg
