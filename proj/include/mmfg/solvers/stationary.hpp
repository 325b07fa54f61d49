#pragma once

// Stationary solvers: the Picard map (obstacle solve for m, diagonal solve
// for u) with damped iteration, the Jacobian of the penalized family, and
// Newton continuation in lambda.

#include "mmfg/model.hpp"
#include "mmfg/solvers/fixed_point.hpp"
#include "mmfg/solvers/linear.hpp"
#include "mmfg/solvers/obstacle.hpp"

#include <chrono>
#include <complex>
#include <utility>
#include <vector>

namespace mmfg {

template <class Real>
Vector<Real> flatten(const StatePair<Real>& s) {
  Vector<Real> v(s.m.values());
  v.insert(v.end(), s.u.values().begin(), s.u.values().end());
  return v;
}

template <class Real>
StatePair<Real> unflatten(const TorusGrid& g, const Vector<Real>& v) {
  std::size_t n = g.size();
  return StatePair<Real>(GridField<Real>(g, Vector<Real>(v.begin(), v.begin() + std::ptrdiff_t(n))),
                         GridField<Real>(g, Vector<Real>(v.begin() + std::ptrdiff_t(n), v.end())));
}

// ---------------------------------------------------------------------------
// Picard

/// `active` (optional) seeds the obstacle active set and receives the new one.
template <class Real>
StatePair<Real> picard_map(const MFGProblem<Real>& pb, const RegParams& reg, const StatePair<Real>& s1,
                           double kkt_tol = 1e-9, std::vector<std::size_t>* active = nullptr) {
  reg.validate();
  require_nonnegative(s1.m, "picard_map");
  auto f = frozen_rhs(pb, s1);
  Real eps(reg.eps);
  auto obs = solve_obstacle(f.m, eps, reg.k, kkt_tol, active);
  if (obs.status != SolveStatus::converged)
    throw Error("picard_map: obstacle subproblem missed its KKT tolerance");
  if (active) *active = std::move(obs.activeSet);
  return StatePair<Real>(std::move(obs.w), solve_reg_linear(f.u, eps, reg.k));
}

/// Residual of the regularized VI system at s: max of the u-row equation
/// residual and the natural residual min(m, eps R m + f1) of the m-row.
template <class Real>
Real vi_system_residual(const MFGProblem<Real>& pb, const RegParams& reg, const StatePair<Real>& s) {
  using std::abs;
  auto f = frozen_rhs(pb, s);
  Real eps(reg.eps);
  auto ru = apply_reg(s.u, eps, reg.k) - f.u;
  auto rm = apply_reg(s.m, eps, reg.k) + f.m;
  Real worst = norm_inf(ru);
  for (std::size_t j = 0; j < s.m.size(); ++j) worst = std::max(worst, abs(std::min(s.m[j], rm[j])));
  return worst;
}

template <class Real>
std::pair<StatePair<Real>, SolveReport> picard_solve(const MFGProblem<Real>& pb, const RegParams& reg,
                                                     const StatePair<Real>& s0, const PicardOptions& opt = {}) {
  reg.validate();
  opt.validate();
  require_nonnegative(s0.m, "picard_solve");
  const auto& g = pb.grid();
  const std::size_t n = g.size();
  Vector<Real> x = flatten(s0);
  std::vector<std::size_t> active;
  auto rep = damped_fixed_point<Real>(
      [&](const Vector<Real>& v) { return flatten(picard_map(pb, reg, unflatten(g, v), opt.kkt_tol, &active)); },
      [&](const Vector<Real>& v) { return to_double(vi_system_residual(pb, reg, unflatten(g, v))); },
      [&](Vector<Real>& v) {
        for (std::size_t i = 0; i < n; ++i) v[i] = std::max(Real(0), v[i]);  // keep m in the cone
      },
      x, opt);
  auto sol = unflatten(g, x);
  rep.minM = to_double(min_value(sol.m));
  return {std::move(sol), rep};
}

// ---------------------------------------------------------------------------
// Jacobian of the lambda family

template <class Real>
StatePair<Real> jacobian_apply(const MFGProblem<Real>& pb, const RegParams& reg, const Real& lambda,
                               const StatePair<Real>& s, const StatePair<Real>& dir) {
  reg.validate();
  bool penalized = reg.variant == RegVariant::penalized;
  if (penalized) require_positive(s.m, "jacobian_apply");
  const auto& g = pb.grid();
  int d = g.dim();
  const auto& ham = pb.hamiltonian();
  auto Du = gradient(s.u);
  auto Dv = gradient(dir.u);
  auto hf = eval_hamiltonian(ham, Du);
  auto hv = apply_hessian(ham, Du, Dv);
  GridVectorField<Real> flux(g);
  for (int a = 0; a < d; ++a) flux[a] = hadamard(dir.m, hf.DpH[a]) + hadamard(s.m, hv[a]);
  auto dflux = divergence(flux);
  PenaltySpec pen = reg.penalty(d);
  Real nu(pb.nu());
  GridField<Real> lap_v(g), lap_w(g);
  if (pb.nu() != 0.0) {
    lap_v = laplacian(dir.u);
    lap_w = laplacian(dir.m);
  }
  StatePair<Real> e(g);
  for (std::size_t j = 0; j < g.size(); ++j) {
    Real pdv = 0;
    for (int a = 0; a < d; ++a) pdv += hf.DpH[a][j] * Dv[a][j];
    Real diag = lambda * pb.coupling().dg(s.m[j]);
    if (penalized) diag += pen.eval(s.m[j]).dp;
    e.m[j] = -dir.u[j] - lambda * pdv + diag * dir.m[j] + lambda * nu * lap_v[j];
    e.u[j] = dir.m[j] - lambda * dflux[j] - lambda * nu * lap_w[j];
  }
  Real eps(reg.eps);
  e.m += apply_reg(dir.m, eps, reg.k);
  e.u += apply_reg(dir.u, eps, reg.k);
  return e;
}

/// Residual of the operator the continuation drives to zero.
template <class Real>
StatePair<Real> family_residual(const MFGProblem<Real>& pb, const RegParams& reg, const Real& lambda,
                                const StatePair<Real>& s) {
  if (reg.variant == RegVariant::penalized) return apply_F_eps_lambda(pb, reg, lambda, s);
  return apply_F_eps(pb, reg, s);
}

// ---------------------------------------------------------------------------
// Newton continuation

enum class Preconditioner { reg_inverse, frozen_block };

struct NewtonOptions {
  double tol = 1e-9;
  double path_tol = 1e-7;  // tolerance at intermediate lambda
  int max_iter = 40;
  bool line_search = true;
  Preconditioner preconditioner = Preconditioner::frozen_block;
  GmresOptions gmres{};
};

struct ContinuationOptions {
  double initial_step = 0.1;
  double min_step = 1e-4;
  double max_step = 0.5;
  NewtonOptions newton{};
};

/// Constant root at lambda = 0: m = 1 - eps c, u = c with
/// -c + p_eps(1 - eps c) + eps (1 - eps c) = 0.
template <class Real>
StatePair<Real> lambda_zero_state(const TorusGrid& g, const RegParams& reg) {
  Real eps(reg.eps);
  Real c = eps / (1 + eps * eps);
  if (!(1 - eps * c >= eps)) {
    // Strictly decreasing in c on (-inf, 1/eps): bisection.
    PenaltySpec pen = reg.penalty(g.dim());
    auto i = [&](const Real& cc) { return -cc + pen.eval(1 - eps * cc).p + eps * (1 - eps * cc); };
    Real lo = -1, hi = 1 / eps;
    while (i(lo) < 0) lo *= 2;
    hi -= (hi - lo) * Real(1e-30);
    using std::abs;
    for (int it = 0; it < 400 && hi - lo > Real(1e-32) * (1 + abs(hi)); ++it) {
      Real mid = (lo + hi) / 2;
      if (i(mid) > 0)
        lo = mid;
      else
        hi = mid;
    }
    c = (lo + hi) / 2;
  }
  return StatePair<Real>(GridField<Real>(g, 1 - eps * c), GridField<Real>(g, c));
}

namespace detail {

/// Per-mode 2x2 inverse of the Jacobian with coefficients frozen at their means.
template <class Real>
class FrozenBlock {
 public:
  FrozenBlock(const MFGProblem<Real>& pb, const RegParams& reg, const Real& lambda, const StatePair<Real>& s,
              bool coefficients)
      : grid_(pb.grid()), eps_(reg.eps), k_(reg.k), lambda_(lambda), nu_(pb.nu()), use_(coefficients) {
    if (!use_) return;
    int d = grid_.dim();
    auto Du = gradient(s.u);
    const auto& ham = pb.hamiltonian();
    PenaltySpec pen = reg.penalty(d);
    Real inv = Real(1) / Real(grid_.size());
    for (std::size_t j = 0; j < grid_.size(); ++j) {
      Vec2<Real> p{Du[0][j], d == 2 ? Du[1][j] : Real(0)};
      auto v = ham.eval(p, d);
      Real diag = lambda * pb.coupling().dg(s.m[j]);
      if (reg.variant == RegVariant::penalized) diag += pen.eval(s.m[j]).dp;
      a_ += diag * inv;
      for (int i = 0; i < d; ++i) {
        b_[i] += v.DpH[i] * inv;
        for (int l = 0; l < d; ++l) C_[i][l] += s.m[j] * v.D2H[i][l] * inv;
      }
    }
  }

  Vector<Real> operator()(const Vector<Real>& r) const {
    using C = std::complex<Real>;
    std::size_t n = grid_.size();
    GridField<Real> r1(grid_, Vector<Real>(r.begin(), r.begin() + std::ptrdiff_t(n)));
    GridField<Real> r2(grid_, Vector<Real>(r.begin() + std::ptrdiff_t(n), r.end()));
    auto s1 = spectral::transform(r1);
    auto s2 = spectral::transform(r2);
    int d = grid_.dim();
    for (std::size_t j = 0; j < n; ++j) {
      auto xi = grid_.frequencies(j);
      Real R = reg_symbol(grid_, xi, eps_, k_);
      if (!use_) {
        s1[j] /= R;
        s2[j] /= R;
        continue;
      }
      Real kb = 0, kCk = 0, k2 = spectral::neg_laplacian_symbol<Real>(grid_, xi);
      Vec2<Real> kap{Real(0), Real(0)};
      for (int a = 0; a < d; ++a) kap[a] = spectral::derivative_symbol<Real>(grid_, xi, a).imag();
      for (int a = 0; a < d; ++a) {
        kb += kap[a] * b_[a];
        for (int l = 0; l < d; ++l) kCk += kap[a] * C_[a][l] * kap[l];
      }
      Real lnu = lambda_ * Real(nu_) * k2;
      C p11(a_ + R, 0), p12(-1 - lnu, -lambda_ * kb), p21(1 + lnu, -lambda_ * kb), p22(R + lambda_ * kCk, 0);
      C det = p11 * p22 - p12 * p21;
      C x1 = (p22 * s1[j] - p12 * s2[j]) / det;
      C x2 = (p11 * s2[j] - p21 * s1[j]) / det;
      s1[j] = x1;
      s2[j] = x2;
    }
    auto w = spectral::inverse(grid_, s1).values();
    auto v = spectral::inverse(grid_, s2).values();
    w.insert(w.end(), v.begin(), v.end());
    return w;
  }

 private:
  TorusGrid grid_;
  Real eps_;
  int k_;
  Real lambda_;
  double nu_;
  bool use_;
  Real a_ = 0;
  Vec2<Real> b_{Real(0), Real(0)};
  Mat2<Real> C_{{{Real(0), Real(0)}, {Real(0), Real(0)}}};
};

}  // namespace detail

struct NewtonResult {
  bool converged = false;
  int iterations = 0;
  int linear_iterations = 0;
  double residual = 0;
  std::string message;
};

/// Newton's method on the family at fixed lambda, starting from (and updating) s.
template <class Real>
NewtonResult newton_solve(const MFGProblem<Real>& pb, const RegParams& reg, const Real& lambda, StatePair<Real>& s,
                          double tol, const NewtonOptions& opt, std::vector<double>* history = nullptr) {
  NewtonResult out;
  const auto& g = pb.grid();
  bool penalized = reg.variant == RegVariant::penalized;
  auto F = family_residual(pb, reg, lambda, s);
  Real fn = norm_inf(F);
  for (int it = 0; it < opt.max_iter; ++it) {
    out.residual = to_double(fn);
    if (history) history->push_back(out.residual);
    if (out.residual <= tol) {
      out.converged = true;
      return out;
    }
    ++out.iterations;
    detail::FrozenBlock<Real> P(pb, reg, lambda, s, opt.preconditioner == Preconditioner::frozen_block);
    auto A = [&](const Vector<Real>& x) { return flatten(jacobian_apply(pb, reg, lambda, s, unflatten(g, x))); };
    Vector<Real> rhs = flatten(F);
    for (auto& v : rhs) v = -v;
    Vector<Real> dx(rhs.size(), Real(0));
    GmresOptions go = opt.gmres;
    // Inexact Newton: ask for a few digits past the target.
    go.abs_tol = std::max(go.abs_tol, tol * 1e-3);
    auto gr = gmres<Real>(A, P, rhs, dx, go);
    out.linear_iterations += gr.iterations;
    auto step = unflatten(g, dx);
    Real alpha = 1;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      StatePair<Real> trial = s + alpha * step;
      bool positive = !penalized || min_value(trial.m) > 0;
      if (positive) {
        auto Ft = family_residual(pb, reg, lambda, trial);
        Real ft = norm_inf(Ft);
        if (!opt.line_search || ft <= (1 - Real(1e-4) * alpha) * fn) {
          s = std::move(trial);
          F = std::move(Ft);
          fn = ft;
          accepted = true;
          break;
        }
      }
      alpha /= 2;
    }
    if (!accepted) {
      out.message = "line search failed";
      out.residual = to_double(fn);
      return out;
    }
  }
  out.residual = to_double(fn);
  out.converged = out.residual <= tol;
  if (!out.converged) out.message = "Newton iteration cap";
  return out;
}

template <class Real>
std::pair<StatePair<Real>, SolveReport> continuation_solve(const MFGProblem<Real>& pb, const RegParams& reg,
                                                           const ContinuationOptions& opt = {}) {
  auto t0 = std::chrono::steady_clock::now();
  reg.validate();
  if (reg.variant != RegVariant::penalized) throw ValidationError("continuation: needs the penalized variant");
  SolveReport rep;
  StatePair<Real> s = lambda_zero_state<Real>(pb.grid(), reg);
  auto r0 = newton_solve(pb, reg, Real(0), s, opt.newton.path_tol, opt.newton, &rep.residualHistory);
  rep.iterations += r0.iterations;
  rep.lambdaPath.emplace_back(0.0, r0.iterations);
  double lambda = 0, step = opt.initial_step;
  while (lambda < 1) {
    double target = std::min(1.0, lambda + step);
    double tol = target == 1.0 ? opt.newton.tol : opt.newton.path_tol;
    StatePair<Real> trial = s;
    NewtonResult nr;
    try {
      nr = newton_solve(pb, reg, Real(target), trial, tol, opt.newton, &rep.residualHistory);
    } catch (const DomainError& e) {
      nr.converged = false;
      nr.message = e.what();
    }
    rep.iterations += nr.iterations;
    if (nr.converged) {
      s = std::move(trial);
      lambda = target;
      rep.lambdaPath.emplace_back(lambda, nr.iterations);
      if (nr.iterations <= 4) step = std::min(opt.max_step, 2 * step);
    } else {
      step /= 2;
      if (step < opt.min_step) {
        rep.status = SolveStatus::domainFailure;
        rep.message = "lambda step underflow at lambda = " + std::to_string(lambda) + " (" + nr.message + ")";
        break;
      }
    }
  }
  if (lambda >= 1) rep.status = SolveStatus::converged;
  rep.finalResidual = to_double(norm_inf(apply_F_eps_lambda(pb, reg, Real(lambda), s)));
  rep.minM = to_double(min_value(s.m));
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(s), rep};
}

/// Newton at lambda = 1 from a given state; used to warm-start sweeps.
template <class Real>
std::pair<StatePair<Real>, SolveReport> newton_at_target(const MFGProblem<Real>& pb, const RegParams& reg,
                                                         StatePair<Real> s, const NewtonOptions& opt = {}) {
  auto t0 = std::chrono::steady_clock::now();
  SolveReport rep;
  NewtonResult nr;
  try {
    nr = newton_solve(pb, reg, Real(1), s, opt.tol, opt, &rep.residualHistory);
  } catch (const DomainError& e) {
    nr.message = e.what();
  }
  rep.iterations = nr.iterations;
  rep.lambdaPath.emplace_back(1.0, nr.iterations);
  rep.status = nr.converged ? SolveStatus::converged : SolveStatus::maxIter;
  rep.message = nr.message;
  rep.finalResidual = nr.residual;
  rep.minM = to_double(min_value(s.m));
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(s), rep};
}

}  // namespace mmfg
