#pragma once

// The linear transport model F(u) = u - b.Du - f with div b = 0, its
// regularization F_eps(u) = F(u) + eps (u + Lap^2 u), a per-mode oracle for
// constant b, and three solvers for F_eps(u) = 0.

#include "mmfg/solvers/anderson.hpp"
#include "mmfg/solvers/linear.hpp"
#include "mmfg/solvers/stationary.hpp"

#include <chrono>
#include <optional>

namespace mmfg {

template <class Real>
class LinProblem {
 public:
  LinProblem(GridVectorField<Real> b, GridField<Real> f) : b_(std::move(b)), f_(std::move(f)) {
    if (!(b_.grid() == f_.grid())) throw ValidationError("linmodel: b and f on different grids");
    f_.require_finite("linmodel.f");
    for (int a = 0; a < b_.grid().dim(); ++a) b_[a].require_finite("linmodel.b");
    if (norm_inf(f_) == 0) throw ValidationError("linmodel: f must not vanish identically");
    Real scale = 1;
    for (int a = 0; a < b_.grid().dim(); ++a) scale = std::max(scale, norm_inf(b_[a]));
    if (norm_inf(divergence(b_)) > Real(1e-12) * scale) throw ValidationError("linmodel: b must be divergence free");
  }

  const TorusGrid& grid() const { return f_.grid(); }
  const GridVectorField<Real>& b() const { return b_; }
  const GridField<Real>& f() const { return f_; }

  /// The constant value of b, if b is spatially constant.
  std::optional<Vec2<Real>> constant_b() const {
    using std::abs;
    Vec2<Real> c{Real(0), Real(0)};
    for (int a = 0; a < grid().dim(); ++a) {
      c[a] = b_[a][0];
      for (std::size_t j = 0; j < grid().size(); ++j)
        if (abs(b_[a][j] - c[a]) > Real(1e-14) * (1 + abs(c[a]))) return std::nullopt;
    }
    return c;
  }

 private:
  GridVectorField<Real> b_;
  GridField<Real> f_;
};

/// The regularizer of the linear model is eps (I + Lap^2).
inline constexpr int kLinRegOrder = 1;

/// u - b.Du - lambda f, plus eps (u + Lap^2 u) when eps is given.
template <class Real>
GridField<Real> lin_apply(const LinProblem<Real>& pb, const GridField<Real>& u, std::optional<double> eps = {},
                          const Real& lambda = Real(1)) {
  u.require_finite("lin_apply");
  auto Du = gradient(u);
  GridField<Real> out = u;
  for (int a = 0; a < pb.grid().dim(); ++a) out -= hadamard(pb.b()[a], Du[a]);
  out -= pb.f() * lambda;
  if (eps) out += apply_reg(u, Real(*eps), kLinRegOrder);
  return out;
}

/// Exact root of F or F_eps for constant b, by per-mode division.
template <class Real>
GridField<Real> lin_oracle(const LinProblem<Real>& pb, std::optional<double> eps = {}) {
  auto bc = pb.constant_b();
  if (!bc) throw ValidationError("lin_oracle: needs spatially constant b");
  if (eps && !(*eps > 0.0)) throw ValidationError("lin_oracle: epsilon must be positive");
  const auto& g = pb.grid();
  return spectral::apply(pb.f(), [&](const std::array<int, 2>& xi) {
    std::complex<Real> den(1, 0);
    for (int a = 0; a < g.dim(); ++a) den -= (*bc)[std::size_t(a)] * spectral::derivative_symbol<Real>(g, xi, a);
    if (eps) den += reg_symbol(g, xi, Real(*eps), kLinRegOrder);
    return std::complex<Real>(1, 0) / den;
  });
}

enum class LinMethod { variational, bilinear, continuation };

inline const char* to_string(LinMethod m) {
  switch (m) {
    case LinMethod::variational: return "variational";
    case LinMethod::bilinear: return "bilinear";
    case LinMethod::continuation: return "continuation";
  }
  return "unknown";
}

struct LinSolveOptions {
  double tol = 1e-12;
  int max_iter = 20000;
  int anderson_depth = 10;  // variational method only
  int lambda_steps = 4;     // continuation method only
};

namespace detail {

template <class Real>
Real lin_residual(const LinProblem<Real>& pb, const GridField<Real>& u, double eps) {
  return norm_inf(lin_apply(pb, u, eps));
}

/// GMRES on (1 + eps R) u - b.Du = lambda f, preconditioned by the symmetric part.
template <class Real>
GmresResult lin_gmres(const LinProblem<Real>& pb, double eps, const Real& lambda, GridField<Real>& u, double tol,
                      int max_iter) {
  const auto& g = pb.grid();
  auto A = [&](const Vector<Real>& x) {
    GridField<Real> v(g, x);
    auto r = lin_apply(pb, v, eps, Real(0));
    return r.values();
  };
  auto M = [&](const Vector<Real>& x) {
    return spectral::apply(GridField<Real>(g, x), [&](const std::array<int, 2>& xi) {
             return Real(1) / (1 + reg_symbol(g, xi, Real(eps), kLinRegOrder));
           }).values();
  };
  GridField<Real> rhs = pb.f() * lambda;
  GmresOptions go;
  go.rel_tol = 0;
  go.abs_tol = tol;
  go.max_iter = max_iter;
  auto x = u.values();
  auto res = gmres<Real>(A, M, rhs.values(), x, go);
  u = GridField<Real>(g, std::move(x));
  return res;
}

}  // namespace detail

template <class Real>
std::pair<GridField<Real>, SolveReport> lin_solve(const LinProblem<Real>& pb, double eps, LinMethod method,
                                                  const LinSolveOptions& opt = {}) {
  auto t0 = std::chrono::steady_clock::now();
  if (!(eps > 0.0)) throw ValidationError("lin_solve: epsilon must be positive");
  if (!(opt.tol > 0.0)) throw ValidationError("lin_solve: tolerance must be positive");
  const auto& g = pb.grid();
  SolveReport rep;
  GridField<Real> u(g);
  switch (method) {
    case LinMethod::variational: {
      // u <- (1 - theta) u + theta argmin G_u, with argmin G_u = -(eps R)^{-1} F(u).
      // theta = eps / (1 + eps) annihilates the mean mode of the error.
      Real theta = Real(eps) / (1 + Real(eps));
      AndersonMixer<Real> mixer(opt.anderson_depth);
      for (int it = 0; it < opt.max_iter; ++it) {
        Real res = detail::lin_residual(pb, u, eps);
        rep.residualHistory.push_back(to_double(res));
        if (res <= Real(opt.tol)) {
          rep.status = SolveStatus::converged;
          break;
        }
        ++rep.iterations;
        auto Gu = solve_reg_linear(lin_apply(pb, u), Real(eps), kLinRegOrder);
        Gu *= Real(-1);
        Vector<Real> x = u.values(), f = (Gu - u).values();
        u = GridField<Real>(g, mixer.next(x, f, theta));
      }
      break;
    }
    case LinMethod::bilinear: {
      auto r = detail::lin_gmres(pb, eps, Real(1), u, opt.tol, opt.max_iter);
      rep.iterations = r.iterations;
      rep.residualHistory.push_back(r.residual);
      break;
    }
    case LinMethod::continuation: {
      // lambda f path; each step is one Newton (here: linear) solve from the previous state.
      int steps = std::max(1, opt.lambda_steps);
      for (int i = 1; i <= steps; ++i) {
        Real lambda = Real(i) / Real(steps);
        auto r = detail::lin_gmres(pb, eps, lambda, u, opt.tol, opt.max_iter);
        rep.iterations += r.iterations;
        rep.lambdaPath.emplace_back(to_double(lambda), r.iterations);
        rep.residualHistory.push_back(r.residual);
      }
      break;
    }
  }
  rep.finalResidual = to_double(detail::lin_residual(pb, u, eps));
  rep.status = rep.finalResidual <= opt.tol ? SolveStatus::converged : SolveStatus::maxIter;
  rep.minM = 0;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(u), rep};
}

}  // namespace mmfg
