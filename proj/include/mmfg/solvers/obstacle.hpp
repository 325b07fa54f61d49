#pragma once

// Nonnegativity-constrained quadratic minimization
//
//   min  1/2 <K w, w>_W + <f, w>_W   over w >= 0,
//
// with K self-adjoint and positive definite in the weighted pairing
// <a, b>_W = sum_j W_j a_j b_j. The KKT conditions are w >= 0, r = K w + f >= 0
// and r_j w_j = 0. The operator type supplies
//
//   size(), weights(), apply(w) = K w, solve(b) = K^{-1} b,
//   inverse_column(j) = K^{-1} e_j.
//
// K^{-1} e_j / W_j is symmetric in (i, j), which is what the active-set
// Schur systems factor. The main method is a dual active-set iteration; a
// primal active-set method from a feasible point backs it up.

#include "mmfg/grid.hpp"
#include "mmfg/solvers/linear.hpp"

#include <Eigen/Dense>
#include <boost/multiprecision/eigen.hpp>

#include <algorithm>
#include <limits>
#include <memory>
#include <vector>

namespace mmfg {

enum class SolveStatus { converged, maxIter, domainFailure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::maxIter: return "maxIter";
    case SolveStatus::domainFailure: return "domainFailure";
  }
  return "unknown";
}

template <class Real>
struct ObstacleResult {
  Vector<Real> w;
  Vector<Real> r;          // K w + f
  Real complementarity = 0;  // <r, w>_W
  Real minR = 0;
  Real minW = 0;
  int iterations = 0;
  int active = 0;
  std::vector<std::size_t> activeSet;  // nodes with w = 0, usable as the next hint
  bool used_fallback = false;
  SolveStatus status = SolveStatus::maxIter;
};

struct ObstacleOptions {
  double kkt_tol = 1e-9;
  int max_dual = 4000;
  int max_primal = 4000;
};

namespace detail {

template <class Real>
using DenseMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
template <class Real>
using DenseVector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

/// Caches columns of the symmetric matrix S_ij = (K^{-1})_ij / W_j.
template <class Real, class Op>
class SchurCache {
 public:
  explicit SchurCache(const Op& op) : op_(op), cols_(op.size()) {}

  const Vector<Real>& column(std::size_t j) {
    if (cols_[j].empty()) {
      cols_[j] = op_.inverse_column(j);
      Real wj = op_.weights()[j];
      for (auto& v : cols_[j]) v /= wj;
    }
    return cols_[j];
  }

  /// Minimizer with w_A = 0 on the given set and K w + f = 0 off it.
  /// Returns w (exact zeros on A). The Schur system on A can be badly
  /// conditioned when A covers whole smooth regions, so the free-node
  /// residual is driven down by iterative refinement with the same factors.
  Vector<Real> solve(const std::vector<std::size_t>& A, const Vector<Real>& f, const Vector<Real>& Gf) {
    using std::abs;
    const std::size_t n = op_.size();
    std::unique_ptr<Eigen::LDLT<DenseMatrix<Real>>> ldlt;
    if (!A.empty()) {
      const std::size_t a = A.size();
      DenseMatrix<Real> S(a, a);
      for (std::size_t q = 0; q < a; ++q) {
        const auto& col = column(A[q]);
        for (std::size_t p = 0; p < a; ++p) S(p, q) = col[A[p]];
      }
      ldlt = std::make_unique<Eigen::LDLT<DenseMatrix<Real>>>(S);
    }
    std::vector<char> on_a(n, 0);
    for (auto j : A) on_a[j] = 1;
    Real scale = 0;
    for (const auto& v : f) scale = std::max<Real>(scale, abs(v));
    Vector<Real> w = solve_once(A, ldlt.get(), f, Gf);
    Real prev = std::numeric_limits<Real>::infinity();
    for (int pass = 0; pass < 4; ++pass) {
      Vector<Real> r = op_.apply(w);
      Real worst = 0;
      for (std::size_t j = 0; j < n; ++j) {
        r[j] = on_a[j] ? Real(0) : r[j] + f[j];
        worst = std::max<Real>(worst, abs(r[j]));
      }
      if (worst <= Real(1e-30) * scale || !(worst < prev / 2)) break;
      prev = worst;
      Vector<Real> d = solve_once(A, ldlt.get(), r, op_.solve(r));
      for (std::size_t j = 0; j < n; ++j) w[j] += d[j];
    }
    return w;
  }

 private:
  Vector<Real> solve_once(const std::vector<std::size_t>& A, const Eigen::LDLT<DenseMatrix<Real>>* ldlt,
                          const Vector<Real>& f, const Vector<Real>& Gf) {
    const std::size_t n = op_.size();
    Vector<Real> rhs(n);
    for (std::size_t i = 0; i < n; ++i) rhs[i] = -f[i];
    if (!A.empty()) {
      DenseVector<Real> b(A.size());
      for (std::size_t q = 0; q < A.size(); ++q) b(q) = Gf[A[q]];
      DenseVector<Real> y = ldlt->solve(b);
      const auto& W = op_.weights();
      for (std::size_t q = 0; q < A.size(); ++q) rhs[A[q]] += y(q) / W[A[q]];
    }
    Vector<Real> w = op_.solve(rhs);
    for (auto j : A) w[j] = 0;
    return w;
  }

  const Op& op_;
  std::vector<Vector<Real>> cols_;
};

template <class Real, class Op>
void finish_kkt(const Op& op, const Vector<Real>& f, ObstacleResult<Real>& out, double tol) {
  out.r = op.apply(out.w);
  const auto& W = op.weights();
  out.complementarity = 0;
  for (std::size_t j = 0; j < out.w.size(); ++j) out.r[j] += f[j];
  out.minR = out.r.empty() ? Real(0) : out.r[0];
  out.minW = out.w.empty() ? Real(0) : out.w[0];
  out.active = 0;
  out.activeSet.clear();
  for (std::size_t j = 0; j < out.w.size(); ++j) {
    out.complementarity += W[j] * out.r[j] * out.w[j];
    out.minR = std::min(out.minR, out.r[j]);
    out.minW = std::min(out.minW, out.w[j]);
    if (out.w[j] == 0) {
      ++out.active;
      out.activeSet.push_back(j);
    }
  }
  // Rounding in K w + f grows with |w|, so the tolerance is relative to max(1, |w|).
  using std::abs;
  Real scale = 1;
  for (const auto& v : out.w) scale = std::max<Real>(scale, abs(v));
  bool ok = out.minW >= 0 && out.minR >= -Real(tol) * scale && abs(out.complementarity) <= Real(tol) * scale * scale;
  out.status = ok ? SolveStatus::converged : SolveStatus::maxIter;
}

}  // namespace detail

template <class Real, class Op>
ObstacleResult<Real> solve_obstacle_qp(const Op& op, const Vector<Real>& f, const ObstacleOptions& opt = {},
                                       const std::vector<std::size_t>* hint = nullptr) {
  const std::size_t n = op.size();
  if (f.size() != n) throw ValidationError("obstacle: right-hand side has wrong size");
  for (std::size_t j = 0; j < n; ++j)
    if (!is_finite(f[j])) throw ValidationError("obstacle: non-finite data at node " + std::to_string(j));

  ObstacleResult<Real> out;
  if (std::all_of(f.begin(), f.end(), [](const Real& v) { return v >= 0; })) {
    out.w.assign(n, Real(0));
    detail::finish_kkt(op, f, out, opt.kkt_tol);
    if (out.status == SolveStatus::converged) return out;
  }
  detail::SchurCache<Real, Op> schur(op);
  Vector<Real> Gf = op.solve(f);
  const auto& W = op.weights();

  // Projected unconstrained minimizer.
  Vector<Real> w(n);
  for (std::size_t j = 0; j < n; ++j) w[j] = std::max(Real(0), -Gf[j]);
  bool interior = std::all_of(Gf.begin(), Gf.end(), [](const Real& v) { return v <= 0; });
  if (interior) {
    for (std::size_t j = 0; j < n; ++j) w[j] = -Gf[j];
    out.w = w;
    detail::finish_kkt(op, f, out, opt.kkt_tol);
    if (out.status == SolveStatus::converged) return out;
  }

  // Dual active set (Goldfarb-Idnani): start from the unconstrained minimizer
  // and add the most violated bound, dropping bounds whose multipliers would
  // turn negative. Only columns of K^{-1} are needed, which stay well scaled
  // when K itself has a huge norm. Multipliers are in the unweighted pairing,
  // where the Hessian inverse is S_ij = (K^{-1} e_j)_i / W_j.
  std::vector<std::size_t> A;
  std::vector<Real> lam;
  if (hint && !hint->empty()) {
    // Warm start: keep the hinted bounds whose multipliers W_j r_j are
    // nonnegative, so the start is dual feasible.
    std::vector<char> seen(n, 0);
    for (auto j : *hint)
      if (j < n && !seen[j]) {
        seen[j] = 1;
        A.push_back(j);
      }
    while (!A.empty()) {
      w = schur.solve(A, f, Gf);
      Vector<Real> r = op.apply(w);
      std::ptrdiff_t worst = -1;
      for (std::size_t q = 0; q < A.size(); ++q) {
        Real mu = W[A[q]] * (r[A[q]] + f[A[q]]);
        if (mu < 0 && (worst < 0 || mu < W[A[std::size_t(worst)]] * (r[A[std::size_t(worst)]] + f[A[std::size_t(worst)]])))
          worst = std::ptrdiff_t(q);
      }
      if (worst < 0) {
        for (auto j : A) lam.push_back(W[j] * (r[j] + f[j]));
        break;
      }
      A.erase(A.begin() + worst);
    }
  }
  bool dual_ok = true;
  for (int outer = 0; outer < opt.max_dual && dual_ok; ++outer) {
    w = schur.solve(A, f, Gf);
    std::vector<char> on_a(n, 0);
    for (auto j : A) on_a[j] = 1;
    std::ptrdiff_t p = -1;
    for (std::size_t j = 0; j < n; ++j)
      if (!on_a[j] && w[j] < 0 && (p < 0 || w[j] < w[std::size_t(p)])) p = std::ptrdiff_t(j);
    if (p < 0) {
      out.w = w;
      detail::finish_kkt(op, f, out, opt.kkt_tol);
      if (out.status == SolveStatus::converged) return out;
      break;
    }
    const std::size_t pp = std::size_t(p);
    Real wp = w[pp];
    Real lp = 0;
    for (;;) {
      ++out.iterations;
      const std::size_t a = A.size();
      const auto& colp = schur.column(pp);
      detail::DenseVector<Real> x = detail::DenseVector<Real>::Zero(Eigen::Index(a));
      if (a > 0) {
        detail::DenseMatrix<Real> S(a, a);
        detail::DenseVector<Real> sp(a);
        for (std::size_t q = 0; q < a; ++q) {
          const auto& col = schur.column(A[q]);
          for (std::size_t r = 0; r < a; ++r) S(r, q) = col[A[r]];
          sp(q) = colp[A[q]];
        }
        x = S.ldlt().solve(sp);
      }
      Real sch = colp[pp];
      for (std::size_t q = 0; q < a; ++q) sch -= colp[A[q]] * x(q);
      if (!(sch > 0)) {
        dual_ok = false;
        break;
      }
      Real t_full = -wp / sch;
      Real t_part = std::numeric_limits<Real>::infinity();
      std::ptrdiff_t drop = -1;
      for (std::size_t q = 0; q < a; ++q)
        if (x(q) > 0 && lam[q] / x(q) < t_part) {
          t_part = lam[q] / x(q);
          drop = std::ptrdiff_t(q);
        }
      Real t = std::min(t_full, t_part);
      for (std::size_t q = 0; q < a; ++q) lam[q] -= t * x(q);
      lp += t;
      wp += t * sch;
      if (drop >= 0 && t_part < t_full) {
        A.erase(A.begin() + drop);
        lam.erase(lam.begin() + drop);
        continue;
      }
      A.push_back(pp);
      lam.push_back(lp);
      break;
    }
  }

  // Primal active-set fallback from a feasible point; finite termination.
  out.used_fallback = true;
  for (auto& v : w) v = std::max(Real(0), v);
  std::vector<char> in_w(n, 0);
  for (std::size_t j = 0; j < n; ++j) in_w[j] = w[j] == 0;
  for (int it = 0; it < opt.max_primal; ++it) {
    ++out.iterations;
    std::vector<std::size_t> act;
    for (std::size_t j = 0; j < n; ++j)
      if (in_w[j]) act.push_back(j);
    Vector<Real> cand = schur.solve(act, f, Gf);
    Real alpha = 1;
    std::ptrdiff_t block = -1;
    for (std::size_t j = 0; j < n; ++j) {
      if (!in_w[j] && cand[j] < 0) {
        Real a = w[j] / (w[j] - cand[j]);
        if (a < alpha) {
          alpha = a;
          block = std::ptrdiff_t(j);
        }
      }
    }
    for (std::size_t j = 0; j < n; ++j) w[j] += alpha * (cand[j] - w[j]);
    if (block >= 0) {
      w[std::size_t(block)] = 0;
      in_w[std::size_t(block)] = 1;
      continue;
    }
    // Full step: check multipliers on the working set.
    Vector<Real> r = op.apply(w);
    std::ptrdiff_t worst = -1;
    Real most = -Real(opt.kkt_tol) / 10;
    for (std::size_t j = 0; j < n; ++j) {
      r[j] += f[j];
      if (in_w[j] && r[j] < most) {
        most = r[j];
        worst = std::ptrdiff_t(j);
      }
    }
    if (worst < 0) break;
    in_w[std::size_t(worst)] = 0;
  }
  for (auto& v : w) v = std::max(Real(0), v);
  out.w = w;
  detail::finish_kkt(op, f, out, opt.kkt_tol);
  return out;
}

/// eps (I + Lap^{2k}) on a torus grid, nodal form with uniform weights h^d.
template <class Real>
class RegObstacleOperator {
 public:
  RegObstacleOperator(const TorusGrid& grid, const Real& eps, int k)
      : grid_(grid), eps_(eps), k_(k), weights_(grid.size(), grid.cell_volume<Real>()) {
    GridField<Real> e0(grid);
    e0[0] = 1;
    kernel_ = solve_reg_linear(e0, eps_, k_).values();
  }

  std::size_t size() const { return grid_.size(); }
  const Vector<Real>& weights() const { return weights_; }
  Vector<Real> apply(const Vector<Real>& w) const {
    return apply_reg(GridField<Real>(grid_, w), eps_, k_).values();
  }
  Vector<Real> solve(const Vector<Real>& b) const {
    return solve_reg_linear(GridField<Real>(grid_, b), eps_, k_).values();
  }
  /// The inverse is a convolution, so columns are shifts of the first.
  Vector<Real> inverse_column(std::size_t j) const {
    Vector<Real> col(size());
    int n = grid_.n();
    auto jj = grid_.multi_index(j);
    for (std::size_t i = 0; i < size(); ++i) {
      auto ii = grid_.multi_index(i);
      int a = ((ii[0] - jj[0]) % n + n) % n;
      int b = grid_.dim() == 2 ? ((ii[1] - jj[1]) % n + n) % n : 0;
      col[i] = kernel_[grid_.dim() == 2 ? std::size_t(a) * std::size_t(n) + std::size_t(b) : std::size_t(a)];
    }
    return col;
  }

 private:
  TorusGrid grid_;
  Real eps_;
  int k_;
  Vector<Real> weights_;
  Vector<Real> kernel_;
};

template <class Real>
struct ObstacleSolution {
  GridField<Real> w;
  GridField<Real> kktResidual;  // eps (w + Lap^{2k} w) + f1
  Real complementarity = 0;
  Real minR = 0;
  int iterations = 0;
  bool used_fallback = false;
  std::vector<std::size_t> activeSet;
  SolveStatus status = SolveStatus::maxIter;
};

/// Minimizer of int eps/2 (w^2 + (Lap^k w)^2) + f1 w over w >= 0.
template <class Real>
ObstacleSolution<Real> solve_obstacle(const GridField<Real>& f1, const Real& eps, int k, double kkt_tol = 1e-9,
                                      const std::vector<std::size_t>* hint = nullptr) {
  if (!(eps > 0)) throw ValidationError("solve_obstacle: epsilon must be positive");
  f1.require_finite("solve_obstacle");
  RegObstacleOperator<Real> op(f1.grid(), eps, k);
  ObstacleOptions opt;
  opt.kkt_tol = kkt_tol;
  auto r = solve_obstacle_qp(op, f1.values(), opt, hint);
  ObstacleSolution<Real> out{GridField<Real>(f1.grid(), r.w), GridField<Real>(f1.grid(), r.r)};
  out.complementarity = r.complementarity;
  out.minR = r.minR;
  out.iterations = r.iterations;
  out.used_fallback = r.used_fallback;
  out.activeSet = std::move(r.activeSet);
  out.status = r.status;
  return out;
}

}  // namespace mmfg
