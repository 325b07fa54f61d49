#pragma once

// Diagonal solve of eps (I + Lap^{2k}) and a restarted, right-preconditioned
// GMRES on flat vectors.

#include "mmfg/grid.hpp"

#include <functional>
#include <vector>

namespace mmfg {

/// The unique u with eps (u + Lap^{2k} u) = rhs.
template <class Real>
GridField<Real> solve_reg_linear(const GridField<Real>& rhs, const Real& eps, int k) {
  if (!(eps > 0)) throw ValidationError("solve_reg_linear: epsilon must be positive");
  if (k < 1) throw ValidationError("solve_reg_linear: order k must be >= 1");
  rhs.require_finite("solve_reg_linear");
  const auto& grid = rhs.grid();
  return spectral::apply(rhs, [&](const std::array<int, 2>& xi) { return Real(1) / reg_symbol(grid, xi, eps, k); });
}

template <class Real>
using Vector = std::vector<Real>;

struct GmresOptions {
  int restart = 80;
  int max_iter = 2000;
  double rel_tol = 1e-12;
  double abs_tol = 0.0;
};

struct GmresResult {
  int iterations = 0;
  double residual = 0;  // final true residual norm
  bool converged = false;
};

namespace detail {

template <class Real>
Real dot(const Vector<Real>& a, const Vector<Real>& b) {
  Real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <class Real>
Real norm2(const Vector<Real>& a) {
  using std::sqrt;
  return sqrt(dot(a, a));
}

template <class Real>
void axpy(const Real& alpha, const Vector<Real>& x, Vector<Real>& y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace detail

/// Solves A x = b with right preconditioning: A M^{-1} y = b, x = M^{-1} y.
/// `x` holds the initial guess on entry.
template <class Real>
GmresResult gmres(const std::function<Vector<Real>(const Vector<Real>&)>& A,
                  const std::function<Vector<Real>(const Vector<Real>&)>& Minv, const Vector<Real>& b,
                  Vector<Real>& x, const GmresOptions& opt) {
  using detail::axpy;
  using detail::dot;
  using detail::norm2;
  using std::abs;
  using std::sqrt;
  const std::size_t n = b.size();
  GmresResult res;
  Real bnorm = norm2(b);
  Real target = std::max(Real(opt.rel_tol) * bnorm, Real(opt.abs_tol));
  if (bnorm == 0) {
    std::fill(x.begin(), x.end(), Real(0));
    res.converged = true;
    return res;
  }
  int m = std::max(1, std::min<int>(opt.restart, int(n)));
  while (res.iterations < opt.max_iter) {
    Vector<Real> r = A(x);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
    Real beta = norm2(r);
    res.residual = static_cast<double>(beta);
    if (beta <= target) {
      res.converged = true;
      return res;
    }
    std::vector<Vector<Real>> V(1, r);
    for (auto& v : V[0]) v /= beta;
    std::vector<Vector<Real>> Z;
    std::vector<std::vector<Real>> H(m + 1, std::vector<Real>(m, Real(0)));
    std::vector<Real> cs(m), sn(m), g(m + 1, Real(0));
    g[0] = beta;
    int j = 0;
    for (; j < m && res.iterations < opt.max_iter; ++j) {
      ++res.iterations;
      Z.push_back(Minv(V[j]));
      Vector<Real> w = A(Z[j]);
      // Modified Gram-Schmidt, twice for stability.
      for (int pass = 0; pass < 2; ++pass) {
        for (int i = 0; i <= j; ++i) {
          Real h = dot(w, V[i]);
          H[i][j] += h;
          axpy(-h, V[i], w);
        }
      }
      Real hn = norm2(w);
      H[j + 1][j] = hn;
      for (int i = 0; i < j; ++i) {
        Real t = cs[i] * H[i][j] + sn[i] * H[i + 1][j];
        H[i + 1][j] = -sn[i] * H[i][j] + cs[i] * H[i + 1][j];
        H[i][j] = t;
      }
      Real den = sqrt(H[j][j] * H[j][j] + H[j + 1][j] * H[j + 1][j]);
      if (den == 0) {
        cs[j] = 1;
        sn[j] = 0;
      } else {
        cs[j] = H[j][j] / den;
        sn[j] = H[j + 1][j] / den;
      }
      H[j][j] = cs[j] * H[j][j] + sn[j] * H[j + 1][j];
      H[j + 1][j] = 0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];
      bool done = abs(g[j + 1]) <= target || hn == 0;
      if (!done) {
        V.push_back(w);
        for (auto& v : V.back()) v /= hn;
      }
      if (done) {
        ++j;
        break;
      }
    }
    // Back substitution and update.
    std::vector<Real> y(j, Real(0));
    for (int i = j - 1; i >= 0; --i) {
      Real s = g[i];
      for (int l = i + 1; l < j; ++l) s -= H[i][l] * y[l];
      y[i] = s / H[i][i];
    }
    for (int i = 0; i < j; ++i) axpy(y[i], Z[i], x);
  }
  Vector<Real> r = A(x);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
  res.residual = static_cast<double>(norm2(r));
  res.converged = norm2(r) <= target;
  return res;
}

}  // namespace mmfg
