#pragma once

// Time-dependent MFG on (0, T) x torus, regularized by the space-time form
//
//   Q(v1, v2) = eps (<v1, v2> + sum_{|beta| = 2k} <D_beta v1, D_beta v2>),
//
// with m(0) = m0 and u(T) = uT pinned. The time derivative is the
// second-order summation-by-parts first difference (one-sided at the two end
// nodes, central inside) and time integrals use the matching trapezoid
// weights, so <D a, b> + <a, D b> = a(T) b(T) - a(0) b(0) holds exactly.
// Inside Q the time derivatives of order j are built from the compact second
// difference, see form_time_differences.

#include "mmfg/monotone.hpp"
#include "mmfg/solvers/fixed_point.hpp"
#include "mmfg/solvers/obstacle.hpp"

#include <Eigen/Dense>
#include <boost/multiprecision/eigen.hpp>

#include <algorithm>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <vector>

namespace mmfg {

class SpaceTimeGrid {
 public:
  SpaceTimeGrid(int nt, TorusGrid space, double T = 1.0) : nt_(nt), space_(std::move(space)), T_(T) {
    if (nt_ < 8) throw ValidationError("space-time grid: need at least 8 time nodes");
    if (!(T_ > 0.0) || !std::isfinite(T_)) throw ValidationError("space-time grid: horizon must be positive");
  }

  int nt() const { return nt_; }
  const TorusGrid& space() const { return space_; }
  double horizon() const { return T_; }
  std::size_t size() const { return std::size_t(nt_) * space_.size(); }

  template <class Real>
  Real dt() const {
    return Real(T_) / Real(nt_ - 1);
  }
  template <class Real>
  Real time(int i) const {
    return Real(T_) * Real(i) / Real(nt_ - 1);
  }
  /// Trapezoid weight of time node i.
  template <class Real>
  Real time_weight(int i) const {
    return (i == 0 || i == nt_ - 1) ? dt<Real>() / 2 : dt<Real>();
  }

  bool operator==(const SpaceTimeGrid& o) const { return nt_ == o.nt_ && space_ == o.space_ && T_ == o.T_; }

 private:
  int nt_;
  TorusGrid space_;
  double T_;
};

template <class Real>
class SpaceTimeField {
 public:
  explicit SpaceTimeField(const SpaceTimeGrid& g, const Real& fill = Real(0)) : grid_(g), v_(g.size(), fill) {}
  SpaceTimeField(const SpaceTimeGrid& g, std::vector<Real> v) : grid_(g), v_(std::move(v)) {
    if (v_.size() != g.size()) throw ValidationError("space-time field: wrong number of values");
  }

  template <class Fn>
  static SpaceTimeField from_function(const SpaceTimeGrid& g, Fn&& fn) {
    SpaceTimeField f(g);
    const std::size_t n = g.space().size();
    for (int i = 0; i < g.nt(); ++i)
      for (std::size_t j = 0; j < n; ++j) f.at(i, j) = fn(g.template time<Real>(i), g.space().template coordinate<Real>(j));
    return f;
  }

  static SpaceTimeField constant_in_time(const SpaceTimeGrid& g, const GridField<Real>& s) {
    SpaceTimeField f(g);
    for (int i = 0; i < g.nt(); ++i) f.set_slice(i, s);
    return f;
  }

  const SpaceTimeGrid& grid() const { return grid_; }
  std::vector<Real>& values() { return v_; }
  const std::vector<Real>& values() const { return v_; }
  std::size_t size() const { return v_.size(); }
  Real& operator[](std::size_t j) { return v_[j]; }
  const Real& operator[](std::size_t j) const { return v_[j]; }
  Real& at(int i, std::size_t j) { return v_[std::size_t(i) * grid_.space().size() + j]; }
  const Real& at(int i, std::size_t j) const { return v_[std::size_t(i) * grid_.space().size() + j]; }

  GridField<Real> slice(int i) const {
    const std::size_t n = grid_.space().size();
    auto b = v_.begin() + std::ptrdiff_t(std::size_t(i) * n);
    return GridField<Real>(grid_.space(), std::vector<Real>(b, b + std::ptrdiff_t(n)));
  }
  void set_slice(int i, const GridField<Real>& s) {
    if (!(s.grid() == grid_.space())) throw ValidationError("space-time field: slice on wrong grid");
    std::copy(s.values().begin(), s.values().end(), v_.begin() + std::ptrdiff_t(std::size_t(i) * s.size()));
  }

  void check_same(const SpaceTimeField& o) const {
    if (!(grid_ == o.grid_)) throw ValidationError("space-time fields on different grids");
  }
  void require_finite(const char* who) const {
    for (std::size_t j = 0; j < v_.size(); ++j)
      if (!is_finite(v_[j])) throw ValidationError(std::string(who) + ": non-finite value at node " + std::to_string(j));
  }

  SpaceTimeField& operator+=(const SpaceTimeField& o) {
    check_same(o);
    for (std::size_t j = 0; j < v_.size(); ++j) v_[j] += o.v_[j];
    return *this;
  }
  SpaceTimeField& operator-=(const SpaceTimeField& o) {
    check_same(o);
    for (std::size_t j = 0; j < v_.size(); ++j) v_[j] -= o.v_[j];
    return *this;
  }
  SpaceTimeField& operator*=(const Real& s) {
    for (auto& x : v_) x *= s;
    return *this;
  }
  friend SpaceTimeField operator+(SpaceTimeField a, const SpaceTimeField& b) { return a += b; }
  friend SpaceTimeField operator-(SpaceTimeField a, const SpaceTimeField& b) { return a -= b; }
  friend SpaceTimeField operator*(SpaceTimeField a, const Real& s) { return a *= s; }
  friend SpaceTimeField operator*(const Real& s, SpaceTimeField a) { return a *= s; }

 private:
  SpaceTimeGrid grid_;
  std::vector<Real> v_;
};

/// Trapezoid-in-time, h^d-in-space pairing.
template <class Real>
Real inner(const SpaceTimeField<Real>& a, const SpaceTimeField<Real>& b) {
  a.check_same(b);
  const auto& g = a.grid();
  const std::size_t n = g.space().size();
  Real s = 0;
  for (int i = 0; i < g.nt(); ++i) {
    Real si = 0;
    for (std::size_t j = 0; j < n; ++j) si += a.at(i, j) * b.at(i, j);
    s += g.template time_weight<Real>(i) * si;
  }
  return s * g.space().template cell_volume<Real>();
}

template <class Real>
Real integrate(const SpaceTimeField<Real>& a) {
  return inner(a, SpaceTimeField<Real>(a.grid(), Real(1)));
}

template <class Real>
Real norm_inf(const SpaceTimeField<Real>& a) {
  using std::abs;
  Real m = 0;
  for (const auto& x : a.values()) m = std::max<Real>(m, abs(x));
  return m;
}

template <class Real>
Real min_value(const SpaceTimeField<Real>& a) {
  return *std::min_element(a.values().begin(), a.values().end());
}

/// Applies a spatial operator slice by slice.
template <class Real, class Fn>
SpaceTimeField<Real> per_slice(const SpaceTimeField<Real>& f, Fn&& fn) {
  SpaceTimeField<Real> out(f.grid());
  for (int i = 0; i < f.grid().nt(); ++i) out.set_slice(i, fn(f.slice(i)));
  return out;
}

template <class Real>
using TimeMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;

/// Summation-by-parts first derivative on nt nodes with spacing dt.
template <class Real>
TimeMatrix<Real> sbp_derivative(int nt, const Real& dt) {
  TimeMatrix<Real> D = TimeMatrix<Real>::Zero(nt, nt);
  D(0, 0) = -1 / dt;
  D(0, 1) = 1 / dt;
  for (int i = 1; i + 1 < nt; ++i) {
    D(i, i - 1) = -1 / (2 * dt);
    D(i, i + 1) = 1 / (2 * dt);
  }
  D(nt - 1, nt - 2) = -1 / dt;
  D(nt - 1, nt - 1) = 1 / dt;
  return D;
}

/// Compact second difference: central inside, one-sided three-point rows at the ends.
template <class Real>
TimeMatrix<Real> second_difference(int nt, const Real& dt) {
  TimeMatrix<Real> D = TimeMatrix<Real>::Zero(nt, nt);
  Real c = 1 / (dt * dt);
  for (int i = 0; i < nt; ++i) {
    int j = std::clamp(i, 1, nt - 2);
    D(i, j - 1) = c;
    D(i, j) = -2 * c;
    D(i, j + 1) = c;
  }
  return D;
}

/// Time-difference operator of order j used inside the quadratic form:
/// (D2)^{j/2} for even j and D1 (D2)^{(j-1)/2} for odd j. Composing D1 with
/// itself would leave the odd-even time mode almost unpenalized, since the
/// central first difference annihilates it away from the ends.
template <class Real>
std::vector<TimeMatrix<Real>> form_time_differences(int nt, const Real& dt, int order) {
  auto D1 = sbp_derivative<Real>(nt, dt);
  auto D2 = second_difference<Real>(nt, dt);
  std::vector<TimeMatrix<Real>> P{TimeMatrix<Real>::Identity(nt, nt)};
  if (order >= 1) P.push_back(D1);
  for (int j = 2; j <= order; ++j) P.push_back(D2 * P[std::size_t(j - 2)]);
  return P;
}

template <class Real>
SpaceTimeField<Real> apply_time_matrix(const TimeMatrix<Real>& A, const SpaceTimeField<Real>& f) {
  const auto& g = f.grid();
  const std::size_t n = g.space().size();
  SpaceTimeField<Real> out(g);
  for (int i = 0; i < g.nt(); ++i)
    for (int l = 0; l < g.nt(); ++l) {
      Real a = A(i, l);
      if (a == 0) continue;
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += a * f.at(l, j);
    }
  return out;
}

template <class Real>
SpaceTimeField<Real> time_derivative(const SpaceTimeField<Real>& f) {
  return apply_time_matrix(sbp_derivative<Real>(f.grid().nt(), f.grid().template dt<Real>()), f);
}

// ---------------------------------------------------------------------------
// Problem and operator

template <class Real>
struct TDState {
  SpaceTimeField<Real> m;
  SpaceTimeField<Real> u;

  explicit TDState(const SpaceTimeGrid& g) : m(g), u(g) {}
  TDState(SpaceTimeField<Real> m_, SpaceTimeField<Real> u_) : m(std::move(m_)), u(std::move(u_)) { m.check_same(u); }

  const SpaceTimeGrid& grid() const { return m.grid(); }
  TDState& operator+=(const TDState& o) {
    m += o.m;
    u += o.u;
    return *this;
  }
  TDState& operator-=(const TDState& o) {
    m -= o.m;
    u -= o.u;
    return *this;
  }
  friend TDState operator+(TDState a, const TDState& b) { return a += b; }
  friend TDState operator-(TDState a, const TDState& b) { return a -= b; }
};

template <class Real>
Real inner(const TDState<Real>& a, const TDState<Real>& b) {
  return inner(a.m, b.m) + inner(a.u, b.u);
}

template <class Real>
Real norm_inf(const TDState<Real>& a) {
  return std::max(norm_inf(a.m), norm_inf(a.u));
}

template <class Real>
class TDProblem {
 public:
  /// k = 0 selects the default order.
  TDProblem(const SpaceTimeGrid& grid, HamiltonianSpec ham, CouplingSpec coupling, SpaceTimeField<Real> V,
            GridField<Real> m0, GridField<Real> uT, int k = 0)
      : grid_(grid), ham_(ham), coupling_(coupling), V_(std::move(V)), m0_(std::move(m0)), uT_(std::move(uT)),
        k_(k == 0 ? default_k(grid.space().dim()) : k) {
    ham_.validate();
    coupling_.validate();
    if (!(V_.grid() == grid_)) throw ValidationError("td problem: V on wrong grid");
    if (!(m0_.grid() == grid_.space()) || !(uT_.grid() == grid_.space()))
      throw ValidationError("td problem: boundary data on wrong grid");
    V_.require_finite("td problem.V");
    m0_.require_finite("td problem.m0");
    uT_.require_finite("td problem.uT");
    if (k_ < 1) throw ValidationError("td problem: order k must be >= 1");
    for (std::size_t j = 0; j < m0_.size(); ++j)
      if (!(m0_[j] > 0))
        throw ValidationError("td problem: m0 must be positive (node " + std::to_string(j) + ")");
    using std::abs;
    if (abs(integrate(m0_) - 1) > Real(1e-12)) throw ValidationError("td problem: m0 must have unit mass");
  }

  /// Smallest k with 2k >= (d + 1)/2 + 4.
  static int default_k(int d) {
    int k = 1;
    while (4 * k < d + 9) ++k;
    return k;
  }

  const SpaceTimeGrid& grid() const { return grid_; }
  const HamiltonianSpec& hamiltonian() const { return ham_; }
  const CouplingSpec& coupling() const { return coupling_; }
  const SpaceTimeField<Real>& V() const { return V_; }
  const GridField<Real>& m0() const { return m0_; }
  const GridField<Real>& uT() const { return uT_; }
  int k() const { return k_; }

 private:
  SpaceTimeGrid grid_;
  HamiltonianSpec ham_;
  CouplingSpec coupling_;
  SpaceTimeField<Real> V_;
  GridField<Real> m0_;
  GridField<Real> uT_;
  int k_;
};

/// e1 = u_t + Lap u - H(Du) + g(m) + V,  e2 = m_t - Lap m - div(m DpH(Du)).
template <class Real>
TDState<Real> td_apply_F(const TDProblem<Real>& pb, const TDState<Real>& s) {
  if (!(s.grid() == pb.grid())) throw ValidationError("td operator: state on wrong grid");
  s.m.require_finite("td operator.m");
  s.u.require_finite("td operator.u");
  const auto& g = pb.grid();
  const int d = g.space().dim();
  TDState<Real> e(time_derivative(s.u), time_derivative(s.m));
  for (int i = 0; i < g.nt(); ++i) {
    auto m = s.m.slice(i);
    auto u = s.u.slice(i);
    auto Du = gradient(u);
    auto hf = eval_hamiltonian(pb.hamiltonian(), Du);
    GridVectorField<Real> flux(g.space());
    for (int a = 0; a < d; ++a) flux[a] = hadamard(m, hf.DpH[a]);
    auto gm = coupling_field(pb.coupling(), m);
    auto lu = laplacian(u);
    auto lm = laplacian(m);
    auto dv = divergence(flux);
    for (std::size_t j = 0; j < g.space().size(); ++j) {
      e.m.at(i, j) += lu[j] - hf.H[j] + gm[j] + pb.V().at(i, j);
      e.u.at(i, j) += -lm[j] - dv[j];
    }
  }
  return e;
}

// ---------------------------------------------------------------------------
// Space-time quadratic form

/// Q and its Riesz operator K (Q(v, w) = <K v, w>), diagonalized in space by
/// the Fourier transform: on spatial mode xi, K acts on the time vector as
/// eps H^{-1} M_xi with M_xi = H + sum_j c_{2k-j}(xi) (D^j)^T H D^j.
template <class Real>
class STQuadraticForm {
 public:
  STQuadraticForm(const SpaceTimeGrid& grid, int k, const Real& eps) : grid_(grid), k_(k), eps_(eps) {
    if (k < 1) throw ValidationError("quadratic form: order k must be >= 1");
    if (!(eps > 0)) throw ValidationError("quadratic form: epsilon must be positive");
    const int nt = grid.nt();
    H_.resize(nt);
    for (int i = 0; i < nt; ++i) H_(i) = grid.template time_weight<Real>(i);
    powers_ = form_time_differences<Real>(nt, grid.template dt<Real>(), 2 * k);
    std::vector<TimeMatrix<Real>> gram;
    for (const auto& P : powers_) gram.push_back(P.transpose() * H_.asDiagonal() * P);
    const auto& sp = grid.space();
    modes_.resize(sp.size());
    for (std::size_t q = 0; q < sp.size(); ++q) {
      auto xi = sp.frequencies(q);
      TimeMatrix<Real> M = TimeMatrix<Real>(H_.asDiagonal());
      for (int j = 0; j <= 2 * k; ++j) M += spatial_weight(xi, 2 * k - j) * gram[std::size_t(j)];
      modes_[q] = std::move(M);
    }
  }

  const SpaceTimeGrid& grid() const { return grid_; }
  int k() const { return k_; }
  const Real& eps() const { return eps_; }

  /// sum over spatial multi-indices of order a of |symbol|^2.
  Real spatial_weight(const std::array<int, 2>& xi, int a) const {
    const auto& sp = grid_.space();
    Real s0 = sq_symbol(sp, xi, 0);
    if (sp.dim() == 1) return ipow(s0, unsigned(a));
    Real s1 = sq_symbol(sp, xi, 1);
    Real total = 0;
    for (int b = 0; b <= a; ++b) total += ipow(s0, unsigned(b)) * ipow(s1, unsigned(a - b));
    return total;
  }

  /// Q(v1, v2) evaluated in physical space from the defining sum.
  Real value(const SpaceTimeField<Real>& v1, const SpaceTimeField<Real>& v2) const {
    Real s = inner(v1, v2);
    const int d = grid_.space().dim();
    for (int j = 0; j <= 2 * k_; ++j) {
      auto t1 = apply_time_matrix(powers_[std::size_t(j)], v1);
      auto t2 = apply_time_matrix(powers_[std::size_t(j)], v2);
      int a = 2 * k_ - j;
      for (int b = 0; b <= (d == 2 ? a : 0); ++b) {
        std::array<int, 2> orders{d == 2 ? b : a, d == 2 ? a - b : 0};
        auto w1 = per_slice(t1, [&](const GridField<Real>& f) { return mixed_derivative(f, orders); });
        auto w2 = per_slice(t2, [&](const GridField<Real>& f) { return mixed_derivative(f, orders); });
        s += inner(w1, w2);
      }
    }
    return eps_ * s;
  }

  /// K v.
  SpaceTimeField<Real> apply(const SpaceTimeField<Real>& v) const {
    return per_mode(v, [&](std::size_t q, const Vec& re, const Vec& im, Vec& ore, Vec& oim) {
      ore = eps_ * (modes_[q] * re).cwiseQuotient(H_);
      oim = eps_ * (modes_[q] * im).cwiseQuotient(H_);
    });
  }

  using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

  /// Applies fn(mode, re, im, out_re, out_im) to the time vector of every spatial mode.
  template <class Fn>
  SpaceTimeField<Real> per_mode(const SpaceTimeField<Real>& v, Fn&& fn) const {
    const int nt = grid_.nt();
    const auto& sp = grid_.space();
    std::vector<spectral::Spectrum<Real>> S(static_cast<std::size_t>(nt));
    for (int i = 0; i < nt; ++i) S[std::size_t(i)] = spectral::transform(v.slice(i));
    Vec re(nt), im(nt), ore(nt), oim(nt);
    for (std::size_t q = 0; q < sp.size(); ++q) {
      for (int i = 0; i < nt; ++i) {
        re(i) = S[std::size_t(i)][q].real();
        im(i) = S[std::size_t(i)][q].imag();
      }
      fn(q, re, im, ore, oim);
      for (int i = 0; i < nt; ++i) S[std::size_t(i)][q] = std::complex<Real>(ore(i), oim(i));
    }
    SpaceTimeField<Real> out(grid_);
    for (int i = 0; i < nt; ++i) out.set_slice(i, spectral::inverse(sp, S[std::size_t(i)]));
    return out;
  }

  const TimeMatrix<Real>& mode_matrix(std::size_t q) const { return modes_[q]; }
  const Vec& time_weights() const { return H_; }

 private:
  static Real sq_symbol(const TorusGrid& sp, const std::array<int, 2>& xi, int axis) {
    auto c = spectral::derivative_symbol<Real>(sp, xi, axis);
    return c.imag() * c.imag();
  }

  static GridField<Real> mixed_derivative(const GridField<Real>& f, const std::array<int, 2>& orders) {
    const auto& sp = f.grid();
    if (orders[0] == 0 && orders[1] == 0) return f;
    return spectral::apply(f, [&](const std::array<int, 2>& xi) {
      std::complex<Real> s(1, 0);
      for (int a = 0; a < sp.dim(); ++a)
        for (int r = 0; r < orders[std::size_t(a)]; ++r) s *= spectral::derivative_symbol<Real>(sp, xi, a);
      return s;
    });
  }

  SpaceTimeGrid grid_;
  int k_;
  Real eps_;
  Vec H_;
  std::vector<TimeMatrix<Real>> powers_;
  std::vector<TimeMatrix<Real>> modes_;
};

/// Solves K x = b on the nodes off one pinned time slice (x = 0 there).
template <class Real>
class PinnedSolver {
 public:
  PinnedSolver(const STQuadraticForm<Real>& Q, int pinned) : Q_(Q), pinned_(pinned) {
    const int nt = Q.grid().nt();
    if (pinned < 0 || pinned >= nt) throw ValidationError("pinned solver: slice out of range");
    for (int i = 0; i < nt; ++i)
      if (i != pinned) free_.push_back(i);
    const int nf = nt - 1;
    for (std::size_t q = 0; q < Q.grid().space().size(); ++q) {
      TimeMatrix<Real> A(nf, nf);
      for (int a = 0; a < nf; ++a)
        for (int b = 0; b < nf; ++b) A(a, b) = Q.mode_matrix(q)(free_[std::size_t(a)], free_[std::size_t(b)]);
      llt_.emplace_back(A);
      if (llt_.back().info() != Eigen::Success) throw Error("pinned solver: mode matrix not positive definite");
    }
  }

  int pinned() const { return pinned_; }
  const std::vector<int>& free_slices() const { return free_; }

  /// x with K x = b on the free slices and x = 0 on the pinned one.
  SpaceTimeField<Real> solve(const SpaceTimeField<Real>& b) const {
    using Vec = typename STQuadraticForm<Real>::Vec;
    const auto& H = Q_.time_weights();
    const int nf = int(free_.size());
    return Q_.per_mode(b, [&](std::size_t q, const Vec& re, const Vec& im, Vec& ore, Vec& oim) {
      Vec r(nf), i(nf);
      for (int a = 0; a < nf; ++a) {
        int t = free_[std::size_t(a)];
        r(a) = H(t) * re(t) / Q_.eps();
        i(a) = H(t) * im(t) / Q_.eps();
      }
      Vec xr = llt_[q].solve(r), xi = llt_[q].solve(i);
      ore = Vec::Zero(re.size());
      oim = Vec::Zero(im.size());
      for (int a = 0; a < nf; ++a) {
        ore(free_[std::size_t(a)]) = xr(a);
        oim(free_[std::size_t(a)]) = xi(a);
      }
    });
  }

 private:
  const STQuadraticForm<Real>& Q_;
  int pinned_;
  std::vector<int> free_;
  std::vector<Eigen::LLT<TimeMatrix<Real>>> llt_;
};

/// Obstacle operator on the free slices (all but t = 0), in the trapezoid pairing.
template <class Real>
class TDObstacleOperator {
 public:
  explicit TDObstacleOperator(const PinnedSolver<Real>& solver, const STQuadraticForm<Real>& Q)
      : solver_(solver), Q_(Q) {
    const auto& g = Q.grid();
    const std::size_t n = g.space().size();
    Real h = g.space().template cell_volume<Real>();
    for (int t : solver.free_slices())
      for (std::size_t j = 0; j < n; ++j) weights_.push_back(g.template time_weight<Real>(t) * h);
  }

  std::size_t size() const { return weights_.size(); }
  const Vector<Real>& weights() const { return weights_; }
  Vector<Real> apply(const Vector<Real>& w) const { return restrict(Q_.apply(embed(w))); }
  Vector<Real> solve(const Vector<Real>& b) const { return restrict(solver_.solve(embed(b))); }
  /// K is translation invariant in space, so the column of node (t, x) is the
  /// column of (t, 0) shifted by x; one solve per free slice.
  Vector<Real> inverse_column(std::size_t j) const {
    const auto& sp = Q_.grid().space();
    const std::size_t n = sp.size();
    const std::size_t slot = j / n;
    if (base_.empty()) base_.resize(solver_.free_slices().size());
    if (base_[slot].empty()) {
      Vector<Real> e(size(), Real(0));
      e[slot * n] = 1;
      base_[slot] = solve(e);
    }
    const auto& b = base_[slot];
    auto x = sp.multi_index(j % n);
    const int N = sp.n();
    Vector<Real> out(size());
    for (std::size_t s = 0; s < solver_.free_slices().size(); ++s)
      for (std::size_t y = 0; y < n; ++y) {
        auto yi = sp.multi_index(y);
        int a0 = ((yi[0] - x[0]) % N + N) % N;
        int a1 = ((yi[1] - x[1]) % N + N) % N;
        std::size_t src = sp.dim() == 1 ? std::size_t(a0) : std::size_t(a0) * std::size_t(N) + std::size_t(a1);
        out[s * n + y] = b[s * n + src];
      }
    return out;
  }

  SpaceTimeField<Real> embed(const Vector<Real>& w) const {
    SpaceTimeField<Real> f(Q_.grid());
    const std::size_t n = Q_.grid().space().size();
    std::size_t p = 0;
    for (int t : solver_.free_slices())
      for (std::size_t j = 0; j < n; ++j) f.at(t, j) = w[p++];
    return f;
  }
  Vector<Real> restrict(const SpaceTimeField<Real>& f) const {
    Vector<Real> w;
    w.reserve(size());
    const std::size_t n = Q_.grid().space().size();
    for (int t : solver_.free_slices())
      for (std::size_t j = 0; j < n; ++j) w.push_back(f.at(t, j));
    return w;
  }

 private:
  const PinnedSolver<Real>& solver_;
  const STQuadraticForm<Real>& Q_;
  Vector<Real> weights_;
  mutable std::vector<Vector<Real>> base_;
};

// ---------------------------------------------------------------------------
// Picard

/// Factorizations shared by every Picard step at fixed eps.
template <class Real>
class TDPicardContext {
 public:
  TDPicardContext(const TDProblem<Real>& pb, double eps)
      : pb_(pb),
        Q_(std::make_unique<STQuadraticForm<Real>>(pb.grid(), pb.k(), Real(eps))),
        msolve_(std::make_unique<PinnedSolver<Real>>(*Q_, 0)),
        usolve_(std::make_unique<PinnedSolver<Real>>(*Q_, pb.grid().nt() - 1)),
        obstacle_(std::make_unique<TDObstacleOperator<Real>>(*msolve_, *Q_)),
        mlift_(pb.grid()),
        ulift_(pb.grid()),
        Kmlift_(pb.grid()),
        Kulift_(pb.grid()) {
    if (!(eps > 0.0 && eps < 1.0)) throw ValidationError("td: epsilon must lie in (0, 1)");
    mlift_.set_slice(0, pb.m0());
    ulift_.set_slice(pb.grid().nt() - 1, pb.uT());
    Kmlift_ = Q_->apply(mlift_);
    Kulift_ = Q_->apply(ulift_);
  }

  const TDProblem<Real>& problem() const { return pb_; }
  const STQuadraticForm<Real>& form() const { return *Q_; }

  /// Overwrites the pinned slices with the boundary data.
  void pin(TDState<Real>& s) const {
    s.m.set_slice(0, pb_.m0());
    s.u.set_slice(pb_.grid().nt() - 1, pb_.uT());
  }

  /// `active` (optional) seeds the obstacle active set and receives the new one.
  TDState<Real> map(const TDState<Real>& s, double kkt_tol, std::vector<std::size_t>* active = nullptr) const {
    auto e = td_apply_F(pb_, s);
    // m-row: min 1/2 Q(m, m) + <e1, m> over m(0) = m0, m >= 0.
    auto lin = e.m + Kmlift_;
    ObstacleOptions oo;
    oo.kkt_tol = kkt_tol;
    auto obs = solve_obstacle_qp(*obstacle_, obstacle_->restrict(lin), oo, active);
    if (active) *active = obs.activeSet;
    if (obs.status != SolveStatus::converged) {
      std::ostringstream msg;
      msg << "td picard: obstacle subproblem missed its KKT tolerance (min r = " << to_double(obs.minR)
          << ", complementarity = " << to_double(obs.complementarity) << ", active = " << obs.active << ")";
      throw Error(msg.str());
    }
    TDState<Real> out(mlift_ + obstacle_->embed(obs.w), ulift_);
    // u-row: Q(u, v) = <-e2, v> for v(T) = 0, u(T) = uT.
    SpaceTimeField<Real> rhs = e.u * Real(-1) - Kulift_;
    out.u += usolve_->solve(rhs);
    return out;
  }

  /// max of the u-row equation residual and the m-row natural residual, on free nodes.
  Real residual(const TDState<Real>& s) const {
    using std::abs;
    auto e = td_apply_F(pb_, s);
    auto ru = Q_->apply(s.u) + e.u;
    auto rm = Q_->apply(s.m) + e.m;
    const auto& g = pb_.grid();
    Real worst = 0;
    for (int i = 0; i < g.nt(); ++i)
      for (std::size_t j = 0; j < g.space().size(); ++j) {
        if (i != g.nt() - 1) worst = std::max(worst, abs(ru.at(i, j)));
        if (i != 0) worst = std::max(worst, abs(std::min(s.m.at(i, j), rm.at(i, j))));
      }
    return worst;
  }

 private:
  const TDProblem<Real>& pb_;
  std::unique_ptr<STQuadraticForm<Real>> Q_;
  std::unique_ptr<PinnedSolver<Real>> msolve_, usolve_;
  std::unique_ptr<TDObstacleOperator<Real>> obstacle_;
  SpaceTimeField<Real> mlift_, ulift_, Kmlift_, Kulift_;
};

/// Starting pair from the linear part of the system: H(Du) and the transport
/// term are dropped, g is linearized about m0 with its mean slope, and the
/// resulting unconstrained equations are solved exactly mode by mode. Negative
/// densities are clipped.
template <class Real>
TDState<Real> td_linear_start(const TDProblem<Real>& pb, const STQuadraticForm<Real>& Q) {
  using Mat = TimeMatrix<Real>;
  const auto& g = pb.grid();
  const auto& sp = g.space();
  const int nt = g.nt();
  const auto D1 = sbp_derivative<Real>(nt, g.template dt<Real>());
  const auto& H = Q.time_weights();
  GridField<Real> slope(sp);
  for (std::size_t j = 0; j < sp.size(); ++j) slope[j] = pb.coupling().dg(pb.m0()[j]);
  const Real gamma = integrate(slope);
  auto c1 = pb.V();
  GridField<Real> shift = coupling_field(pb.coupling(), pb.m0()) - pb.m0() * gamma;
  for (int i = 0; i < nt; ++i) c1.set_slice(i, c1.slice(i) + shift);
  std::vector<spectral::Spectrum<Real>> C(static_cast<std::size_t>(nt));
  for (int i = 0; i < nt; ++i) C[std::size_t(i)] = spectral::transform(c1.slice(i));
  const auto M0 = spectral::transform(pb.m0());
  const auto UT = spectral::transform(pb.uT());
  std::vector<spectral::Spectrum<Real>> Ms(std::size_t(nt), spectral::Spectrum<Real>(sp.size()));
  auto Us = Ms;
  for (std::size_t q = 0; q < sp.size(); ++q) {
    const Real lap = spectral::neg_laplacian_symbol<Real>(sp, sp.frequencies(q));
    const Mat& M = Q.mode_matrix(q);
    Mat A = Mat::Zero(2 * nt, 2 * nt);
    Mat rhs = Mat::Zero(2 * nt, 2);
    A(0, 0) = 1;
    rhs(0, 0) = M0[q].real();
    rhs(0, 1) = M0[q].imag();
    for (int i = 1; i < nt; ++i) {  // m rows
      for (int l = 0; l < nt; ++l) {
        A(i, l) = Q.eps() * M(i, l);
        A(i, nt + l) = H(i) * D1(i, l);
      }
      A(i, i) += H(i) * gamma;
      A(i, nt + i) -= H(i) * lap;
      rhs(i, 0) = -H(i) * C[std::size_t(i)][q].real();
      rhs(i, 1) = -H(i) * C[std::size_t(i)][q].imag();
    }
    for (int i = 0; i + 1 < nt; ++i) {  // u rows
      for (int l = 0; l < nt; ++l) {
        A(nt + i, nt + l) = Q.eps() * M(i, l);
        A(nt + i, l) = H(i) * D1(i, l);
      }
      A(nt + i, i) += H(i) * lap;
    }
    A(2 * nt - 1, 2 * nt - 1) = 1;
    rhs(2 * nt - 1, 0) = UT[q].real();
    rhs(2 * nt - 1, 1) = UT[q].imag();
    Mat z = A.partialPivLu().solve(rhs);
    for (int i = 0; i < nt; ++i) {
      Ms[std::size_t(i)][q] = std::complex<Real>(z(i, 0), z(i, 1));
      Us[std::size_t(i)][q] = std::complex<Real>(z(nt + i, 0), z(nt + i, 1));
    }
  }
  TDState<Real> s(g);
  for (int i = 0; i < nt; ++i) {
    auto m = spectral::inverse(sp, Ms[std::size_t(i)]);
    for (auto& v : m.values()) v = std::max(Real(0), v);
    s.m.set_slice(i, m);
    s.u.set_slice(i, spectral::inverse(sp, Us[std::size_t(i)]));
  }
  s.m.set_slice(0, pb.m0());
  s.u.set_slice(nt - 1, pb.uT());
  return s;
}

/// (m0, uT) held constant in time.
template <class Real>
TDState<Real> td_constant_state(const TDProblem<Real>& pb) {
  return TDState<Real>(SpaceTimeField<Real>::constant_in_time(pb.grid(), pb.m0()),
                       SpaceTimeField<Real>::constant_in_time(pb.grid(), pb.uT()));
}

/// The space-time map has eigenvalues far outside the unit disc along the
/// zero spatial mode, so plain damping stalls. Full-step Anderson from the
/// first iterate is the working default.
inline PicardOptions td_picard_defaults() {
  PicardOptions o;
  o.theta = 1.0;
  o.anderson_depth = 20;
  o.anderson_start = 1e30;
  o.patience = 50;
  o.max_iter = 2000;
  return o;
}

template <class Real>
std::pair<TDState<Real>, SolveReport> td_picard_solve(const TDProblem<Real>& pb, double eps,
                                                      const PicardOptions& opt = td_picard_defaults(),
                                                      const TDState<Real>* start = nullptr) {
  opt.validate();
  TDPicardContext<Real> ctx(pb, eps);
  const auto& g = pb.grid();
  TDState<Real> s0 = td_linear_start(pb, ctx.form());
  ctx.pin(s0);
  if (start) {
    // A warm start from a coarser epsilon can be worse than the linear start
    // (it is exact when the data are flat); keep whichever has the smaller residual.
    if (!(start->grid() == g)) throw ValidationError("td picard: start on wrong grid");
    TDState<Real> w = *start;
    ctx.pin(w);
    if (ctx.residual(w) < ctx.residual(s0)) s0 = std::move(w);
  }
  const std::size_t n = g.size();
  auto flat = [&](const TDState<Real>& s) {
    Vector<Real> v = s.m.values();
    v.insert(v.end(), s.u.values().begin(), s.u.values().end());
    return v;
  };
  auto unflat = [&](const Vector<Real>& v) {
    return TDState<Real>(SpaceTimeField<Real>(g, Vector<Real>(v.begin(), v.begin() + std::ptrdiff_t(n))),
                         SpaceTimeField<Real>(g, Vector<Real>(v.begin() + std::ptrdiff_t(n), v.end())));
  };
  Vector<Real> x = flat(s0);
  std::vector<std::size_t> active;
  auto rep = damped_fixed_point<Real>(
      [&](const Vector<Real>& v) { return flat(ctx.map(unflat(v), opt.kkt_tol, &active)); },
      [&](const Vector<Real>& v) { return to_double(ctx.residual(unflat(v))); },
      [&](Vector<Real>& v) {
        for (std::size_t i = 0; i < n; ++i) v[i] = std::max(Real(0), v[i]);
        auto s = unflat(v);
        ctx.pin(s);
        v = flat(s);
      },
      x, opt);
  auto sol = unflat(x);
  rep.minM = to_double(min_value(sol.m));
  return {std::move(sol), rep};
}

// ---------------------------------------------------------------------------
// Certificates and diagnostics

template <class Real>
struct TDGap {
  Real bregman1 = 0, bregman2 = 0, coupling = 0;
  Real boundary = 0;  // int [dm du](T) - [dm du](0)
  Real total = 0;     // <F(s1) - F(s2), s1 - s2>
  Real sum_of_parts() const { return bregman1 + bregman2 + coupling + boundary; }
};

template <class Real>
TDGap<Real> td_monotonicity_gap(const TDProblem<Real>& pb, const TDState<Real>& s1, const TDState<Real>& s2) {
  const auto& g = pb.grid();
  for (const auto* s : {&s1, &s2})
    for (std::size_t j = 0; j < g.size(); ++j)
      if (s->m[j] < 0) throw DomainError("td gap: negative density", std::ptrdiff_t(j));
  TDGap<Real> out;
  auto diff = s1 - s2;
  out.total = inner(td_apply_F(pb, s1) - td_apply_F(pb, s2), diff);
  Real h = g.space().template cell_volume<Real>();
  for (int i = 0; i < g.nt(); ++i) {
    Real w = g.template time_weight<Real>(i);
    auto m1 = s1.m.slice(i), m2 = s2.m.slice(i);
    auto Du1 = gradient(s1.u.slice(i)), Du2 = gradient(s2.u.slice(i));
    out.bregman1 += w * detail::bregman_integral(pb.hamiltonian(), m1, Du1, Du2);
    out.bregman2 += w * detail::bregman_integral(pb.hamiltonian(), m2, Du2, Du1);
    out.coupling += w * inner(coupling_field(pb.coupling(), m1) - coupling_field(pb.coupling(), m2), m1 - m2);
  }
  const int last = g.nt() - 1;
  for (std::size_t j = 0; j < g.space().size(); ++j)
    out.boundary += h * (diff.m.at(last, j) * diff.u.at(last, j) - diff.m.at(0, j) * diff.u.at(0, j));
  return out;
}

/// Test pairs in A* x B: w(0) = m0, unit spatial mass on every slice, w > 0;
/// v(T) = uT. The first element is (m0, uT) held constant in time.
template <class Real>
std::vector<TDState<Real>> make_td_bank(const TDProblem<Real>& pb, int count, std::uint64_t seed) {
  if (count < 1) throw ValidationError("td bank: count must be >= 1");
  const auto& g = pb.grid();
  const auto& sp = g.space();
  std::vector<TDState<Real>> bank;
  bank.push_back(td_constant_state(pb));
  auto spatial = make_test_bank<Real>(sp, 2 * count + 2, seed, BankConstraint::unit_mass_nonneg, nullptr,
                                      BankOptions{0, 0.05, false});
  std::size_t p = 0;
  Real T(g.horizon());
  while (int(bank.size()) < count) {
    const auto& a = spatial[p++];
    const auto& b = spatial[p++];
    TDState<Real> s(g);
    for (int i = 0; i < g.nt(); ++i) {
      Real tau = g.template time<Real>(i) / T;
      for (std::size_t j = 0; j < sp.size(); ++j) {
        Real r = (1 - tau) * a.m[j] + tau * b.m[j];
        s.m.at(i, j) = (1 - tau) * pb.m0()[j] + tau * r;
        s.u.at(i, j) = pb.uT()[j] + (1 - tau) * ((1 - tau) * a.u[j] + tau * b.u[j]);
      }
    }
    bank.push_back(std::move(s));
  }
  return bank;
}

struct TDAprioriRecord {
  double mgm = 0;      // int int m g(m)
  double duAlpha = 0;  // int int |Du|^alpha
  double mDu = 0;      // int int m |Du|^alpha
  double total = 0;    // mgm + duAlpha
  double regQuad = 0;  // Q(m, m) + Q(u, u)
  double intH = 0;
  double minM = 0;
};

struct TDDiagnostics {
  double maxWeakVI = 0;
  TDAprioriRecord apriori;
  std::vector<double> sliceMass;
};

template <class Real>
TDAprioriRecord td_apriori(const TDProblem<Real>& pb, double eps, const TDState<Real>& s) {
  using std::pow;
  using std::sqrt;
  const auto& g = pb.grid();
  TDAprioriRecord r;
  SpaceTimeField<Real> mg(g), pw(g), mpw(g), Hf(g);
  for (int i = 0; i < g.nt(); ++i) {
    auto m = s.m.slice(i);
    auto Du = gradient(s.u.slice(i));
    auto hf = eval_hamiltonian(pb.hamiltonian(), Du);
    auto gm = coupling_field(pb.coupling(), m);
    for (std::size_t j = 0; j < g.space().size(); ++j) {
      Real p2 = 0;
      for (int a = 0; a < g.space().dim(); ++a) p2 += Du[a][j] * Du[a][j];
      Real pa = p2 == 0 ? Real(0) : pow(sqrt(p2), Real(pb.hamiltonian().alpha));
      mg.at(i, j) = m[j] * gm[j];
      pw.at(i, j) = pa;
      mpw.at(i, j) = m[j] * pa;
      Hf.at(i, j) = hf.H[j];
    }
  }
  r.mgm = to_double(integrate(mg));
  r.duAlpha = to_double(integrate(pw));
  r.mDu = to_double(integrate(mpw));
  r.total = r.mgm + r.duAlpha;
  r.intH = to_double(integrate(Hf));
  STQuadraticForm<Real> Q(g, pb.k(), Real(eps));
  r.regQuad = to_double(Q.value(s.m, s.m) + Q.value(s.u, s.u));
  r.minM = to_double(min_value(s.m));
  return r;
}

/// u minus its spatial mean on every time slice.
template <class Real>
SpaceTimeField<Real> mean_adjusted(const SpaceTimeField<Real>& u) {
  return per_slice(u, [](const GridField<Real>& f) {
    GridField<Real> out = f;
    out += -integrate(f);
    return out;
  });
}

template <class Real>
TDDiagnostics td_diagnostics(const TDProblem<Real>& pb, double eps, const TDState<Real>& s,
                             const std::vector<TDState<Real>>& bank) {
  TDDiagnostics out;
  TDState<Real> cand(s.m, mean_adjusted(s.u));
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& t : bank) worst = std::max(worst, to_double(inner(td_apply_F(pb, t), cand - t)));
  out.maxWeakVI = bank.empty() ? 0.0 : worst;
  out.apriori = td_apriori(pb, eps, s);
  for (int i = 0; i < pb.grid().nt(); ++i) out.sliceMass.push_back(to_double(integrate(s.m.slice(i))));
  return out;
}

}  // namespace mmfg
