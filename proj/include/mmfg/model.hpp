#pragma once

// Problem data and the discrete stationary MFG operators.
//
//   F(m,u)        : e1 = -u + nu Lap u - H(Du) + g(m) - V
//                   e2 =  m - nu Lap m - div(m DpH(Du)) - phi
//   F_eps         : F + (eps R m, eps R u),  R = I + Lap^{2k}
//   F_eps^lambda  : e1 = -u + lambda(nu Lap u - H + g - V) + p_eps(m) + eps R m
//                   e2 =  m - lambda(nu Lap m + div(m DpH) + phi) - (1 - lambda) + eps R u

#include "mmfg/grid.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace mmfg {

template <class Real>
using Vec2 = std::array<Real, 2>;
template <class Real>
using Mat2 = std::array<std::array<Real, 2>, 2>;

/// H(p) = |A p|^alpha / alpha with A = diag(scale).
struct HamiltonianSpec {
  double alpha = 2.0;
  std::array<double, 2> scale{1.0, 1.0};
  double curvature_cap = 1e8;

  void validate() const {
    if (!(alpha > 1.0) || !std::isfinite(alpha))
      throw ValidationError("hamiltonian: exponent must satisfy alpha > 1 (growth assumption)");
    for (double s : scale)
      if (!(s > 0.0) || !std::isfinite(s)) throw ValidationError("hamiltonian: anisotropy scales must be positive");
    if (!(curvature_cap > 0.0)) throw ValidationError("hamiltonian: curvature cap must be positive");
  }

  /// Conjugate exponent alpha' with 1/alpha + 1/alpha' = 1.
  double conjugate_exponent() const { return alpha / (alpha - 1.0); }

  template <class Real>
  struct Value {
    Real H;
    Vec2<Real> DpH;
    Mat2<Real> D2H;
  };

  template <class Real>
  Value<Real> eval(const Vec2<Real>& p, int d) const {
    using std::pow;
    using std::sqrt;
    Real a(alpha);
    Vec2<Real> A{Real(scale[0]), Real(scale[1])};
    Vec2<Real> q{A[0] * p[0], d == 2 ? A[1] * p[1] : Real(0)};
    Real r2 = q[0] * q[0] + q[1] * q[1];
    Value<Real> out{Real(0), {Real(0), Real(0)}, {{{Real(0), Real(0)}, {Real(0), Real(0)}}}};
    if (r2 == 0) {
      Real c = alpha == 2.0 ? Real(1) : alpha > 2.0 ? Real(0) : Real(curvature_cap);
      for (int i = 0; i < d; ++i) out.D2H[i][i] = c * A[i] * A[i];
      return out;
    }
    Real r = sqrt(r2);
    Real rp = alpha == 2.0 ? Real(1) : pow(r, a - 2);  // |q|^{alpha-2}
    out.H = rp * r2 / a;
    for (int i = 0; i < d; ++i) out.DpH[i] = A[i] * rp * q[i];
    // D2 = A (|q|^{a-2} I + (a-2)|q|^{a-4} q q^T) A, scaled down when the factor exceeds the cap.
    Real f = rp, g = (a - 2) * rp / r2;
    if (rp > Real(curvature_cap)) {
      Real s = Real(curvature_cap) / rp;
      f *= s;
      g *= s;
    }
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) out.D2H[i][j] = A[i] * A[j] * ((i == j ? f : Real(0)) + g * q[i] * q[j]);
    return out;
  }

  /// L(v) = |A^{-1} v|^{alpha'} / alpha'.
  double lagrangian(const std::array<double, 2>& v, int d) const {
    double s = 0;
    for (int i = 0; i < d; ++i) s += (v[i] / scale[i]) * (v[i] / scale[i]);
    double ap = conjugate_exponent();
    return std::pow(std::sqrt(s), ap) / ap;
  }
};

struct LegendreCheck {
  double H_numeric = 0;
  double H_exact = 0;
  double gap = 0;
  std::array<double, 2> maximizer{0, 0};
  bool inconclusive = false;  // maximizer sits on the box boundary
};

/// Brute-force sup over a uniform v-grid on [-box, box]^d of -v.p - L(v).
inline LegendreCheck legendre_verify(const HamiltonianSpec& spec, const std::array<double, 2>& p, int d,
                                     double box, int grid_n) {
  spec.validate();
  if (d != 1 && d != 2) throw ValidationError("legendre_verify: dimension must be 1 or 2");
  if (!(box > 0) || grid_n < 3) throw ValidationError("legendre_verify: need box > 0 and at least 3 points");
  LegendreCheck out;
  out.H_exact = static_cast<double>(spec.eval<double>(p, d).H);
  double step = 2 * box / (grid_n - 1);
  double best = -std::numeric_limits<double>::infinity();
  std::array<int, 2> arg{0, 0};
  int ny = d == 2 ? grid_n : 1;
  for (int i = 0; i < grid_n; ++i) {
    for (int j = 0; j < ny; ++j) {
      // Index grid_n/2 is exactly v = 0 when grid_n is odd.
      std::array<double, 2> v{-box + i * step, d == 2 ? -box + j * step : 0.0};
      if (2 * i == grid_n - 1) v[0] = 0.0;
      if (d == 2 && 2 * j == grid_n - 1) v[1] = 0.0;
      double val = -(v[0] * p[0] + v[1] * p[1]) - spec.lagrangian(v, d);
      if (val > best) {
        best = val;
        arg = {i, j};
        out.maximizer = v;
      }
    }
  }
  out.H_numeric = best;
  out.gap = std::abs(best - out.H_exact);
  auto edge = [&](int i) { return i == 0 || i == grid_n - 1; };
  out.inconclusive = edge(arg[0]) || (d == 2 && edge(arg[1]));
  return out;
}

struct GrowthSample {
  std::array<double, 2> p{0, 0};
  double lhs_dissipation = 0;  // -H + DpH.p
  double identity = 0;         // (1 - 1/alpha)|Ap|^alpha
  double H = 0;
  double power = 0;            // |p|^alpha
  bool dissipation_ok = true;
  bool coercivity_ok = true;
};

struct GrowthReport {
  double C = 0;
  std::vector<GrowthSample> samples;
  bool all_ok = true;
};

/// Checks -H + DpH.p >= |p|^a/C - C and H >= |p|^a/C - C at each sample.
inline GrowthReport growth_check(const HamiltonianSpec& spec, const std::vector<std::array<double, 2>>& samples,
                                 int d, std::optional<double> C = std::nullopt) {
  spec.validate();
  GrowthReport rep;
  rep.C = C.value_or(std::max(spec.alpha, 2.0));
  for (const auto& p : samples) {
    GrowthSample s;
    s.p = p;
    auto v = spec.eval<double>(p, d);
    s.H = v.H;
    s.lhs_dissipation = -v.H + v.DpH[0] * p[0] + v.DpH[1] * p[1];
    double q2 = 0, p2 = 0;
    for (int i = 0; i < d; ++i) {
      q2 += spec.scale[i] * spec.scale[i] * p[i] * p[i];
      p2 += p[i] * p[i];
    }
    s.identity = (1.0 - 1.0 / spec.alpha) * std::pow(std::sqrt(q2), spec.alpha);
    s.power = std::pow(std::sqrt(p2), spec.alpha);
    double lower = s.power / rep.C - rep.C;
    double slack = 1e-12 * (1.0 + s.power);
    s.dissipation_ok = s.lhs_dissipation >= lower - slack;
    s.coercivity_ok = s.H >= lower - slack;
    rep.all_ok = rep.all_ok && s.dissipation_ok && s.coercivity_ok;
    rep.samples.push_back(s);
  }
  return rep;
}

enum class CouplingKind { linear, power, entropy };

struct CouplingSpec {
  CouplingKind kind = CouplingKind::linear;
  double gamma = 1.0;

  void validate() const {
    if (kind == CouplingKind::power && !(gamma >= 1.0)) throw ValidationError("coupling: power exponent must be >= 1");
  }

  /// Power kinds extend oddly to m < 0 so iterates that leave the cone stay finite.
  template <class Real>
  Real g(const Real& m) const {
    using std::abs;
    using std::log;
    using std::pow;
    switch (kind) {
      case CouplingKind::linear: return m;
      case CouplingKind::power: {
        if (gamma == 1.0) return m;
        if (gamma == 2.0) return m * abs(m);
        Real v = pow(abs(m), Real(gamma));
        return m < 0 ? -v : v;
      }
      case CouplingKind::entropy:
        if (!(m > 0)) throw DomainError("coupling: entropy coupling needs m > 0");
        return m * log(m);
    }
    return m;
  }

  template <class Real>
  Real dg(const Real& m) const {
    using std::abs;
    using std::log;
    using std::pow;
    switch (kind) {
      case CouplingKind::linear: return Real(1);
      case CouplingKind::power:
        if (gamma == 1.0) return Real(1);
        if (gamma == 2.0) return 2 * abs(m);
        return Real(gamma) * pow(abs(m), Real(gamma - 1));
      case CouplingKind::entropy:
        if (!(m > 0)) throw DomainError("coupling: entropy coupling needs m > 0");
        return log(m) + 1;
    }
    return Real(1);
  }
};

/// p_eps(t) = -t^{-(d+1)} below eps/2, 0 above eps, quintic-smoothstep blend between.
struct PenaltySpec {
  double eps = 0.1;
  int dim = 1;

  template <class Real>
  struct Value {
    Real p;
    Real dp;
  };

  template <class Real>
  Value<Real> eval(const Real& t) const {
    if (!(t > 0)) throw DomainError("penalty: argument must be positive");
    Real e(eps);
    if (t >= e) return {Real(0), Real(0)};
    Real inv = Real(1) / t;
    Real base = -ipow(inv, unsigned(dim + 1));               // -t^{-(d+1)}
    Real dbase = Real(dim + 1) * ipow(inv, unsigned(dim + 2));  // its derivative
    Real half = e / 2;
    if (t <= half) return {base, dbase};
    Real s = (t - half) / half;
    Real S = s * s * s * (s * (s * 6 - 15) + 10);
    Real dS = 30 * s * s * (s - 1) * (s - 1) / half;
    return {base * (1 - S), dbase * (1 - S) - base * dS};
  }
};

enum class RegVariant { plain, penalized };

struct RegParams {
  double eps = 1e-2;
  int k = 2;
  RegVariant variant = RegVariant::plain;

  /// Smallest k with 2k > d/2 + 3.
  static int default_k(int d) {
    int k = 1;
    while (4 * k <= d + 6) ++k;
    return k;
  }

  void validate() const {
    if (!(eps > 0.0 && eps < 1.0)) throw ValidationError("reg: epsilon must lie in (0, 1)");
    if (k < 1) throw ValidationError("reg: order k must be >= 1");
  }

  PenaltySpec penalty(int d) const { return PenaltySpec{eps, d}; }
};

template <class Real>
struct StatePair {
  GridField<Real> m;
  GridField<Real> u;

  explicit StatePair(const TorusGrid& g) : m(g), u(g) {}
  StatePair(GridField<Real> m_, GridField<Real> u_) : m(std::move(m_)), u(std::move(u_)) { m.check_same(u); }

  const TorusGrid& grid() const { return m.grid(); }

  StatePair& operator+=(const StatePair& o) {
    m += o.m;
    u += o.u;
    return *this;
  }
  StatePair& operator-=(const StatePair& o) {
    m -= o.m;
    u -= o.u;
    return *this;
  }
  StatePair& operator*=(const Real& s) {
    m *= s;
    u *= s;
    return *this;
  }
  friend StatePair operator+(StatePair a, const StatePair& b) { return a += b; }
  friend StatePair operator-(StatePair a, const StatePair& b) { return a -= b; }
  friend StatePair operator*(const Real& s, StatePair a) { return a *= s; }

  template <class Other>
  StatePair<Other> cast() const {
    return StatePair<Other>(m.template cast<Other>(), u.template cast<Other>());
  }
};

template <class Real>
Real inner(const StatePair<Real>& a, const StatePair<Real>& b) {
  return inner(a.m, b.m) + inner(a.u, b.u);
}

template <class Real>
Real norm_inf(const StatePair<Real>& a) {
  return std::max(norm_inf(a.m), norm_inf(a.u));
}

template <class Real>
Real norm_l2(const StatePair<Real>& a) {
  using std::sqrt;
  return sqrt(inner(a, a));
}

template <class Real>
class MFGProblem {
 public:
  /// phi must be positive; it is rescaled to unit mass here.
  MFGProblem(const TorusGrid& grid, HamiltonianSpec ham, CouplingSpec coupling, GridField<Real> V,
             GridField<Real> phi, double nu = 0.0)
      : grid_(grid), ham_(ham), coupling_(coupling), V_(std::move(V)), phi_(std::move(phi)), nu_(nu) {
    ham_.validate();
    coupling_.validate();
    if (!(V_.grid() == grid_) || !(phi_.grid() == grid_)) throw ValidationError("problem: data on wrong grid");
    V_.require_finite("problem.V");
    phi_.require_finite("problem.phi");
    if (!(nu_ >= 0.0) || !std::isfinite(nu_)) throw ValidationError("problem: viscosity must be >= 0");
    for (std::size_t j = 0; j < phi_.size(); ++j) {
      if (!(phi_[j] > 0)) {
        std::ostringstream msg;
        msg << "problem: phi must be positive (node " << j << ")";
        throw ValidationError(msg.str());
      }
    }
    phi_ *= Real(1) / integrate(phi_);
  }

  const TorusGrid& grid() const { return grid_; }
  int dim() const { return grid_.dim(); }
  const HamiltonianSpec& hamiltonian() const { return ham_; }
  const CouplingSpec& coupling() const { return coupling_; }
  const GridField<Real>& V() const { return V_; }
  const GridField<Real>& phi() const { return phi_; }
  double nu() const { return nu_; }

  template <class Other>
  MFGProblem<Other> cast() const {
    return MFGProblem<Other>(grid_, ham_, coupling_, V_.template cast<Other>(), phi_.template cast<Other>(), nu_);
  }

 private:
  TorusGrid grid_;
  HamiltonianSpec ham_;
  CouplingSpec coupling_;
  GridField<Real> V_;
  GridField<Real> phi_;
  double nu_;
};

/// Nodewise H(Du) and DpH(Du).
template <class Real>
struct HamiltonianField {
  GridField<Real> H;
  GridVectorField<Real> DpH;
};

template <class Real>
HamiltonianField<Real> eval_hamiltonian(const HamiltonianSpec& spec, const GridVectorField<Real>& Du) {
  const auto& grid = Du.grid();
  int d = grid.dim();
  HamiltonianField<Real> out{GridField<Real>(grid), GridVectorField<Real>(grid)};
  for (std::size_t j = 0; j < grid.size(); ++j) {
    Vec2<Real> p{Du[0][j], d == 2 ? Du[1][j] : Real(0)};
    auto v = spec.eval(p, d);
    out.H[j] = v.H;
    for (int a = 0; a < d; ++a) out.DpH[a][j] = v.DpH[a];
  }
  return out;
}

/// Nodewise D2H(Du) Dv.
template <class Real>
GridVectorField<Real> apply_hessian(const HamiltonianSpec& spec, const GridVectorField<Real>& Du,
                                    const GridVectorField<Real>& Dv) {
  const auto& grid = Du.grid();
  int d = grid.dim();
  GridVectorField<Real> out(grid);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    Vec2<Real> p{Du[0][j], d == 2 ? Du[1][j] : Real(0)};
    auto v = spec.eval(p, d);
    for (int a = 0; a < d; ++a) {
      Real s = 0;
      for (int b = 0; b < d; ++b) s += v.D2H[a][b] * Dv[b][j];
      out[a][j] = s;
    }
  }
  return out;
}

template <class Real>
GridField<Real> coupling_field(const CouplingSpec& c, const GridField<Real>& m) {
  GridField<Real> out(m.grid());
  for (std::size_t j = 0; j < m.size(); ++j) {
    try {
      out[j] = c.g(m[j]);
    } catch (const DomainError& e) {
      throw DomainError(std::string(e.what()) + " at node " + std::to_string(j), std::ptrdiff_t(j));
    }
  }
  return out;
}

/// Rejects the first node with m <= 0.
template <class Real>
void require_positive(const GridField<Real>& m, const char* who) {
  for (std::size_t j = 0; j < m.size(); ++j) {
    if (!(m[j] > 0)) {
      std::ostringstream msg;
      msg << who << ": density must be positive, m = " << to_double(m[j]) << " at node " << j;
      throw DomainError(msg.str(), std::ptrdiff_t(j));
    }
  }
}

template <class Real>
void require_nonnegative(const GridField<Real>& m, const char* who) {
  for (std::size_t j = 0; j < m.size(); ++j) {
    if (!(m[j] >= 0)) {
      std::ostringstream msg;
      msg << who << ": density must be nonnegative, m = " << to_double(m[j]) << " at node " << j;
      throw DomainError(msg.str(), std::ptrdiff_t(j));
    }
  }
}

template <class Real>
GridField<Real> penalty_field(const PenaltySpec& pen, const GridField<Real>& m) {
  GridField<Real> out(m.grid());
  for (std::size_t j = 0; j < m.size(); ++j) out[j] = pen.eval(m[j]).p;
  return out;
}

/// Pieces shared by every operator variant.
template <class Real>
struct OperatorParts {
  GridField<Real> H;              // H(Du)
  GridField<Real> g;              // g(m)
  GridField<Real> transport;      // div(m DpH(Du))
  GridField<Real> lap_u, lap_m;   // nu-free Laplacians (zero fields when nu = 0)
};

template <class Real>
OperatorParts<Real> operator_parts(const MFGProblem<Real>& pb, const StatePair<Real>& s) {
  s.m.require_finite("operator.m");
  s.u.require_finite("operator.u");
  if (!(s.grid() == pb.grid())) throw ValidationError("operator: state on wrong grid");
  auto Du = gradient(s.u);
  auto hf = eval_hamiltonian(pb.hamiltonian(), Du);
  GridVectorField<Real> flux(pb.grid());
  for (int a = 0; a < pb.dim(); ++a) flux[a] = hadamard(s.m, hf.DpH[a]);
  OperatorParts<Real> parts{std::move(hf.H), coupling_field(pb.coupling(), s.m), divergence(flux),
                            GridField<Real>(pb.grid()), GridField<Real>(pb.grid())};
  if (pb.nu() != 0.0) {
    parts.lap_u = laplacian(s.u);
    parts.lap_m = laplacian(s.m);
  }
  return parts;
}

template <class Real>
StatePair<Real> apply_F(const MFGProblem<Real>& pb, const StatePair<Real>& s) {
  auto P = operator_parts(pb, s);
  Real nu(pb.nu());
  StatePair<Real> e(pb.grid());
  for (std::size_t j = 0; j < s.m.size(); ++j) {
    e.m[j] = -s.u[j] + nu * P.lap_u[j] - P.H[j] + P.g[j] - pb.V()[j];
    e.u[j] = s.m[j] - nu * P.lap_m[j] - P.transport[j] - pb.phi()[j];
  }
  return e;
}

template <class Real>
StatePair<Real> apply_F_eps(const MFGProblem<Real>& pb, const RegParams& reg, const StatePair<Real>& s) {
  reg.validate();
  auto e = apply_F(pb, s);
  e.m += apply_reg(s.m, Real(reg.eps), reg.k);
  e.u += apply_reg(s.u, Real(reg.eps), reg.k);
  return e;
}

template <class Real>
StatePair<Real> apply_F_eps_lambda(const MFGProblem<Real>& pb, const RegParams& reg, const Real& lambda,
                                   const StatePair<Real>& s) {
  reg.validate();
  if (!(lambda >= 0 && lambda <= 1)) throw ValidationError("operator: lambda must lie in [0, 1]");
  require_positive(s.m, "penalized operator");
  auto P = operator_parts(pb, s);
  auto pen = penalty_field(reg.penalty(pb.dim()), s.m);
  Real nu(pb.nu());
  StatePair<Real> e(pb.grid());
  for (std::size_t j = 0; j < s.m.size(); ++j) {
    e.m[j] = -s.u[j] + lambda * (nu * P.lap_u[j] - P.H[j] + P.g[j] - pb.V()[j]) + pen[j];
    e.u[j] = s.m[j] - lambda * (nu * P.lap_m[j] + P.transport[j] + pb.phi()[j]) - (1 - lambda);
  }
  e.m += apply_reg(s.m, Real(reg.eps), reg.k);
  e.u += apply_reg(s.u, Real(reg.eps), reg.k);
  return e;
}

/// Frozen coefficients of the Picard map: f1 = e1(s1), f2 = -e2(s1) for F.
template <class Real>
StatePair<Real> frozen_rhs(const MFGProblem<Real>& pb, const StatePair<Real>& s1) {
  auto e = apply_F(pb, s1);
  e.u *= Real(-1);
  return e;
}

}  // namespace mmfg
