#pragma once

// Monotonicity certificates, weak-VI residuals, seeded test banks and a priori
// quantities for the stationary operators.

#include "mmfg/model.hpp"

#include <array>
#include <cmath>
#include <complex>
#include <optional>
#include <random>
#include <vector>

namespace mmfg {

/// Which member of the operator family a certificate is about.
struct OperatorChoice {
  std::optional<RegParams> reg;  // none: plain F
  double lambda = 1.0;           // used by the penalized variant only

  static OperatorChoice plain() { return {}; }
  static OperatorChoice regularized(RegParams r) { return {r, 1.0}; }
};

template <class Real>
StatePair<Real> apply_operator(const MFGProblem<Real>& pb, const OperatorChoice& op, const StatePair<Real>& s) {
  if (!op.reg) return apply_F(pb, s);
  if (op.reg->variant == RegVariant::penalized) return apply_F_eps_lambda(pb, *op.reg, Real(op.lambda), s);
  return apply_F_eps(pb, *op.reg, s);
}

template <class Real>
struct GapBreakdown {
  Real bregman1 = 0;  // lambda * int m1 [H(Du2) - H(Du1) - DpH(Du1).(Du2 - Du1)]
  Real bregman2 = 0;  // lambda * int m2 [H(Du1) - H(Du2) - DpH(Du2).(Du1 - Du2)]
  Real coupling = 0;  // lambda * int (g(m1) - g(m2))(m1 - m2)
  Real penalty = 0;   // int (p(m1) - p(m2))(m1 - m2)
  Real reg = 0;       // eps (|dm|^2 + |Lap^k dm|^2 + |du|^2 + |Lap^k du|^2)
  Real total = 0;     // <Op(s1) - Op(s2), s1 - s2> from operator applications
  Real sum_of_parts() const { return bregman1 + bregman2 + coupling + penalty + reg; }
  /// |total - sum| relative to the sum of part magnitudes.
  Real mismatch() const {
    using std::abs;
    Real scale = abs(bregman1) + abs(bregman2) + abs(coupling) + abs(penalty) + abs(reg);
    Real diff = abs(total - sum_of_parts());
    if (scale == 0) return diff;
    return diff / scale;
  }
};

namespace detail {

template <class Real>
Real bregman_integral(const HamiltonianSpec& ham, const GridField<Real>& weight, const GridVectorField<Real>& Dp,
                      const GridVectorField<Real>& Dq) {
  const auto& grid = weight.grid();
  int d = grid.dim();
  Real s = 0;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    Vec2<Real> p{Dp[0][j], d == 2 ? Dp[1][j] : Real(0)};
    Vec2<Real> q{Dq[0][j], d == 2 ? Dq[1][j] : Real(0)};
    auto hp = ham.eval(p, d);
    auto hq = ham.eval(q, d);
    Real b = hq.H - hp.H;
    for (int a = 0; a < d; ++a) b -= hp.DpH[a] * (q[a] - p[a]);
    s += weight[j] * b;
  }
  return s * grid.template cell_volume<Real>();
}

}  // namespace detail

template <class Real>
GapBreakdown<Real> monotonicity_gap(const MFGProblem<Real>& pb, const OperatorChoice& op, const StatePair<Real>& s1,
                                    const StatePair<Real>& s2) {
  s1.m.check_same(s2.m);
  bool penalized = op.reg && op.reg->variant == RegVariant::penalized;
  if (penalized) {
    require_positive(s1.m, "monotonicity_gap(s1)");
    require_positive(s2.m, "monotonicity_gap(s2)");
  } else {
    require_nonnegative(s1.m, "monotonicity_gap(s1)");
    require_nonnegative(s2.m, "monotonicity_gap(s2)");
  }
  Real lambda = penalized ? Real(op.lambda) : Real(1);

  GapBreakdown<Real> out;
  auto diff = s1 - s2;
  out.total = inner(apply_operator(pb, op, s1) - apply_operator(pb, op, s2), diff);

  auto Du1 = gradient(s1.u);
  auto Du2 = gradient(s2.u);
  const auto& ham = pb.hamiltonian();
  out.bregman1 = lambda * detail::bregman_integral(ham, s1.m, Du1, Du2);
  out.bregman2 = lambda * detail::bregman_integral(ham, s2.m, Du2, Du1);
  auto g1 = coupling_field(pb.coupling(), s1.m);
  auto g2 = coupling_field(pb.coupling(), s2.m);
  out.coupling = lambda * inner(g1 - g2, diff.m);
  if (penalized) {
    auto pen = op.reg->penalty(pb.dim());
    out.penalty = inner(penalty_field(pen, s1.m) - penalty_field(pen, s2.m), diff.m);
  }
  if (op.reg) {
    int k = op.reg->k;
    auto lm = laplacian_power(diff.m, k);
    auto lu = laplacian_power(diff.u, k);
    out.reg = Real(op.reg->eps) * (inner(diff.m, diff.m) + inner(lm, lm) + inner(diff.u, diff.u) + inner(lu, lu));
  }
  return out;
}

/// <F(test), candidate - test> with the unregularized F.
template <class Real>
Real weak_vi_residual(const MFGProblem<Real>& pb, const StatePair<Real>& candidate, const StatePair<Real>& test) {
  candidate.m.check_same(test.m);
  require_nonnegative(test.m, "weak_vi_residual(test)");
  return inner(apply_F(pb, test), candidate - test);
}

enum class BankConstraint { nonneg, unit_mass_nonneg };

struct BankOptions {
  int cutoff = 0;          // highest wavenumber of the random series; 0 means n/8
  double delta0 = 0.05;    // floor added to every w
  bool canonical = true;   // prepend (phi, 0) and (1, 0)
};

namespace detail {

/// sum over |xi| <= c of a_xi cos(2 pi xi.x) + b_xi sin(2 pi xi.x), coefficients N(0,1)/(1+|xi|^2),
/// scaled to unit max-norm.
template <class Real>
GridField<Real> random_trig_field(const TorusGrid& grid, int cutoff, std::mt19937_64& rng, bool with_mean) {
  std::normal_distribution<double> normal(0.0, 1.0);
  GridField<Real> f(grid);
  int d = grid.dim(), n = grid.n();
  // Real part of one backward FFT of the half-plane coefficients a - i b.
  std::size_t rows = d == 2 ? std::size_t(n) : 1;
  std::vector<std::complex<Real>> spec(rows * std::size_t(n)), vals;
  auto wrap = [n](int k) { return std::size_t(((k % n) + n) % n); };
  for (int k0 = 0; k0 <= cutoff; ++k0) {
    for (int k1 = (d == 2 ? -cutoff : 0); k1 <= (d == 2 ? cutoff : 0); ++k1) {
      if (k0 == 0 && k1 < 0) continue;  // half plane
      bool zero = k0 == 0 && k1 == 0;
      double decay = 1.0 / (1.0 + double(k0 * k0 + k1 * k1));
      double a = normal(rng) * decay, b = normal(rng) * decay;
      if (zero && !with_mean) continue;
      std::size_t at = d == 2 ? wrap(k0) * std::size_t(n) + wrap(k1) : wrap(k0);
      spec[at] = std::complex<Real>(Real(a), Real(zero ? 0.0 : -b));
    }
  }
  fft::backward<Real>(d, n, spec, vals);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    auto x = grid.coordinate<double>(j);
    std::size_t i0 = std::size_t(std::lround(x[0] * n)) % std::size_t(n);
    std::size_t i1 = d == 2 ? std::size_t(std::lround(x[1] * n)) % std::size_t(n) : 0;
    f[j] = vals[d == 2 ? i0 * std::size_t(n) + i1 : i0].real();
  }
  Real mx = norm_inf(f);
  if (mx > 0) f *= Real(1) / mx;
  return f;
}

}  // namespace detail

/// Seeded admissible test pairs (w, v): w = squared random series plus a floor,
/// v = random series. Deterministic per seed.
template <class Real>
std::vector<StatePair<Real>> make_test_bank(const TorusGrid& grid, int count, std::uint64_t seed,
                                            BankConstraint constraint, const GridField<Real>* phi = nullptr,
                                            BankOptions opt = {}) {
  if (count < 1) throw ValidationError("test bank: count must be >= 1");
  if (!(opt.delta0 > 0.0 && opt.delta0 < 1.0)) throw ValidationError("test bank: delta0 must lie in (0, 1)");
  int cutoff = opt.cutoff > 0 ? opt.cutoff : grid.n() / 8;
  std::vector<StatePair<Real>> bank;
  if (opt.canonical) {
    GridField<Real> one(grid, Real(1));
    bank.emplace_back(phi ? *phi : one, GridField<Real>(grid));
    if (int(bank.size()) < count) bank.emplace_back(one, GridField<Real>(grid));
  }
  std::mt19937_64 rng(seed);
  Real delta(opt.delta0);
  while (int(bank.size()) < count) {
    auto f = detail::random_trig_field<Real>(grid, cutoff, rng, true);
    auto f2 = hadamard(f, f);
    GridField<Real> w(grid);
    if (constraint == BankConstraint::unit_mass_nonneg) {
      w = f2 * ((1 - delta) / integrate(f2));
      w += delta;
    } else {
      w = f2;
      w += delta;
    }
    auto v = detail::random_trig_field<Real>(grid, cutoff, rng, true);
    bank.emplace_back(std::move(w), std::move(v));
  }
  return bank;
}

template <class Real>
struct AprioriRecord {
  Real mgm = 0, mDu = 0, phiDu = 0, regQuad = 0;
  Real penMass = 0, penGap = 0;  // penalized variant only
  Real intM = 0, intU = 0, intUM = 0, intH = 0, minM = 0;
  bool nonneg_ok = true;         // every flagged quantity >= -tol
  std::vector<std::string> violations;
};

template <class Real>
AprioriRecord<Real> apriori_quantities(const MFGProblem<Real>& pb, const RegParams& reg, double lambda,
                                       const StatePair<Real>& s) {
  using std::abs;
  using std::pow;
  bool penalized = reg.variant == RegVariant::penalized;
  if (penalized)
    require_positive(s.m, "apriori_quantities");
  else
    require_nonnegative(s.m, "apriori_quantities");
  AprioriRecord<Real> r;
  const auto& grid = pb.grid();
  auto Du = gradient(s.u);
  auto hf = eval_hamiltonian(pb.hamiltonian(), Du);
  GridField<Real> pw(grid);
  Real a(pb.hamiltonian().alpha);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    Real p2 = 0;
    for (int c = 0; c < grid.dim(); ++c) p2 += Du[c][j] * Du[c][j];
    using std::sqrt;
    pw[j] = p2 == 0 ? Real(0) : pow(sqrt(p2), a);
  }
  r.mgm = inner(s.m, coupling_field(pb.coupling(), s.m));
  r.mDu = inner(s.m, pw);
  r.phiDu = inner(pb.phi(), pw);
  auto lm = laplacian_power(s.m, reg.k);
  auto lu = laplacian_power(s.u, reg.k);
  r.regQuad = Real(reg.eps) * (inner(s.m, s.m) + inner(lm, lm) + inner(s.u, s.u) + inner(lu, lu));
  if (penalized) {
    auto pen = penalty_field(reg.penalty(pb.dim()), s.m);
    Real lam(lambda);
    GridField<Real> w = pb.phi() * lam;
    w += (1 - lam);
    r.penMass = -inner(pen, w);
    GridField<Real> shifted = s.m;
    shifted += -Real(reg.eps);
    r.penGap = inner(pen, shifted);
  }
  r.intM = integrate(s.m);
  r.intU = integrate(s.u);
  r.intUM = inner(s.u, s.m);
  r.intH = integrate(hf.H);
  r.minM = min_value(s.m);
  Real tol = Real(1e-12);
  auto flag = [&](const char* name, const Real& v) {
    if (v < -tol) {
      r.nonneg_ok = false;
      r.violations.emplace_back(name);
    }
  };
  if (pb.coupling().kind != CouplingKind::entropy) flag("mgm", r.mgm);
  flag("mDu", r.mDu);
  flag("phiDu", r.phiDu);
  flag("regQuad", r.regQuad);
  if (penalized) {
    flag("penMass", r.penMass);
    flag("penGap", r.penGap);
  }
  return r;
}

}  // namespace mmfg
