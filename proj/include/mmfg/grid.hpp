#pragma once

// Uniform periodic grids on the unit torus in one or two dimensions, real
// fields on them, and Fourier-spectral differential operators.
//
// Pairing: <f, g> = h^d * sum_j f_j g_j. The spectral divergence is the exact
// negative adjoint of the spectral gradient under this pairing; the
// first-derivative symbol vanishes at the Nyquist wavenumber -n/2 so both
// stay real. Even powers of the Laplacian keep the Nyquist symbol.

#include "mmfg/core.hpp"
#include "mmfg/fft.hpp"

#include <algorithm>
#include <array>
#include <complex>
#include <functional>
#include <sstream>
#include <vector>

namespace mmfg {

class TorusGrid {
 public:
  TorusGrid(int dim, int n) : dim_(dim), n_(n) {
    if (dim != 1 && dim != 2) throw ValidationError("grid: dimension must be 1 or 2");
    if (n < 8 || (n & (n - 1)) != 0)
      throw ValidationError("grid: nodes per axis must be a power of two >= 8");
  }

  int dim() const noexcept { return dim_; }
  int n() const noexcept { return n_; }
  std::size_t size() const noexcept {
    return dim_ == 1 ? std::size_t(n_) : std::size_t(n_) * std::size_t(n_);
  }
  double spacing() const noexcept { return 1.0 / n_; }

  /// h^d as an exact power of two in any binary floating type.
  template <class Real>
  Real cell_volume() const {
    Real h = Real(1) / Real(n_);
    return dim_ == 1 ? h : h * h;
  }

  /// Integer frequency of index j along one axis, in [-n/2, n/2).
  int wavenumber(int j) const noexcept { return j < n_ / 2 ? j : j - n_; }
  bool is_nyquist(int xi) const noexcept { return xi == -n_ / 2; }

  /// Per-axis frequencies of a flat (row-major) index.
  std::array<int, 2> frequencies(std::size_t flat) const noexcept {
    if (dim_ == 1) return {wavenumber(int(flat)), 0};
    return {wavenumber(int(flat / std::size_t(n_))), wavenumber(int(flat % std::size_t(n_)))};
  }

  std::array<int, 2> multi_index(std::size_t flat) const noexcept {
    if (dim_ == 1) return {int(flat), 0};
    return {int(flat / std::size_t(n_)), int(flat % std::size_t(n_))};
  }

  template <class Real>
  std::array<Real, 2> coordinate(std::size_t flat) const {
    auto j = multi_index(flat);
    return {Real(j[0]) / Real(n_), Real(j[1]) / Real(n_)};
  }

  friend bool operator==(const TorusGrid&, const TorusGrid&) = default;

 private:
  int dim_;
  int n_;
};

template <class Real>
class GridField {
 public:
  using value_type = Real;

  explicit GridField(const TorusGrid& grid, Real fill = Real(0))
      : grid_(grid), values_(grid.size(), fill) {}
  GridField(const TorusGrid& grid, std::vector<Real> values)
      : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size())
      throw ValidationError("field: value count does not match grid size");
  }

  /// Samples f(x) at every node; f receives a std::array<Real, 2> coordinate.
  template <class Fn>
  static GridField from_function(const TorusGrid& grid, Fn&& fn) {
    GridField out(grid);
    for (std::size_t j = 0; j < grid.size(); ++j) out.values_[j] = Real(fn(grid.coordinate<Real>(j)));
    return out;
  }

  const TorusGrid& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return values_.size(); }
  Real& operator[](std::size_t j) { return values_[j]; }
  const Real& operator[](std::size_t j) const { return values_[j]; }
  std::vector<Real>& values() noexcept { return values_; }
  const std::vector<Real>& values() const noexcept { return values_; }

  GridField& operator+=(const GridField& o) {
    check_same(o);
    for (std::size_t j = 0; j < size(); ++j) values_[j] += o.values_[j];
    return *this;
  }
  GridField& operator-=(const GridField& o) {
    check_same(o);
    for (std::size_t j = 0; j < size(); ++j) values_[j] -= o.values_[j];
    return *this;
  }
  GridField& operator*=(const Real& s) {
    for (auto& v : values_) v *= s;
    return *this;
  }
  GridField& operator+=(const Real& s) {
    for (auto& v : values_) v += s;
    return *this;
  }

  friend GridField operator+(GridField a, const GridField& b) { return a += b; }
  friend GridField operator-(GridField a, const GridField& b) { return a -= b; }
  friend GridField operator*(GridField a, const Real& s) { return a *= s; }
  friend GridField operator*(const Real& s, GridField a) { return a *= s; }
  friend GridField operator-(GridField a) { return a *= Real(-1); }

  void check_same(const GridField& o) const {
    if (!(grid_ == o.grid_)) throw ValidationError("field: grid mismatch");
  }

  /// Throws naming the first non-finite node.
  void require_finite(const char* who) const {
    for (std::size_t j = 0; j < size(); ++j) {
      if (!is_finite(values_[j])) {
        std::ostringstream msg;
        msg << who << ": non-finite value at node " << j;
        throw ValidationError(msg.str());
      }
    }
  }

  template <class Other>
  GridField<Other> cast() const {
    std::vector<Other> v(size());
    for (std::size_t j = 0; j < size(); ++j) v[j] = Other(values_[j]);
    return GridField<Other>(grid_, std::move(v));
  }

 private:
  TorusGrid grid_;
  std::vector<Real> values_;
};

template <class Real>
class GridVectorField {
 public:
  explicit GridVectorField(const TorusGrid& grid) : components_(grid.dim(), GridField<Real>(grid)) {}
  explicit GridVectorField(std::vector<GridField<Real>> comps) : components_(std::move(comps)) {
    if (components_.empty()) throw ValidationError("vector field: no components");
    for (auto& c : components_) {
      if (!(c.grid() == components_.front().grid()))
        throw ValidationError("vector field: components live on different grids");
    }
    if (int(components_.size()) != components_.front().grid().dim())
      throw ValidationError("vector field: component count must equal the grid dimension");
  }

  const TorusGrid& grid() const { return components_.front().grid(); }
  int dim() const { return int(components_.size()); }
  GridField<Real>& operator[](int a) { return components_[std::size_t(a)]; }
  const GridField<Real>& operator[](int a) const { return components_[std::size_t(a)]; }

 private:
  std::vector<GridField<Real>> components_;
};

template <class Real>
GridField<Real> hadamard(const GridField<Real>& a, const GridField<Real>& b) {
  a.check_same(b);
  GridField<Real> out(a.grid());
  for (std::size_t j = 0; j < a.size(); ++j) out[j] = a[j] * b[j];
  return out;
}

/// Nodewise map.
template <class Real, class Fn>
GridField<Real> map_field(const GridField<Real>& a, Fn&& fn) {
  GridField<Real> out(a.grid());
  for (std::size_t j = 0; j < a.size(); ++j) out[j] = fn(a[j]);
  return out;
}

template <class Real>
Real integrate(const GridField<Real>& f) {
  Real s = 0;
  for (const auto& v : f.values()) s += v;
  return s * f.grid().template cell_volume<Real>();
}

template <class Real>
Real inner(const GridField<Real>& f, const GridField<Real>& g) {
  f.check_same(g);
  Real s = 0;
  for (std::size_t j = 0; j < f.size(); ++j) s += f[j] * g[j];
  return s * f.grid().template cell_volume<Real>();
}

template <class Real>
Real inner(const GridVectorField<Real>& a, const GridVectorField<Real>& b) {
  Real s = 0;
  for (int c = 0; c < a.dim(); ++c) s += inner(a[c], b[c]);
  return s;
}

template <class Real>
Real norm_l2(const GridField<Real>& f) {
  using std::sqrt;
  return sqrt(inner(f, f));
}

template <class Real>
Real norm_inf(const GridField<Real>& f) {
  using std::abs;
  Real m = 0;
  for (const auto& v : f.values()) m = std::max<Real>(m, abs(v));
  return m;
}

template <class Real>
Real min_value(const GridField<Real>& f) {
  return *std::min_element(f.values().begin(), f.values().end());
}

template <class Real>
Real max_value(const GridField<Real>& f) {
  return *std::max_element(f.values().begin(), f.values().end());
}

namespace spectral {

template <class Real>
using Spectrum = std::vector<std::complex<Real>>;

template <class Real>
Spectrum<Real> transform(const GridField<Real>& f) {
  Spectrum<Real> in(f.size()), out;
  for (std::size_t j = 0; j < f.size(); ++j) in[j] = std::complex<Real>(f[j], Real(0));
  fft::forward<Real>(f.grid().dim(), f.grid().n(), in, out);
  return out;
}

/// Inverse transform, normalized; returns the real part. If `imag_max` is
/// given it receives the largest discarded imaginary magnitude.
template <class Real>
GridField<Real> inverse(const TorusGrid& grid, Spectrum<Real>& spec, Real* imag_max = nullptr) {
  using std::abs;
  Spectrum<Real> out;
  fft::backward<Real>(grid.dim(), grid.n(), spec, out);
  GridField<Real> f(grid);
  Real scale = Real(1) / Real(grid.size());
  Real worst = 0;
  for (std::size_t j = 0; j < f.size(); ++j) {
    f[j] = out[j].real() * scale;
    worst = std::max<Real>(worst, abs(out[j].imag() * scale));
  }
  if (imag_max) *imag_max = worst;
  return f;
}

/// Symbol of the spectral derivative along `axis`: i 2 pi xi, zero at Nyquist.
template <class Real>
std::complex<Real> derivative_symbol(const TorusGrid& grid, const std::array<int, 2>& xi, int axis) {
  if (grid.is_nyquist(xi[std::size_t(axis)])) return {Real(0), Real(0)};
  return {Real(0), two_pi<Real>() * Real(xi[std::size_t(axis)])};
}

/// 4 pi^2 |xi|^2, i.e. minus the Laplacian symbol.
template <class Real>
Real neg_laplacian_symbol(const TorusGrid& grid, const std::array<int, 2>& xi) {
  Real s = Real(xi[0]) * Real(xi[0]);
  if (grid.dim() == 2) s += Real(xi[1]) * Real(xi[1]);
  Real tp = two_pi<Real>();
  return tp * tp * s;
}

/// Applies a per-mode multiplier; `symbol(xi)` returns a real or complex value.
template <class Real, class Symbol>
GridField<Real> apply(const GridField<Real>& f, Symbol&& symbol, Real* imag_max = nullptr) {
  auto spec = transform(f);
  const auto& grid = f.grid();
  for (std::size_t j = 0; j < spec.size(); ++j) spec[j] *= symbol(grid.frequencies(j));
  return inverse(grid, spec, imag_max);
}

/// f with every mode of wavenumber above `cutoff` (max-norm over axes) removed.
template <class Real>
GridField<Real> truncate(const GridField<Real>& f, int cutoff) {
  return apply(f, [&](const std::array<int, 2>& xi) {
    return (std::abs(xi[0]) <= cutoff && std::abs(xi[1]) <= cutoff) ? Real(1) : Real(0);
  });
}

/// Largest wavenumber (max-norm) carrying a coefficient above tol * max coefficient.
template <class Real>
int support_radius(const GridField<Real>& f, double tol = 1e-20) {
  using std::abs;
  auto spec = transform(f);
  Real biggest = 0;
  for (auto& c : spec) biggest = std::max<Real>(biggest, abs(c));
  int radius = 0;
  for (std::size_t j = 0; j < spec.size(); ++j) {
    if (abs(spec[j]) > Real(tol) * biggest) {
      auto xi = f.grid().frequencies(j);
      radius = std::max({radius, std::abs(xi[0]), std::abs(xi[1])});
    }
  }
  return radius;
}

}  // namespace spectral

template <class Real>
GridVectorField<Real> gradient(const GridField<Real>& f) {
  f.require_finite("gradient");
  const auto& grid = f.grid();
  auto spec = spectral::transform(f);
  std::vector<GridField<Real>> comps;
  for (int a = 0; a < grid.dim(); ++a) {
    spectral::Spectrum<Real> s(spec.size());
    for (std::size_t j = 0; j < spec.size(); ++j)
      s[j] = spec[j] * spectral::derivative_symbol<Real>(grid, grid.frequencies(j), a);
    comps.push_back(spectral::inverse(grid, s));
  }
  return GridVectorField<Real>(std::move(comps));
}

namespace test_hooks {
/// Mutation switch for the verify suite: when set, divergence returns its
/// negative. Never set outside mutation testing.
inline bool flip_divergence_sign = false;
}  // namespace test_hooks

/// Sum over axes of the spectral derivative of each component.
template <class Real>
GridField<Real> divergence(const GridVectorField<Real>& v) {
  const auto& grid = v.grid();
  spectral::Spectrum<Real> acc(grid.size(), std::complex<Real>(0, 0));
  for (int a = 0; a < v.dim(); ++a) {
    v[a].require_finite("divergence");
    auto s = spectral::transform(v[a]);
    for (std::size_t j = 0; j < s.size(); ++j)
      acc[j] += s[j] * spectral::derivative_symbol<Real>(grid, grid.frequencies(j), a);
  }
  if (test_hooks::flip_divergence_sign)
    for (auto& c : acc) c = -c;
  return spectral::inverse(grid, acc);
}

/// Delta^j with symbol (-4 pi^2 |xi|^2)^j.
template <class Real>
GridField<Real> laplacian_power(const GridField<Real>& f, int j) {
  if (j < 1) throw ValidationError("laplacian_power: exponent must be >= 1");
  f.require_finite("laplacian_power");
  const auto& grid = f.grid();
  Real sign = (j % 2) ? Real(-1) : Real(1);
  return spectral::apply(f, [&](const std::array<int, 2>& xi) {
    return sign * ipow(spectral::neg_laplacian_symbol<Real>(grid, xi), unsigned(j));
  });
}

template <class Real>
GridField<Real> laplacian(const GridField<Real>& f) {
  return laplacian_power(f, 1);
}

/// Symbol of eps (I + Delta^{2k}): eps (1 + (4 pi^2 |xi|^2)^{2k}).
template <class Real>
Real reg_symbol(const TorusGrid& grid, const std::array<int, 2>& xi, const Real& eps, int k) {
  return eps * (Real(1) + ipow(spectral::neg_laplacian_symbol<Real>(grid, xi), unsigned(2 * k)));
}

/// f -> eps (f + Delta^{2k} f).
template <class Real>
GridField<Real> apply_reg(const GridField<Real>& f, const Real& eps, int k) {
  if (!(eps > 0)) throw ValidationError("apply_reg: epsilon must be positive");
  if (k < 1) throw ValidationError("apply_reg: order k must be >= 1");
  f.require_finite("apply_reg");
  const auto& grid = f.grid();
  return spectral::apply(f, [&](const std::array<int, 2>& xi) { return reg_symbol(grid, xi, eps, k); });
}

}  // namespace mmfg
