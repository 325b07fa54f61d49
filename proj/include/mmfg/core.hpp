#pragma once

// Scalar types, error classes and small numeric helpers shared by every module.

#include <boost/math/constants/constants.hpp>
#include <boost/multiprecision/float128.hpp>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace mmfg {

/// Working precision of the solvers. The regularizing symbols reach 1e16 and
/// beyond on moderate grids, so double precision cannot resolve residuals
/// below O(1) there.
using quad = boost::multiprecision::float128;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition was violated (bad sizes, parameters, grids).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A density left the domain where an operator is defined (m <= 0 for the
/// penalized or entropy operators, negative m where monotonicity is claimed).
class DomainError : public Error {
 public:
  DomainError(const std::string& what, std::ptrdiff_t node = -1)
      : Error(what), node_(node) {}
  std::ptrdiff_t node() const noexcept { return node_; }

 private:
  std::ptrdiff_t node_;
};

template <class Real>
inline Real pi() {
  return boost::math::constants::pi<Real>();
}

template <class Real>
inline Real two_pi() {
  return boost::math::constants::two_pi<Real>();
}

/// x^e for a non-negative integer exponent.
template <class Real>
inline Real ipow(Real x, unsigned e) {
  Real r = 1;
  while (e) {
    if (e & 1u) r *= x;
    x *= x;
    e >>= 1u;
  }
  return r;
}

template <class Real>
inline double to_double(const Real& x) {
  return static_cast<double>(x);
}

template <class Real>
inline bool is_finite(const Real& x) {
  using std::isfinite;
  using boost::multiprecision::isfinite;
  return isfinite(x);
}

}  // namespace mmfg
