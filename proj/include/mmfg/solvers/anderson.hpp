#pragma once

// Anderson mixing for damped fixed-point iterations x <- x + theta (G(x) - x).

#include "mmfg/solvers/linear.hpp"

#include <Eigen/Dense>
#include <boost/multiprecision/eigen.hpp>

#include <deque>

namespace mmfg {

template <class Real>
class AndersonMixer {
 public:
  explicit AndersonMixer(int depth) : depth_(depth) {}

  void reset() {
    dx_.clear();
    df_.clear();
    have_prev_ = false;
  }

  /// Given x and f = G(x) - x, returns the next iterate.
  Vector<Real> next(const Vector<Real>& x, const Vector<Real>& f, const Real& theta) {
    const std::size_t n = x.size();
    if (have_prev_ && depth_ > 0) {
      Vector<Real> a(n), b(n);
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = x[i] - x_prev_[i];
        b[i] = f[i] - f_prev_[i];
      }
      dx_.push_back(std::move(a));
      df_.push_back(std::move(b));
      if (int(dx_.size()) > depth_) {
        dx_.pop_front();
        df_.pop_front();
      }
    }
    x_prev_ = x;
    f_prev_ = f;
    have_prev_ = true;
    Vector<Real> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + theta * f[i];
    if (dx_.empty()) return out;
    // gamma = argmin |f - DF gamma|, regularized normal equations.
    const int m = int(dx_.size());
    using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
    using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
    Mat M(m, m);
    Vec rhs(m);
    for (int p = 0; p < m; ++p) {
      rhs(p) = detail::dot(df_[std::size_t(p)], f);
      for (int q = 0; q <= p; ++q) M(p, q) = M(q, p) = detail::dot(df_[std::size_t(p)], df_[std::size_t(q)]);
    }
    Real trace = 0;
    for (int p = 0; p < m; ++p) trace += M(p, p);
    for (int p = 0; p < m; ++p) M(p, p) += Real(1e-20) * trace + Real(1e-300);
    Vec gamma = M.ldlt().solve(rhs);
    for (int p = 0; p < m; ++p) {
      const auto& a = dx_[std::size_t(p)];
      const auto& b = df_[std::size_t(p)];
      for (std::size_t i = 0; i < n; ++i) out[i] -= gamma(p) * (a[i] + theta * b[i]);
    }
    return out;
  }

 private:
  int depth_;
  std::deque<Vector<Real>> dx_, df_;
  Vector<Real> x_prev_, f_prev_;
  bool have_prev_ = false;
};

}  // namespace mmfg
