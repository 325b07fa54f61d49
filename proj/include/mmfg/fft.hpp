#pragma once

// Thin wrapper over FFTW for double and quad precision. Plans are created
// once per (rank, n, direction) under a mutex; execution uses the new-array
// interface and is safe from concurrent callers.

#include "mmfg/core.hpp"

#include <fftw3.h>

#include <array>
#include <complex>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

namespace mmfg::fft {

template <class Real>
struct Backend;

template <>
struct Backend<double> {
  using plan_type = fftw_plan;
  using native_complex = fftw_complex;
  static plan_type make(int rank, const int* n, native_complex* in, native_complex* out,
                        int sign) {
    return fftw_plan_dft(rank, n, in, out, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  static void execute(plan_type p, native_complex* in, native_complex* out) {
    fftw_execute_dft(p, in, out);
  }
  static void destroy(plan_type p) { fftw_destroy_plan(p); }
};

template <>
struct Backend<quad> {
  using plan_type = fftwq_plan;
  using native_complex = fftwq_complex;
  static plan_type make(int rank, const int* n, native_complex* in, native_complex* out,
                        int sign) {
    return fftwq_plan_dft(rank, n, in, out, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  static void execute(plan_type p, native_complex* in, native_complex* out) {
    fftwq_execute_dft(p, in, out);
  }
  static void destroy(plan_type p) { fftwq_destroy_plan(p); }
};

static_assert(sizeof(std::complex<quad>) == sizeof(fftwq_complex));
static_assert(sizeof(std::complex<double>) == sizeof(fftw_complex));

template <class Real>
class PlanCache {
 public:
  using B = Backend<Real>;
  using Key = std::tuple<int, int, int>;

  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  typename B::plan_type get(int rank, int n, int sign) {
    std::lock_guard<std::mutex> lock(mutex_);
    Key key{rank, n, sign};
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    std::array<int, 2> dims{n, n};
    std::size_t total = rank == 1 ? std::size_t(n) : std::size_t(n) * std::size_t(n);
    std::vector<std::complex<Real>> a(total), b(total);
    auto p = B::make(rank, dims.data(), native(a.data()), native(b.data()), sign);
    plans_.emplace(key, p);
    return p;
  }

  ~PlanCache() {
    for (auto& kv : plans_) B::destroy(kv.second);
  }

  static typename B::native_complex* native(std::complex<Real>* p) {
    return reinterpret_cast<typename B::native_complex*>(p);
  }

 private:
  PlanCache() = default;
  std::mutex mutex_;
  std::map<Key, typename B::plan_type> plans_;
};

/// Unnormalized forward transform (sign -1) of a rank-1 or rank-2 array of
/// n^rank points, row-major.
template <class Real>
void forward(int rank, int n, std::vector<std::complex<Real>>& in,
             std::vector<std::complex<Real>>& out) {
  auto& cache = PlanCache<Real>::instance();
  out.resize(in.size());
  Backend<Real>::execute(cache.get(rank, n, FFTW_FORWARD), cache.native(in.data()),
                         cache.native(out.data()));
}

/// Unnormalized backward transform (sign +1).
template <class Real>
void backward(int rank, int n, std::vector<std::complex<Real>>& in,
              std::vector<std::complex<Real>>& out) {
  auto& cache = PlanCache<Real>::instance();
  out.resize(in.size());
  Backend<Real>::execute(cache.get(rank, n, FFTW_BACKWARD), cache.native(in.data()),
                         cache.native(out.data()));
}

}  // namespace mmfg::fft
