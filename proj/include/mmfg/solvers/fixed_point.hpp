#pragma once

// Damped fixed-point iteration x <- x + theta (A(x) - x) with automatic
// damping reduction and optional Anderson mixing. Shared by the stationary and
// time-dependent Picard solvers.

#include "mmfg/solvers/anderson.hpp"
#include "mmfg/solvers/obstacle.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace mmfg {

struct SolveReport {
  int iterations = 0;
  std::vector<double> residualHistory;
  double finalResidual = 0;
  double minM = 0;
  std::vector<std::pair<double, int>> lambdaPath;      // (lambda, Newton iterations)
  std::vector<std::pair<int, double>> dampingChanges;  // (iteration, new theta)
  SolveStatus status = SolveStatus::maxIter;
  std::string message;
  double seconds = 0;
};

struct PicardOptions {
  double theta = 0.5;
  double tol = 1e-7;
  int max_iter = 20000;
  int anderson_depth = 0;
  double anderson_start = 1e-2;  // mixing engages once the step falls below this
  int patience = 200;            // iterations without a new best step before halving theta
  double blowup = 1e3;           // halve theta when the step exceeds blowup * the first step at this theta
  double min_theta = 1e-6;
  double kkt_tol = 1e-9;

  void validate() const {
    if (!(theta > 0.0 && theta <= 1.0)) throw ValidationError("picard: damping must lie in (0, 1]");
    if (!(tol > 0.0)) throw ValidationError("picard: tolerance must be positive");
    if (max_iter < 1) throw ValidationError("picard: max_iter must be >= 1");
    if (anderson_depth < 0) throw ValidationError("picard: anderson depth must be >= 0");
  }
};

/// Runs the iteration from x (updated in place to the returned iterate).
/// `map` evaluates A, `residual` the system residual checked once the step is
/// small, `project` restores admissibility after each update.
template <class Real>
SolveReport damped_fixed_point(const std::function<Vector<Real>(const Vector<Real>&)>& map,
                               const std::function<double(const Vector<Real>&)>& residual,
                               const std::function<void(Vector<Real>&)>& project, Vector<Real>& x,
                               const PicardOptions& opt) {
  auto t0 = std::chrono::steady_clock::now();
  opt.validate();
  SolveReport rep;
  double theta = opt.theta;
  AndersonMixer<Real> mixer(opt.anderson_depth);
  Vector<Real> best_x = x;
  double best_step = std::numeric_limits<double>::infinity();
  double phase_first = -1;
  int since_best = 0;
  bool done = false;
  for (int it = 0; it < opt.max_iter; ++it) {
    rep.iterations = it + 1;
    Vector<Real> f = map(x);
    Real stepq = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      using std::abs;
      f[i] -= x[i];
      stepq = std::max(stepq, abs(f[i]));
    }
    double step = to_double(stepq);
    rep.residualHistory.push_back(step);
    if (!std::isfinite(step)) {
      rep.message = "non-finite Picard step";
      break;
    }
    if (step <= opt.tol) {
      double res = residual(x);
      if (res <= opt.tol) {
        rep.status = SolveStatus::converged;
        rep.finalResidual = std::max(step, res);
        done = true;
        break;
      }
    }
    if (phase_first < 0) phase_first = step;
    if (step < best_step) {
      best_step = step;
      best_x = x;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (step > opt.blowup * phase_first || since_best > opt.patience) {
      theta /= 2;
      rep.dampingChanges.emplace_back(it, theta);
      if (theta < opt.min_theta) {
        rep.message = "damping underflow";
        break;
      }
      x = best_x;
      since_best = 0;
      best_step = std::numeric_limits<double>::infinity();
      phase_first = -1;
      mixer.reset();
      continue;
    }
    if (opt.anderson_depth > 0 && step <= opt.anderson_start) {
      x = mixer.next(x, f, Real(theta));
    } else {
      mixer.reset();
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += Real(theta) * f[i];
    }
    project(x);
  }
  if (!done) {
    if (rep.message.empty()) rep.message = "iteration cap";
    x = best_x;
    rep.finalResidual = residual(x);
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace mmfg
