#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "distcast/core/errors.hpp"
#include "distcast/weather/variogram.hpp"

namespace distcast::weather {

struct KrigingResult {
  double estimate = 0.0;
  double variance = 0.0;
  Eigen::VectorXd weights;
  bool negative_weights = false;
  bool regularized = false;  // solved after a diagonal jitter
};

/// Ordinary kriging at `target`. The unbiasedness constraint is a Lagrange row, so weights
/// sum to one. A singular system gets one jittered retry before failing.
inline KrigingResult krige_point(const std::vector<Observation>& obs, const Variogram& v,
                                 const Point& target) {
  const auto n = static_cast<Eigen::Index>(obs.size());
  if (n < 2) throw PreconditionError("kriging needs at least two stations");
  KrigingResult r;
  if (v.degenerate && v.nugget <= 0.0) {
    // No spatial structure: every unbiased linear predictor is the plain mean.
    r.weights = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    for (const auto& o : obs) r.estimate += o.value / static_cast<double>(n);
    return r;
  }
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n + 1, n + 1);
  Eigen::VectorXd rhs(n + 1);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      A(a, b) = a == b ? 0.0 : v(distance(obs[a].at, obs[b].at));
    }
    A(a, n) = A(n, a) = 1.0;
    const double h = distance(obs[a].at, target);
    rhs(a) = h > 0.0 ? v(h) : 0.0;
  }
  rhs(n) = 1.0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible()) {
    const double jitter = 1e-10 * std::max(v.sill(), 1e-12);
    for (Eigen::Index a = 0; a < n; ++a) A(a, a) -= jitter;
    lu.compute(A);
    r.regularized = true;
    if (!lu.isInvertible()) throw ConvergenceError("singular kriging system");
  }
  const Eigen::VectorXd sol = lu.solve(rhs);
  r.weights = sol.head(n);
  for (Eigen::Index a = 0; a < n; ++a) r.estimate += r.weights(a) * obs[a].value;
  r.variance = std::max(0.0, r.weights.dot(rhs.head(n)) + sol(n));
  r.negative_weights = (r.weights.array() < -1e-12).any();
  return r;
}

}  // namespace distcast::weather
