#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

namespace distcast {

struct OptimOptions {
  double grad_tol = 1e-5;  // on ||g||_inf / max(1, |f|)
  int max_iter = 500;
};

struct OptimResult {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  Eigen::VectorXd g;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string message;

  double relative_gradient() const {
    return g.size() ? g.lpNorm<Eigen::Infinity>() / std::max(1.0, std::abs(f)) : 0.0;
  }
};

/// Objective returning f(x) and writing the gradient into g. Non-finite values reject a step.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// BFGS on the inverse Hessian with Armijo backtracking. Updates that would break positive
/// definiteness are skipped.
inline OptimResult minimize_bfgs(const Objective& fg, Eigen::VectorXd x0,
                                 const OptimOptions& opt = {}) {
  const auto n = x0.size();
  OptimResult r;
  r.x = std::move(x0);
  r.g.resize(n);
  r.f = fg(r.x, r.g);
  r.evaluations = 1;
  if (!std::isfinite(r.f) || !r.g.allFinite()) {
    r.message = "objective not finite at the starting point";
    return r;
  }
  if (n == 0) {
    r.converged = true;
    return r;
  }
  Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  Eigen::VectorXd g_new(n);
  for (r.iterations = 0; r.iterations < opt.max_iter; ++r.iterations) {
    if (r.relative_gradient() <= opt.grad_tol) {
      r.converged = true;
      r.message = "gradient tolerance reached";
      return r;
    }
    Eigen::VectorXd d = -Hinv * r.g;
    double slope = r.g.dot(d);
    if (!(slope < 0.0)) {
      Hinv.setIdentity();
      d = -r.g;
      slope = r.g.dot(d);
    }
    double step = scaled ? 1.0 : std::min(1.0, 1.0 / r.g.lpNorm<Eigen::Infinity>());
    double f_new = std::numeric_limits<double>::infinity();
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      x_new = r.x + step * d;
      f_new = fg(x_new, g_new);
      ++r.evaluations;
      if (std::isfinite(f_new) && g_new.allFinite() && f_new <= r.f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      r.message = "line search failed";
      return r;
    }
    const Eigen::VectorXd s = x_new - r.x;
    const Eigen::VectorXd y = g_new - r.g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        Hinv *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
      Hinv = (I - rho * s * y.transpose()) * Hinv * (I - rho * y * s.transpose()) +
             rho * s * s.transpose();
    }
    r.x = std::move(x_new);
    r.f = f_new;
    r.g = g_new;
  }
  r.converged = r.relative_gradient() <= opt.grad_tol;
  r.message = r.converged ? "gradient tolerance reached" : "iteration limit";
  return r;
}

/// Central-difference Hessian of a gradient function.
inline Eigen::MatrixXd numeric_hessian(const Objective& fg, const Eigen::VectorXd& x,
                                       double rel_step = 1e-5) {
  const auto n = x.size();
  Eigen::MatrixXd H(n, n);
  Eigen::VectorXd gp(n), gm(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double h = rel_step * std::max(1.0, std::abs(x(j)));
    Eigen::VectorXd xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    fg(xp, gp);
    fg(xm, gm);
    H.col(j) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

}  // namespace distcast
