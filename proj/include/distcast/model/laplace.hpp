#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "distcast/core/errors.hpp"
#include "distcast/model/latent.hpp"
#include "distcast/model/optim.hpp"

namespace distcast::latent {

struct LaplaceOptions {
  OptimOptions outer{};
  int max_newton = 200;
  double newton_tol = 1e-10;  // Newton decrement g'H^-1 g, relative to max(1, |objective|)
};

/// Gaussian approximation at the joint mode with hyperparameters at their marginal mode.
struct LaplaceFit {
  Eigen::VectorXd theta;
  Eigen::VectorXd x;
  Eigen::MatrixXd cov;  // latent covariance at the mode (p x p)
  double log_marginal = -std::numeric_limits<double>::infinity();
  bool converged = false;
  int outer_iterations = 0;
  int evaluations = 0;
  double relative_gradient = 0.0;
  std::string message;
};

/// Evaluates the Laplace-approximate log marginal likelihood of the hyperparameters and its
/// analytic gradient; the inner mode search runs Newton in the constrained coordinates z
/// (x = M z), warm-started from the previous call.
class LaplaceEngine {
 public:
  explicit LaplaceEngine(const LatentModel& model, LaplaceOptions opt = {})
      : m_(model), opt_(opt), M_(constraint_basis(model)), Mt_(M_.transpose()) {
    q_ = static_cast<int>(M_.cols());
    build_am();
    log_fact_ = 0.0;
    for (const double y : m_.y) log_fact_ += std::lgamma(y + 1.0);
    z_ = Eigen::VectorXd::Zero(q_);
  }

  int q() const { return q_; }
  const Eigen::SparseMatrix<double>& basis() const { return M_; }

  /// Starting latent point (projected onto the constraint space).
  void set_start(const Eigen::VectorXd& x) { z_ = Mt_ * x; }

  struct Evaluation {
    double log_marginal;
    Eigen::VectorXd gradient;
    bool inner_converged;
  };

  Evaluation evaluate(const Eigen::VectorXd& theta, bool with_gradient = true) {
    const auto prior = prior_precision(m_, theta);
    const Eigen::SparseMatrix<double> MPM = Mt_ * prior.P * M_;
    const bool ok = newton(MPM);
    Evaluation ev{-std::numeric_limits<double>::infinity(), Eigen::VectorXd(), ok};
    if (!ok) return ev;
    double log_prior = 0.0;
    for (std::size_t j = 0; j < m_.hypers.size(); ++j) log_prior += m_.hypers[j].log_prior(theta(j));
    ev.log_marginal = phi_ - log_fact_ + 0.5 * prior.log_det - 0.5 * log_det_h_ + log_prior;
    if (!with_gradient) return ev;

    const Eigen::MatrixXd Hinv = llt_.solve(Eigen::MatrixXd::Identity(q_, q_));
    Eigen::VectorXd lev(m_.n_obs());
    for (int r = 0; r < m_.n_obs(); ++r) {
      double s = 0.0;
      for (int a = am_.start[r]; a < am_.start[r + 1]; ++a) {
        const int ka = am_.index[a];
        double inner = 0.0;
        for (int b = am_.start[r]; b < am_.start[r + 1]; ++b) inner += Hinv(ka, am_.index[b]) * am_.value[b];
        s += am_.value[a] * inner;
      }
      lev(r) = s;
    }
    const auto J = static_cast<Eigen::Index>(m_.hypers.size());
    ev.gradient.resize(J);
    for (Eigen::Index j = 0; j < J; ++j) {
      const Eigen::SparseMatrix<double> MdM = Mt_ * prior.dP[j] * M_;
      const Eigen::VectorXd v = MdM * z_;
      const Eigen::VectorXd dz = -(Hinv * v);
      double trace = 0.0;
      for (int k = 0; k < MdM.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(MdM, k); it; ++it) {
          trace += it.value() * Hinv(it.row(), it.col());
        }
      }
      double data_term = 0.0;
      for (int r = 0; r < m_.n_obs(); ++r) data_term += mu_(r) * am_.dot(r, dz) * lev(r);
      ev.gradient(j) = -0.5 * z_.dot(v) + 0.5 * prior.d_log_det(j) - 0.5 * (trace + data_term) +
                       m_.hypers[j].d_log_prior(theta(j));
    }
    return ev;
  }

  /// Maximizes the Laplace marginal over the hyperparameters and returns the Gaussian at the mode.
  LaplaceFit fit(const Eigen::VectorXd& theta0) {
    LaplaceFit out;
    if (theta0.size() == 0) {
      const auto ev = evaluate(theta0, false);
      out.converged = ev.inner_converged;
      out.log_marginal = ev.log_marginal;
      out.message = ev.inner_converged ? "no hyperparameters" : "inner Newton failed";
    } else {
      Objective f = [&](const Eigen::VectorXd& th, Eigen::VectorXd& g) {
        if (th.cwiseAbs().maxCoeff() > 12.0) return std::numeric_limits<double>::infinity();
        const auto ev = evaluate(th);
        if (!ev.inner_converged) return std::numeric_limits<double>::infinity();
        g = -ev.gradient;
        return -ev.log_marginal;
      };
      const auto r = minimize_bfgs(f, theta0, opt_.outer);
      out.theta = r.x;
      out.converged = r.converged;
      out.outer_iterations = r.iterations;
      out.evaluations = r.evaluations;
      out.relative_gradient = r.relative_gradient();
      out.message = r.message;
      const auto ev = evaluate(r.x, false);  // leaves the mode of the accepted point in place
      out.log_marginal = ev.log_marginal;
      out.converged = out.converged && ev.inner_converged;
    }
    if (out.theta.size() == 0) out.theta = theta0;
    out.x = M_ * z_;
    const Eigen::MatrixXd Md = Eigen::MatrixXd(M_);
    out.cov = Md * llt_.solve(Md.transpose());
    out.cov = 0.5 * (out.cov + out.cov.transpose());
    return out;
  }

 private:
  void build_am() {
    // Rows of A M, through a dense scratch accumulator over the q columns.
    const Eigen::SparseMatrix<double, Eigen::RowMajor> Mr = M_;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(q_);
    std::vector<char> touched(static_cast<std::size_t>(q_), 0);
    std::vector<int> cols;
    for (int r = 0; r < m_.A.rows(); ++r) {
      cols.clear();
      for (int e = m_.A.start[r]; e < m_.A.start[r + 1]; ++e) {
        const int k = m_.A.index[e];
        if (k < 0 || k >= m_.p) throw PreconditionError("design entry outside the latent vector");
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Mr, k); it; ++it) {
          const int c = static_cast<int>(it.col());
          if (!touched[c]) {
            touched[c] = 1;
            cols.push_back(c);
          }
          acc(c) += m_.A.value[e] * it.value();
        }
      }
      std::sort(cols.begin(), cols.end());
      std::vector<std::pair<int, double>> row;
      for (const int c : cols) {
        if (acc(c) != 0.0) row.emplace_back(c, acc(c));
        acc(c) = 0.0;
        touched[c] = 0;
      }
      am_.add_row(row);
    }
    off_ = Eigen::Map<const Eigen::VectorXd>(m_.offset.data(), static_cast<Eigen::Index>(m_.offset.size()));
    y_ = Eigen::Map<const Eigen::VectorXd>(m_.y.data(), static_cast<Eigen::Index>(m_.y.size()));
  }

  /// log p(y | z) - z' M'PM z / 2 without the lgamma constant; +inf-safe.
  double objective(const Eigen::VectorXd& z, const Eigen::SparseMatrix<double>& MPM,
                   Eigen::VectorXd& eta) const {
    double s = 0.0;
    eta.resize(m_.n_obs());
    for (int r = 0; r < m_.n_obs(); ++r) {
      eta(r) = off_(r) + am_.dot(r, z);
      s += y_(r) * eta(r) - std::exp(eta(r));
    }
    return s - 0.5 * z.dot(MPM * z);
  }

  bool factorize(Eigen::MatrixXd& H) {
    llt_.compute(H);
    double jitter = 1e-10 * std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
    for (int k = 0; k < 4 && llt_.info() != Eigen::Success; ++k) {
      H.diagonal().array() += jitter;
      llt_.compute(H);
      jitter *= 100.0;
    }
    return llt_.info() == Eigen::Success;
  }

  bool newton(const Eigen::SparseMatrix<double>& MPM) {
    const Eigen::MatrixXd MPMd = Eigen::MatrixXd(MPM);
    Eigen::VectorXd eta;
    double phi = objective(z_, MPM, eta);
    if (!std::isfinite(phi)) {
      z_.setZero();
      phi = objective(z_, MPM, eta);
    }
    Eigen::VectorXd eta_try;
    bool polished = false;
    for (int it = 0; it < opt_.max_newton; ++it) {
      mu_ = eta.array().exp();
      Eigen::VectorXd grad = -(MPM * z_);
      Eigen::MatrixXd H = MPMd;
      for (int r = 0; r < m_.n_obs(); ++r) {
        const double resid = y_(r) - mu_(r);
        for (int a = am_.start[r]; a < am_.start[r + 1]; ++a) {
          const int ka = am_.index[a];
          const double va = am_.value[a];
          grad(ka) += resid * va;
          const double w = mu_(r) * va;
          for (int b = am_.start[r]; b < am_.start[r + 1]; ++b) H(ka, am_.index[b]) += w * am_.value[b];
        }
      }
      if (!factorize(H)) return false;
      const Eigen::VectorXd step = llt_.solve(grad);
      const double decrement = grad.dot(step);
      if (polished || decrement <= opt_.newton_tol * std::max(1.0, std::abs(phi))) {
        if (!polished) {
          // One more full step squares the remaining error, so the mode is smooth in theta.
          z_ += step;
          phi = objective(z_, MPM, eta);
          polished = true;
          continue;
        }
        phi_ = phi;
        log_det_h_ = 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
        return true;
      }
      double alpha = 1.0;
      bool moved = false;
      for (int k = 0; k < 50; ++k) {
        const Eigen::VectorXd z_try = z_ + alpha * step;
        const double phi_try = objective(z_try, MPM, eta_try);
        if (std::isfinite(phi_try) && phi_try >= phi + 1e-4 * alpha * decrement) {
          z_ = z_try;
          phi = phi_try;
          eta.swap(eta_try);
          moved = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!moved) {
        // No ascent left at working precision: accept if the decrement is already negligible.
        if (decrement > 1e-6 * std::max(1.0, std::abs(phi))) return false;
        phi_ = phi;
        log_det_h_ = 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
        return true;
      }
    }
    return false;
  }

  const LatentModel& m_;
  LaplaceOptions opt_;
  Eigen::SparseMatrix<double> M_, Mt_;
  int q_ = 0;
  SparseRows am_;
  Eigen::VectorXd off_, y_, z_, mu_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double phi_ = 0.0, log_det_h_ = 0.0, log_fact_ = 0.0;
};

inline LaplaceFit fit_laplace(const LatentModel& m, const LaplaceOptions& opt = {},
                              const Eigen::VectorXd* theta0 = nullptr,
                              const Eigen::VectorXd* x0 = nullptr) {
  LaplaceEngine engine(m, opt);
  if (x0) engine.set_start(*x0);
  return engine.fit(theta0 ? *theta0 : m.initial_theta());
}

}  // namespace distcast::latent
