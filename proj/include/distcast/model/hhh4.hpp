#pragma once

#include <Eigen/Dense>
#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "distcast/core/errors.hpp"
#include "distcast/core/random.hpp"
#include "distcast/model/common.hpp"
#include "distcast/model/forecast.hpp"
#include "distcast/model/optim.hpp"
#include "distcast/model/spec.hpp"
#include "distcast/panel/panel.hpp"

namespace distcast {

/// Power-law neighbourhood weights: W(j, i) = o_ji^-d / sum_k o_ki^-d over j != i reachable from i.
/// Columns sum to 1 (or 0 for a district with no reachable neighbour).
inline Eigen::MatrixXd powerlaw_weights(const AdjacencyGraph& g, double d) {
  if (!(d > 0.0)) throw PreconditionError("power-law decay must be positive");
  const int n = g.size();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    // Work relative to the nearest order so large d does not underflow.
    int omin = std::numeric_limits<int>::max();
    for (int j = 0; j < n; ++j) {
      if (j != i && g.order(j, i) > 0) omin = std::min(omin, g.order(j, i));
    }
    if (omin == std::numeric_limits<int>::max()) continue;
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i || g.order(j, i) <= 0) continue;
      w(j, i) = std::pow(static_cast<double>(g.order(j, i)) / omin, -d);
      z += w(j, i);
    }
    w.col(i) /= z;
  }
  return w;
}

/// Named view of the parameter vector.
struct Hhh4Layout {
  int alpha_nu = 0, gamma_sin = 1, gamma_cos = 2;
  std::vector<int> beta_nu;
  int r = -1;  // first random intercept, n entries
  int alpha_lambda = -1;
  std::vector<int> beta_lambda;
  int alpha_phi = -1;
  std::vector<int> beta_phi;
  int log_d = -1;
  int log_psi = -1;
  int size = 0;
};

inline Hhh4Layout hhh4_layout(const Hhh4Options& o, int n) {
  Hhh4Layout l;
  int k = 3;
  for (std::size_t j = 0; j < o.endemic.size(); ++j) l.beta_nu.push_back(k++);
  if (o.random_intercepts) {
    l.r = k;
    k += n;
  }
  if (o.epidemic_component) {
    l.alpha_lambda = k++;
    for (std::size_t j = 0; j < o.epidemic.size(); ++j) l.beta_lambda.push_back(k++);
  }
  if (o.neighbourhood_component) {
    l.alpha_phi = k++;
    for (std::size_t j = 0; j < o.neighbourhood.size(); ++j) l.beta_phi.push_back(k++);
    l.log_d = k++;
  }
  l.log_psi = k++;
  l.size = k;
  return l;
}

/// Standardized regressors for the three components, extended past the panel end.
struct Hhh4Design {
  std::vector<FeatureMatrix> nu, lambda, phi;
  std::vector<PooledScale> nu_scale, lambda_scale, phi_scale;
  int first = 1;  // first month with every regressor and the lag-1 count

  bool ok(int i, int t) const {
    if (t < 1) return false;
    for (const auto* v : {&nu, &lambda, &phi}) {
      for (const auto& f : *v) {
        if (!f.ok(i, t)) return false;
      }
    }
    return true;
  }
};

inline Hhh4Design hhh4_design(const Hhh4Options& o, const PanelDataset& p, int extend,
                              const std::vector<PooledScale>* scales = nullptr) {
  Hhh4Design d;
  int first = 1;
  auto build = [&](const std::vector<Term>& terms, std::vector<FeatureMatrix>& out) {
    for (const auto& t : terms) {
      if (t.lag < extend) throw InputError("hhh4 term " + t.label() + " has lag below horizon");
      out.push_back(term_feature(p, t, extend));
      first = std::max(first, t.lag + (t.kind == "cuminc" ? t.window - 1 : 0));
    }
  };
  build(o.endemic, d.nu);
  build(o.epidemic, d.lambda);
  build(o.neighbourhood, d.phi);
  d.first = first;
  std::size_t k = 0;
  auto scale = [&](const std::vector<FeatureMatrix>& fs, std::vector<PooledScale>& out) {
    for (const auto& f : fs) out.push_back(scales ? scales->at(k++) : pooled_scale(f, first, p.T()));
  };
  scale(d.nu, d.nu_scale);
  scale(d.lambda, d.lambda_scale);
  scale(d.phi, d.phi_scale);
  return d;
}

struct MeanDecomposition {
  double endemic = 0.0;
  double epidemic = 0.0;
  double neighbourhood = 0.0;
  double total = 0.0;
};

/// Evaluates the three mean components for district i at month t from the lag-1 counts in
/// `prev` (length n) and parameter vector `b`.
inline MeanDecomposition hhh4_components(const Hhh4Layout& l, const Eigen::VectorXd& b,
                                         const Hhh4Design& d, const PanelDataset& p,
                                         const Eigen::MatrixXd& w, const Eigen::VectorXd& prev,
                                         int i, int t) {
  const int m = p.month_of_year(t);
  double lnu = b(l.alpha_nu) + std::log(p.population_at(i, t)) + b(l.gamma_sin) * harmonic_sin(m) +
               b(l.gamma_cos) * harmonic_cos(m);
  for (std::size_t k = 0; k < l.beta_nu.size(); ++k) {
    lnu += b(l.beta_nu[k]) * d.nu_scale[k].apply(d.nu[k].values(i, t));
  }
  if (l.r >= 0) lnu += b(l.r + i);
  MeanDecomposition out;
  out.endemic = std::exp(std::min(lnu, kMaxLogMean));
  if (l.alpha_lambda >= 0) {
    double ll = b(l.alpha_lambda);
    for (std::size_t k = 0; k < l.beta_lambda.size(); ++k) {
      ll += b(l.beta_lambda[k]) * d.lambda_scale[k].apply(d.lambda[k].values(i, t));
    }
    out.epidemic = std::exp(std::min(ll, kMaxLogMean)) * prev(i);
  }
  if (l.alpha_phi >= 0) {
    double lp = b(l.alpha_phi);
    for (std::size_t k = 0; k < l.beta_phi.size(); ++k) {
      lp += b(l.beta_phi[k]) * d.phi_scale[k].apply(d.phi[k].values(i, t));
    }
    out.neighbourhood = std::exp(std::min(lp, kMaxLogMean)) * w.col(i).dot(prev);
  }
  out.total = out.endemic + out.epidemic + out.neighbourhood;
  return out;
}

struct Hhh4Fit {
  Hhh4Layout layout;
  std::vector<std::string> names;
  std::vector<PooledScale> scales;  // endemic, epidemic, neighbourhood terms in order
  Eigen::VectorXd mode;
  Eigen::MatrixXd cov;
  double sigma_r = 0.0;  // random-intercept sd
  int train_first = 1;
  int train_last = 0;
  int n_obs = 0;

  double psi() const { return std::exp(mode(layout.log_psi)); }
  double decay() const { return layout.log_d >= 0 ? std::exp(mode(layout.log_d)) : 0.0; }
};

/// Mean decomposition at observed month t (1 <= t < T) under the fitted mode.
inline MeanDecomposition mean_decomposition(const Hhh4Fit& f, const Hhh4Options& o,
                                            const PanelDataset& p, int i, int t) {
  if (t < 1 || t >= p.T()) throw PreconditionError("mean decomposition needs 1 <= t < T");
  const auto d = hhh4_design(o, p, 0, &f.scales);
  if (!d.ok(i, t)) throw PreconditionError("regressors unavailable at this month");
  const Eigen::MatrixXd w = f.layout.log_d >= 0 ? powerlaw_weights(p.adjacency, f.decay())
                                                : Eigen::MatrixXd::Zero(p.n(), p.n());
  return hhh4_components(f.layout, f.mode, d, p, w, p.cases.col(t - 1), i, t);
}

namespace detail {

inline double nb_loglik(double y, double mu, double psi) {
  return std::lgamma(y + psi) - std::lgamma(psi) - std::lgamma(y + 1.0) + psi * std::log(psi / (psi + mu)) +
         (y > 0 ? y * std::log(mu / (psi + mu)) : 0.0);
}

/// Penalized negative-binomial log-likelihood and gradient for fixed random-intercept variance.
class Hhh4Objective {
 public:
  Hhh4Objective(const Hhh4Layout& l, const Hhh4Design& d, const PanelDataset& p, double sigma2_r)
      : l_(l), d_(d), p_(p), sigma2_r_(sigma2_r) {
    const int n = p.n();
    for (int i = 0; i < n; ++i) {
      std::vector<std::pair<int, double>> nb;
      for (int j = 0; j < n; ++j) {
        if (j != i && p.adjacency.order(j, i) > 0) nb.emplace_back(j, std::log(p.adjacency.order(j, i)));
      }
      neighbours_.push_back(std::move(nb));
    }
    for (int t = d.first; t < p.T(); ++t) {
      for (int i = 0; i < n; ++i) {
        if (d.ok(i, t)) rows_.emplace_back(i, t);
      }
    }
  }

  int n_obs() const { return static_cast<int>(rows_.size()); }
  void set_sigma2(double s2) { sigma2_r_ = s2; }

  /// Log prior (penalty) terms: N(0,25) intercepts, N(0,1) slopes and harmonics,
  /// N(0,4) on log d and log psi, N(0, sigma_r^2) random intercepts.
  double penalty(const Eigen::VectorXd& b, Eigen::VectorXd& g) const {
    double s = 0.0;
    auto add = [&](int k, double var) {
      s -= 0.5 * b(k) * b(k) / var;
      g(k) -= b(k) / var;
    };
    add(l_.alpha_nu, 25.0);
    add(l_.gamma_sin, 1.0);
    add(l_.gamma_cos, 1.0);
    for (int k : l_.beta_nu) add(k, 1.0);
    if (l_.alpha_lambda >= 0) add(l_.alpha_lambda, 25.0);
    for (int k : l_.beta_lambda) add(k, 1.0);
    if (l_.alpha_phi >= 0) add(l_.alpha_phi, 25.0);
    for (int k : l_.beta_phi) add(k, 1.0);
    if (l_.log_d >= 0) add(l_.log_d, 4.0);
    add(l_.log_psi, 4.0);
    if (l_.r >= 0) {
      for (int i = 0; i < p_.n(); ++i) add(l_.r + i, sigma2_r_);
    }
    return s;
  }

  double operator()(const Eigen::VectorXd& b, Eigen::VectorXd& g) const {
    g = Eigen::VectorXd::Zero(b.size());
    double ll = penalty(b, g);
    const double psi = std::exp(b(l_.log_psi));
    const double dg_psi = boost::math::digamma(psi);
    const int n = p_.n();
    // Neighbourhood sums and their d-derivatives depend only on the weights and lag-1 counts.
    const double dec = l_.log_d >= 0 ? std::exp(b(l_.log_d)) : 0.0;
    std::vector<double> wlog_mean(static_cast<std::size_t>(n), 0.0);
    std::vector<std::vector<double>> wts(static_cast<std::size_t>(n));
    if (l_.log_d >= 0) {
      for (int i = 0; i < n; ++i) {
        const auto& nb = neighbours_[i];
        auto& w = wts[i];
        w.resize(nb.size());
        if (nb.empty()) continue;
        double lmin = nb[0].second;
        for (const auto& [j, lo] : nb) lmin = std::min(lmin, lo);
        double z = 0.0;
        for (std::size_t k = 0; k < nb.size(); ++k) {
          w[k] = std::exp(-dec * (nb[k].second - lmin));
          z += w[k];
        }
        double lm = 0.0;
        for (std::size_t k = 0; k < nb.size(); ++k) {
          w[k] /= z;
          lm += w[k] * nb[k].second;
        }
        wlog_mean[i] = lm;
      }
    }
    for (const auto& [i, t] : rows_) {
      const double y = p_.cases(i, t);
      const int m = p_.month_of_year(t);
      const double hs = harmonic_sin(m), hc = harmonic_cos(m);
      double lnu = b(l_.alpha_nu) + std::log(p_.population(i, t)) + b(l_.gamma_sin) * hs + b(l_.gamma_cos) * hc;
      for (std::size_t k = 0; k < l_.beta_nu.size(); ++k) lnu += b(l_.beta_nu[k]) * z(d_.nu, d_.nu_scale, k, i, t);
      if (l_.r >= 0) lnu += b(l_.r + i);
      const double nu = std::exp(std::min(lnu, kMaxLogMean));
      double lam = 0.0, ylag = p_.cases(i, t - 1);
      if (l_.alpha_lambda >= 0) {
        double ll2 = b(l_.alpha_lambda);
        for (std::size_t k = 0; k < l_.beta_lambda.size(); ++k) {
          ll2 += b(l_.beta_lambda[k]) * z(d_.lambda, d_.lambda_scale, k, i, t);
        }
        lam = std::exp(std::min(ll2, kMaxLogMean));
      }
      double phi = 0.0, s = 0.0, ds = 0.0;
      if (l_.alpha_phi >= 0) {
        double lp = b(l_.alpha_phi);
        for (std::size_t k = 0; k < l_.beta_phi.size(); ++k) lp += b(l_.beta_phi[k]) * z(d_.phi, d_.phi_scale, k, i, t);
        phi = std::exp(std::min(lp, kMaxLogMean));
        const auto& nb = neighbours_[i];
        for (std::size_t k = 0; k < nb.size(); ++k) {
          const double yj = p_.cases(nb[k].first, t - 1);
          s += wts[i][k] * yj;
          ds += wts[i][k] * (-nb[k].second + wlog_mean[i]) * yj;  // d S / d d
        }
      }
      const double mu = nu + lam * ylag + phi * s;
      if (!(mu > 0.0)) return -std::numeric_limits<double>::infinity();
      ll += nb_loglik(y, mu, psi);
      const double dmu = y / mu - (y + psi) / (psi + mu);
      g(l_.alpha_nu) += dmu * nu;
      g(l_.gamma_sin) += dmu * nu * hs;
      g(l_.gamma_cos) += dmu * nu * hc;
      for (std::size_t k = 0; k < l_.beta_nu.size(); ++k) g(l_.beta_nu[k]) += dmu * nu * z(d_.nu, d_.nu_scale, k, i, t);
      if (l_.r >= 0) g(l_.r + i) += dmu * nu;
      if (l_.alpha_lambda >= 0) {
        const double e = dmu * lam * ylag;
        g(l_.alpha_lambda) += e;
        for (std::size_t k = 0; k < l_.beta_lambda.size(); ++k) {
          g(l_.beta_lambda[k]) += e * z(d_.lambda, d_.lambda_scale, k, i, t);
        }
      }
      if (l_.alpha_phi >= 0) {
        const double e = dmu * phi * s;
        g(l_.alpha_phi) += e;
        for (std::size_t k = 0; k < l_.beta_phi.size(); ++k) g(l_.beta_phi[k]) += e * z(d_.phi, d_.phi_scale, k, i, t);
        g(l_.log_d) += dmu * phi * ds * dec;
      }
      g(l_.log_psi) += psi * (boost::math::digamma(y + psi) - dg_psi + std::log(psi / (psi + mu)) + 1.0 -
                              (y + psi) / (psi + mu));
    }
    return ll;
  }

 private:
  static double z(const std::vector<FeatureMatrix>& f, const std::vector<PooledScale>& s, std::size_t k,
                  int i, int t) {
    return s[k].apply(f[k].values(i, t));
  }

  const Hhh4Layout& l_;
  const Hhh4Design& d_;
  const PanelDataset& p_;
  double sigma2_r_;
  std::vector<std::vector<std::pair<int, double>>> neighbours_;
  std::vector<std::pair<int, int>> rows_;
};

}  // namespace detail

struct Hhh4FitOptions {
  OptimOptions optim{};
  int max_outer = 30;         // random-intercept variance updates
  double outer_tol = 1e-4;    // relative change in sigma_r^2
  double outer_sd_tol = 1e-3; // or absolute change in sigma_r (log-rate scale)
  const Eigen::VectorXd* start = nullptr;
};

/// Penalized maximum likelihood on every month of `p` with all regressors available.
inline std::pair<Hhh4Fit, FitDiagnostics> fit_hhh4(const ModelSpec& spec, const PanelDataset& p,
                                                   const Hhh4FitOptions& opt = {}) {
  spec.check(&p);
  if (p.T() < 24) throw PreconditionError("hhh4 needs at least 24 training months");
  const auto& o = spec.hhh4;
  const int n = p.n();
  Hhh4Fit f;
  f.layout = hhh4_layout(o, n);
  const auto& l = f.layout;
  const auto design = hhh4_design(o, p, 0);
  for (const auto* v : {&design.nu_scale, &design.lambda_scale, &design.phi_scale}) {
    f.scales.insert(f.scales.end(), v->begin(), v->end());
  }
  f.names.assign(static_cast<std::size_t>(l.size), "");
  f.names[l.alpha_nu] = "endemic.intercept";
  f.names[l.gamma_sin] = "endemic.sin";
  f.names[l.gamma_cos] = "endemic.cos";
  for (std::size_t k = 0; k < l.beta_nu.size(); ++k) f.names[l.beta_nu[k]] = "endemic." + o.endemic[k].label();
  if (l.r >= 0) {
    for (int i = 0; i < n; ++i) f.names[l.r + i] = "endemic.ri." + p.districts[i];
  }
  if (l.alpha_lambda >= 0) f.names[l.alpha_lambda] = "epidemic.intercept";
  for (std::size_t k = 0; k < l.beta_lambda.size(); ++k) {
    f.names[l.beta_lambda[k]] = "epidemic." + o.epidemic[k].label();
  }
  if (l.alpha_phi >= 0) f.names[l.alpha_phi] = "neighbourhood.intercept";
  for (std::size_t k = 0; k < l.beta_phi.size(); ++k) {
    f.names[l.beta_phi[k]] = "neighbourhood." + o.neighbourhood[k].label();
  }
  if (l.log_d >= 0) f.names[l.log_d] = "neighbourhood.log_decay";
  f.names[l.log_psi] = "log_dispersion";

  Eigen::VectorXd b = Eigen::VectorXd::Zero(l.size);
  if (opt.start && opt.start->size() == l.size) {
    b = *opt.start;
  } else {
    double ys = 0.0, ps = 0.0;
    for (int t = design.first; t < p.T(); ++t) {
      ys += p.cases.col(t).sum();
      ps += p.population.col(t).sum();
    }
    b(l.alpha_nu) = std::log(std::max(ys, 1.0) / ps) - std::log(2.0);
    if (l.alpha_lambda >= 0) b(l.alpha_lambda) = std::log(0.3);
    if (l.alpha_phi >= 0) b(l.alpha_phi) = std::log(0.1);
    if (l.log_d >= 0) b(l.log_d) = std::log(1.5);
    b(l.log_psi) = std::log(5.0);
  }
  double sigma2 = 0.25;
  detail::Hhh4Objective obj(l, design, p, sigma2);
  if (obj.n_obs() == 0) throw PreconditionError("empty training window for model '" + spec.name + "'");
  f.n_obs = obj.n_obs();
  f.train_first = design.first;
  f.train_last = p.T() - 1;

  Objective neg = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    if (x.cwiseAbs().maxCoeff() > 30.0) return std::numeric_limits<double>::infinity();
    const double v = obj(x, g);
    g = -g;
    return std::isfinite(v) ? -v : std::numeric_limits<double>::infinity();
  };
  OptimResult r;
  int outer = 0, total_iter = 0, total_eval = 0;
  bool outer_converged = l.r < 0;
  for (; outer < (l.r >= 0 ? opt.max_outer : 1); ++outer) {
    obj.set_sigma2(sigma2);
    r = minimize_bfgs(neg, b, opt.optim);
    total_iter += r.iterations;
    total_eval += r.evaluations;
    b = r.x;
    if (l.r < 0) break;
    // Fellner-Schall update for the ridge variance: sigma^2 = r'r / (n - tr(H^-1)_rr / sigma^2).
    const Eigen::MatrixXd H = numeric_hessian(neg, b);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(0.5 * (H + H.transpose()));
    const Eigen::MatrixXd Hinv = ldlt.solve(Eigen::MatrixXd::Identity(l.size, l.size));
    double rr = 0.0, tr = 0.0;
    for (int i = 0; i < n; ++i) {
      rr += b(l.r + i) * b(l.r + i);
      tr += Hinv(l.r + i, l.r + i);
    }
    const double edf = std::max(n - tr / sigma2, 1e-3);
    const double next = std::clamp(rr / edf, 1e-8, 25.0);
    const double change = std::abs(next - sigma2) / sigma2;
    const double sd_change = std::abs(std::sqrt(next) - std::sqrt(sigma2));
    sigma2 = next;
    if (change < opt.outer_tol || sd_change < opt.outer_sd_tol) {
      outer_converged = true;
      obj.set_sigma2(sigma2);
      r = minimize_bfgs(neg, b, opt.optim);
      total_iter += r.iterations;
      total_eval += r.evaluations;
      b = r.x;
      break;
    }
  }
  f.mode = b;
  f.sigma_r = std::sqrt(sigma2);
  Eigen::MatrixXd H = numeric_hessian(neg, b);
  H = 0.5 * (H + H.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(H);
  double jitter = 1e-10 * std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
  for (int k = 0; k < 6 && llt.info() != Eigen::Success; ++k) {
    H.diagonal().array() += jitter;
    llt.compute(H);
    jitter *= 100.0;
  }
  FitDiagnostics diag;
  diag.iterations = total_iter;
  diag.evaluations = total_eval;
  diag.relative_gradient = r.relative_gradient();
  diag.objective = -r.f;
  diag.message = r.message;
  if (llt.info() != Eigen::Success) {
    diag.converged = false;
    diag.message = "singular Hessian at the mode";
    f.cov = Eigen::MatrixXd::Zero(l.size, l.size);
  } else {
    f.cov = llt.solve(Eigen::MatrixXd::Identity(l.size, l.size));
    f.cov = 0.5 * (f.cov + f.cov.transpose());
    diag.converged = (r.converged || r.relative_gradient() <= opt.optim.grad_tol) && outer_converged;
    if (!outer_converged) diag.message = "random-intercept variance did not settle";
  }
  return {std::move(f), diag};
}

/// Recursive path simulation from the last month of `p`. Each path draws one parameter vector
/// from the Gaussian at the mode and simulates all districts jointly, feeding sampled counts
/// back into the epidemic and neighbourhood components.
inline std::vector<ForecastDistribution> forecast_hhh4(const Hhh4Fit& f, const ModelSpec& spec,
                                                       const PanelDataset& p,
                                                       const std::vector<int>& horizons, int n_samples,
                                                       std::uint64_t seed, bool parameter_uncertainty = true) {
  if (n_samples < 1) throw PreconditionError("n_samples must be >= 1");
  int hmax = 0;
  for (const int h : horizons) {
    if (h < 1 || h > 3) throw PreconditionError("hhh4 horizons must be 1, 2 or 3");
    hmax = std::max(hmax, h);
  }
  const auto& l = f.layout;
  const auto design = hhh4_design(spec.hhh4, p, hmax, &f.scales);
  const int n = p.n(), T = p.T();
  for (int h = 1; h <= hmax; ++h) {
    for (int i = 0; i < n; ++i) {
      for (const auto* v : {&design.nu, &design.lambda, &design.phi}) {
        for (const auto& fm : *v) {
          if (!fm.ok(i, T - 1 + h)) throw_missing_cell(p, fm, i, T - 1 + h);
        }
      }
    }
  }
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(l.size, l.size);
  if (parameter_uncertainty) {
    Eigen::LLT<Eigen::MatrixXd> llt(f.cov);
    if (llt.info() == Eigen::Success) {
      L = llt.matrixL();
    } else {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(f.cov);
      L = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    }
  }
  const YearMonth origin = p.months.back();
  std::vector<std::vector<double>> draws(static_cast<std::size_t>(hmax * n),
                                         std::vector<double>(static_cast<std::size_t>(n_samples)));
  const Eigen::MatrixXd w_mode = l.log_d >= 0 ? powerlaw_weights(p.adjacency, f.decay())
                                              : Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd z(l.size), b(l.size), prev(n), next(n);
  for (int s = 0; s < n_samples; ++s) {
    auto rng = make_rng(seed, {model_tag(spec.name), origin.index(), s});
    if (parameter_uncertainty) {
      for (int k = 0; k < l.size; ++k) z(k) = draw_normal(rng);
      b = f.mode + L * z;
    } else {
      b = f.mode;
    }
    const Eigen::MatrixXd w = (l.log_d >= 0 && parameter_uncertainty)
                                  ? powerlaw_weights(p.adjacency, std::exp(b(l.log_d)))
                                  : w_mode;
    const double psi = std::exp(b(l.log_psi));
    prev = p.cases.col(T - 1);
    for (int h = 1; h <= hmax; ++h) {
      for (int i = 0; i < n; ++i) {
        const auto mu = hhh4_components(l, b, design, p, w, prev, i, T - 1 + h);
        next(i) = static_cast<double>(draw_negbin(rng, mu.total, psi));
        draws[static_cast<std::size_t>((h - 1) * n + i)][static_cast<std::size_t>(s)] = next(i);
      }
      prev = next;
    }
  }
  std::vector<ForecastDistribution> out;
  for (const int h : horizons) {
    for (int i = 0; i < n; ++i) {
      out.push_back({p.districts[static_cast<std::size_t>(i)], origin, h,
                     draws[static_cast<std::size_t>((h - 1) * n + i)]});
    }
  }
  return out;
}

inline void to_json(nlohmann::json& j, const Hhh4Fit& f) {
  j = {{"names", f.names},
       {"scales", f.scales},
       {"mode", json_eigen::vec(f.mode)},
       {"cov", json_eigen::mat(f.cov)},
       {"sigma_r", f.sigma_r},
       {"train_first", f.train_first},
       {"train_last", f.train_last},
       {"n_obs", f.n_obs}};
}

/// The layout is rebuilt from the spec; `n` is the district count.
inline Hhh4Fit hhh4_fit_from_json(const nlohmann::json& j, const Hhh4Options& o, int n) {
  Hhh4Fit f;
  f.layout = hhh4_layout(o, n);
  f.names = j.at("names").get<std::vector<std::string>>();
  f.scales = j.at("scales").get<std::vector<PooledScale>>();
  f.mode = json_eigen::vec(j.at("mode"));
  f.cov = json_eigen::mat(j.at("cov"));
  f.sigma_r = j.at("sigma_r").get<double>();
  f.train_first = j.at("train_first").get<int>();
  f.train_last = j.at("train_last").get<int>();
  f.n_obs = j.at("n_obs").get<int>();
  if (f.mode.size() != f.layout.size) throw InputError("hhh4 parameter vector does not match its spec");
  return f;
}

}  // namespace distcast
