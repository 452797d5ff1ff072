#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "distcast/core/errors.hpp"
#include "distcast/core/random.hpp"
#include "distcast/model/common.hpp"
#include "distcast/model/forecast.hpp"
#include "distcast/model/laplace.hpp"
#include "distcast/model/spec.hpp"
#include "distcast/panel/features.hpp"

namespace distcast {

/// Columns multiplied by their univariate regression slope on the target, then centred.
struct YAwareRescale {
  Eigen::VectorXd slopes;
  Eigen::VectorXd means;
  Eigen::MatrixXd rescaled;  // rows x columns
};

inline constexpr int kMinPcaTrainingRows = 24;

/// `X` holds one row per training month and one column per covariate; `y` is the target.
inline YAwareRescale y_aware_rescale(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) throw PreconditionError("y_aware_rescale: row count mismatch");
  if (X.rows() < kMinPcaTrainingRows) {
    throw PreconditionError("y_aware_rescale needs at least " + std::to_string(kMinPcaTrainingRows) +
                            " training months, got " + std::to_string(X.rows()));
  }
  const Eigen::Index K = X.cols();
  YAwareRescale r{Eigen::VectorXd::Zero(K), Eigen::VectorXd::Zero(K), Eigen::MatrixXd::Zero(X.rows(), K)};
  const Eigen::VectorXd yc = y.array() - y.mean();
  for (Eigen::Index k = 0; k < K; ++k) {
    const Eigen::VectorXd xc = X.col(k).array() - X.col(k).mean();
    const double sxx = xc.squaredNorm();
    const double scale = std::max(1.0, X.col(k).cwiseAbs().maxCoeff());
    if (!(sxx > 1e-20 * scale * scale * static_cast<double>(X.rows()))) continue;
    r.slopes(k) = xc.dot(yc) / sxx;
    const Eigen::VectorXd col = r.slopes(k) * X.col(k);
    r.means(k) = col.mean();
    r.rescaled.col(k) = col.array() - r.means(k);
  }
  return r;
}

/// Slopes, centring and the leading loadings of one target district's Y-aware PCA.
struct YAwarePcaState {
  Eigen::VectorXd slopes;
  Eigen::VectorXd means;
  Eigen::MatrixXd loadings;   // columns x components, orthonormal columns
  Eigen::VectorXd explained;  // variance per component, non-increasing
  bool reduced = false;       // fewer components than requested

  int components() const { return static_cast<int>(loadings.cols()); }

  /// Component scores of one raw covariate row.
  Eigen::VectorXd scores(const Eigen::VectorXd& raw) const {
    const Eigen::VectorXd xr = slopes.cwiseProduct(raw) - means;
    return loadings.transpose() * xr;
  }
};

/// Top `P` principal directions of the rescaled matrix. Matrices of rank below P keep every
/// non-null direction and set `reduced`.
inline YAwarePcaState fit_pca(const YAwareRescale& r, int P = 10) {
  if (P < 1) throw PreconditionError("fit_pca: component count must be >= 1");
  const auto& A = r.rescaled;
  if (A.rows() < 2 || A.cols() < 1) throw PreconditionError("fit_pca: matrix is too small");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  const double tol = s.size() ? s(0) * 1e-10 * static_cast<double>(std::max(A.rows(), A.cols())) : 0.0;
  int rank = 0;
  while (rank < s.size() && s(rank) > tol && s(rank) > 0.0) ++rank;
  const int keep = std::min(P, rank);

  YAwarePcaState st;
  st.slopes = r.slopes;
  st.means = r.means;
  st.reduced = keep < P;
  st.loadings = svd.matrixV().leftCols(keep);
  st.explained.resize(keep);
  for (int c = 0; c < keep; ++c) {
    Eigen::Index arg = 0;
    st.loadings.col(c).cwiseAbs().maxCoeff(&arg);
    if (st.loadings(arg, c) < 0.0) st.loadings.col(c) *= -1.0;
    st.explained(c) = s(c) * s(c) / static_cast<double>(A.rows() - 1);
  }
  return st;
}

inline void to_json(nlohmann::json& j, const YAwarePcaState& s) {
  j = {{"slopes", json_eigen::vec(s.slopes)},
       {"means", json_eigen::vec(s.means)},
       {"loadings", json_eigen::mat(s.loadings)},
       {"explained", json_eigen::vec(s.explained)},
       {"reduced", s.reduced}};
}

inline void from_json(const nlohmann::json& j, YAwarePcaState& s) {
  s.slopes = json_eigen::vec(j.at("slopes"));
  s.means = json_eigen::vec(j.at("means"));
  s.loadings = json_eigen::mat(j.at("loadings"));
  s.explained = json_eigen::vec(j.at("explained"));
  s.reduced = j.at("reduced").get<bool>();
  if (s.loadings.rows() == 0) s.loadings.resize(s.slopes.size(), 0);
}

/// One district's regression: latent vector [alpha, beta_pc..., sin, cos, beta_k..., delta...].
struct PcrDistrictFit {
  YAwarePcaState pca;
  std::vector<PooledScale> scales;  // same-district regressors
  int delta = -1;
  int delta_length = 0;
  int delta_first_year = 0;
  double delta_sigma = 0.0;
  double delta_rho = 0.0;
  std::vector<std::string> hyper_names;
  Eigen::VectorXd theta;
  Eigen::VectorXd x;
  Eigen::MatrixXd cov;
  int n_obs = 0;
  FitDiagnostics diagnostics;

  int n_pc() const { return pca.components(); }
  int alpha() const { return 0; }
  int beta_pc(int c) const { return 1 + c; }
  int sin_index() const { return 1 + n_pc(); }
  int cos_index() const { return 2 + n_pc(); }
  int beta(int k) const { return 3 + n_pc() + k; }
};

struct PcaFit {
  Standardization incidence;  // per-district log-incidence scale over the training window
  std::vector<int> lags;
  std::vector<std::string> term_labels;
  std::vector<PcrDistrictFit> districts;
  int train_first = 0;
  int train_last = 0;
};

/// Lagged standardized log-incidence of every district at column t, district-major.
inline Eigen::VectorXd pca_raw_row(const FeatureMatrix& z, const std::vector<int>& lags, int t) {
  Eigen::VectorXd row(z.rows() * static_cast<Eigen::Index>(lags.size()));
  Eigen::Index k = 0;
  for (int j = 0; j < z.rows(); ++j) {
    for (const int l : lags) row(k++) = z.values(j, t - l);
  }
  return row;
}

namespace detail {

inline int pca_max_lag(const ModelSpec& spec) {
  int m = *std::max_element(spec.pca.lags.begin(), spec.pca.lags.end());
  for (const auto& t : spec.pca.terms) m = std::max(m, t.lag + (t.kind == "cuminc" ? t.window - 1 : 0));
  return m;
}

inline std::vector<std::pair<int, double>> pcr_row(const PcrDistrictFit& f, const Eigen::VectorXd& pcs,
                                                   int month, const std::vector<double>& z) {
  std::vector<std::pair<int, double>> a;
  a.emplace_back(f.alpha(), 1.0);
  for (int c = 0; c < f.n_pc(); ++c) a.emplace_back(f.beta_pc(c), pcs(c));
  a.emplace_back(f.sin_index(), harmonic_sin(month));
  a.emplace_back(f.cos_index(), harmonic_cos(month));
  for (std::size_t k = 0; k < z.size(); ++k) a.emplace_back(f.beta(static_cast<int>(k)), z[k]);
  return a;
}

}  // namespace detail

struct PcaFitOptions {
  latent::LaplaceOptions laplace{};
};

/// Fits one PCA and one regression per district on every month of `p`.
inline std::pair<PcaFit, FitDiagnostics> fit_pca_model(const ModelSpec& spec, const PanelDataset& p,
                                                       const PcaFitOptions& opt = {}) {
  if (spec.family != Family::Pca) throw PreconditionError("fit_pca_model expects a pca spec");
  spec.check(&p);
  if (p.T() == 0 || p.n() == 0) throw PreconditionError("empty training window");
  const int n = p.n(), T = p.T();
  const int first = detail::pca_max_lag(spec);
  if (T - first < kMinPcaTrainingRows) {
    throw PreconditionError("training window of " + std::to_string(T) + " months is too short for model '" +
                            spec.name + "'");
  }

  PcaFit fit;
  fit.lags = spec.pca.lags;
  fit.train_first = first;
  fit.train_last = T - 1;
  const auto li = log_incidence(p);
  fit.incidence = standardization(li, 0, T);
  const auto z = apply_standardization(li, fit.incidence);

  std::vector<FeatureMatrix> terms;
  for (const auto& t : spec.pca.terms) {
    terms.push_back(term_feature(p, t, 0));
    fit.term_labels.push_back(t.label());
  }

  const int rows = T - first;
  Eigen::MatrixXd X(rows, n * static_cast<Eigen::Index>(fit.lags.size()));
  for (int r = 0; r < rows; ++r) X.row(r) = pca_raw_row(z, fit.lags, first + r).transpose();

  FitDiagnostics agg;
  agg.converged = true;
  agg.objective = 0.0;
  for (int i = 0; i < n; ++i) {
    PcrDistrictFit d;
    Eigen::VectorXd y(rows);
    for (int r = 0; r < rows; ++r) y(r) = z.values(i, first + r);
    d.pca = fit_pca(y_aware_rescale(X, y), spec.pca.components);
    const Eigen::MatrixXd scores = (X * d.pca.slopes.asDiagonal()).rowwise() - d.pca.means.transpose();
    const Eigen::MatrixXd pcs = scores * d.pca.loadings;

    for (const auto& f : terms) {
      FeatureMatrix row = f;
      row.values = f.values.row(i);
      row.valid = f.valid.row(i);
      d.scales.push_back(pooled_scale(row, first, T));
    }

    latent::LatentModel m;
    const int K = static_cast<int>(terms.size());
    Eigen::VectorXd prec = Eigen::VectorXd::Ones(3 + d.n_pc() + K);
    prec(0) = 1.0 / 25.0;
    m.add_fixed("fixed", prec);
    int delta = -1;
    if (spec.pca.temporal) {
      d.delta_first_year = p.year_index(first);
      d.delta_length = p.year_index(T - 1) - d.delta_first_year + 1;
      delta = m.add_ar1("delta", 1, d.delta_length);
      d.delta = m.blocks[delta].offset;
    }
    std::vector<double> zk(static_cast<std::size_t>(K));
    for (int t = first; t < T; ++t) {
      bool ok = true;
      for (int k = 0; k < K; ++k) {
        if (!terms[k].ok(i, t)) {
          ok = false;
          break;
        }
        zk[k] = d.scales[k].apply(terms[k].values(i, t));
      }
      if (!ok) continue;
      auto a = detail::pcr_row(d, pcs.row(t - first).transpose(), p.month_of_year(t), zk);
      if (delta >= 0) a.emplace_back(d.delta + p.year_index(t) - d.delta_first_year, 1.0);
      m.add_observation(p.cases(i, t), std::log(p.population(i, t)), a);
    }
    d.n_obs = m.n_obs();
    if (d.n_obs == 0) throw PreconditionError("no usable training rows for district " + p.districts[i]);

    const auto lf = latent::fit_laplace(m, opt.laplace);
    d.theta = lf.theta;
    for (const auto& h : m.hypers) d.hyper_names.push_back(h.name);
    d.x = lf.x;
    d.cov = lf.cov;
    if (delta >= 0) {
      const auto& b = m.blocks[delta];
      d.delta_sigma = m.hypers[b.sigma].natural(d.theta(b.sigma));
      d.delta_rho = m.hypers[b.rho].natural(d.theta(b.rho));
    }
    auto& dg = d.diagnostics;
    dg.converged = lf.converged ||
                   (lf.relative_gradient <= opt.laplace.outer.grad_tol && std::isfinite(lf.log_marginal));
    dg.objective = lf.log_marginal;
    dg.iterations = lf.outer_iterations;
    dg.evaluations = lf.evaluations;
    dg.relative_gradient = lf.relative_gradient;
    dg.message = lf.message;

    agg.converged = agg.converged && dg.converged;
    agg.objective += dg.objective;
    agg.iterations = std::max(agg.iterations, dg.iterations);
    agg.evaluations += dg.evaluations;
    agg.relative_gradient = std::max(agg.relative_gradient, dg.relative_gradient);
    if (!dg.converged && agg.message.empty()) agg.message = p.districts[i] + ": " + dg.message;
    fit.districts.push_back(std::move(d));
  }
  if (agg.message.empty()) agg.message = "all districts converged";
  return {std::move(fit), agg};
}

/// Forecasts every district at each horizon from the last month of `p`.
inline std::vector<ForecastDistribution> forecast_pca(const PcaFit& f, const ModelSpec& spec,
                                                      const PanelDataset& p,
                                                      const std::vector<int>& horizons, int n_samples,
                                                      std::uint64_t seed) {
  if (n_samples < 1) throw PreconditionError("n_samples must be >= 1");
  if (static_cast<int>(f.districts.size()) != p.n()) throw PreconditionError("panel does not match the fit");
  int hmax = 0;
  for (const int h : horizons) hmax = std::max(hmax, h);
  const int min_lag = *std::min_element(f.lags.begin(), f.lags.end());
  if (hmax > min_lag) {
    throw InputError("model '" + spec.name + "': case lag " + std::to_string(min_lag) +
                     " is shorter than horizon " + std::to_string(hmax));
  }
  const auto z = apply_standardization(log_incidence(p), f.incidence);
  std::vector<FeatureMatrix> terms;
  for (const auto& t : spec.pca.terms) terms.push_back(term_feature(p, t, hmax));
  const YearMonth origin = p.months.back();
  const int T = p.T();
  std::vector<ForecastDistribution> out;
  for (const int h : horizons) {
    const int t = T - 1 + h;
    const int month = origin.plus(h).month;
    const Eigen::VectorXd raw = pca_raw_row(z, f.lags, t);
    for (int i = 0; i < p.n(); ++i) {
      const auto& d = f.districts[static_cast<std::size_t>(i)];
      std::vector<double> zk;
      for (std::size_t k = 0; k < terms.size(); ++k) {
        if (!terms[k].ok(i, t)) throw_missing_cell(p, terms[k], i, t);
        zk.push_back(d.scales[k].apply(terms[k].values(i, t)));
      }
      auto a = detail::pcr_row(d, d.pca.scores(raw), month, zk);
      double extra = 0.0;
      if (d.delta >= 0) {
        const int rel = p.year_index(T - 1) + (origin.plus(h).year - origin.year) - d.delta_first_year;
        if (rel < d.delta_length) {
          a.emplace_back(d.delta + rel, 1.0);
        } else {
          const double rk = std::pow(d.delta_rho, rel - (d.delta_length - 1));
          a.emplace_back(d.delta + d.delta_length - 1, rk);
          extra = d.delta_sigma * d.delta_sigma * (1.0 - rk * rk);
        }
      }
      PredictorMoments mo;
      mo.mean = std::log(p.population_at(i, t));
      double var = 0.0;
      for (const auto& [k1, v1] : a) {
        mo.mean += v1 * d.x(k1);
        for (const auto& [k2, v2] : a) var += v1 * v2 * d.cov(k1, k2);
      }
      mo.variance = std::max(0.0, var) + extra;
      auto rng = make_rng(seed, {model_tag(spec.name), i, origin.index(), h});
      out.push_back({p.districts[static_cast<std::size_t>(i)], origin, h,
                     draw_lognormal_poisson(rng, mo, n_samples)});
    }
  }
  return out;
}

inline void to_json(nlohmann::json& j, const PcrDistrictFit& d) {
  j = {{"pca", d.pca},
       {"scales", d.scales},
       {"delta", d.delta},
       {"delta_length", d.delta_length},
       {"delta_first_year", d.delta_first_year},
       {"delta_sigma", d.delta_sigma},
       {"delta_rho", d.delta_rho},
       {"hyper_names", d.hyper_names},
       {"theta", json_eigen::vec(d.theta)},
       {"x", json_eigen::vec(d.x)},
       {"cov", json_eigen::mat(d.cov)},
       {"n_obs", d.n_obs},
       {"diagnostics", d.diagnostics}};
}

inline void from_json(const nlohmann::json& j, PcrDistrictFit& d) {
  d.pca = j.at("pca").get<YAwarePcaState>();
  d.scales = j.at("scales").get<std::vector<PooledScale>>();
  d.delta = j.at("delta").get<int>();
  d.delta_length = j.at("delta_length").get<int>();
  d.delta_first_year = j.at("delta_first_year").get<int>();
  d.delta_sigma = j.at("delta_sigma").get<double>();
  d.delta_rho = j.at("delta_rho").get<double>();
  d.hyper_names = j.at("hyper_names").get<std::vector<std::string>>();
  d.theta = json_eigen::vec(j.at("theta"));
  d.x = json_eigen::vec(j.at("x"));
  d.cov = json_eigen::mat(j.at("cov"));
  d.n_obs = j.at("n_obs").get<int>();
  d.diagnostics = j.at("diagnostics").get<FitDiagnostics>();
}

inline void to_json(nlohmann::json& j, const PcaFit& f) {
  j = {{"incidence_mean", json_eigen::vec(f.incidence.mean)},
       {"incidence_sd", json_eigen::vec(f.incidence.sd)},
       {"lags", f.lags},
       {"term_labels", f.term_labels},
       {"districts", f.districts},
       {"train_first", f.train_first},
       {"train_last", f.train_last}};
}

inline void from_json(const nlohmann::json& j, PcaFit& f) {
  f.incidence.mean = json_eigen::vec(j.at("incidence_mean"));
  f.incidence.sd = json_eigen::vec(j.at("incidence_sd"));
  f.lags = j.at("lags").get<std::vector<int>>();
  f.term_labels = j.at("term_labels").get<std::vector<std::string>>();
  f.districts = j.at("districts").get<std::vector<PcrDistrictFit>>();
  f.train_first = j.at("train_first").get<int>();
  f.train_last = j.at("train_last").get<int>();
}

}  // namespace distcast
