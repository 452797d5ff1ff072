#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
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

/// Design for the hierarchical Poisson family: the lagged-case offset term plus raw regressors,
/// all extended `extend` months past the panel end.
struct StDesign {
  std::optional<FeatureMatrix> offset_term;
  std::vector<FeatureMatrix> terms;
  int extend = 0;

  bool ok(int i, int t) const {
    if (offset_term && !offset_term->ok(i, t)) return false;
    for (const auto& f : terms) {
      if (!f.ok(i, t)) return false;
    }
    return true;
  }

  /// Largest source month any feature reads at column t (t - min lag).
  int newest_source(int t) const {
    int newest = -1;
    if (offset_term) newest = std::max(newest, t - offset_term->min_source_lag);
    for (const auto& f : terms) newest = std::max(newest, t - f.min_source_lag);
    return newest;
  }
};

inline StDesign build_design(const ModelSpec& spec, const PanelDataset& p, int horizon) {
  if (spec.family != Family::Spatiotemporal && spec.family != Family::Reference) {
    throw PreconditionError("build_design expects a spatiotemporal or reference spec");
  }
  if (horizon < 0) throw PreconditionError("negative horizon");
  if (spec.st.offset_term && spec.st.case_lag < horizon) {
    throw InputError("model '" + spec.name + "': case lag " + std::to_string(spec.st.case_lag) +
                     " is shorter than horizon " + std::to_string(horizon));
  }
  for (const auto& t : spec.st.terms) {
    if (t.lag < horizon) {
      throw InputError("model '" + spec.name + "': term " + t.label() + " has lag below horizon " +
                       std::to_string(horizon));
    }
  }
  StDesign d;
  d.extend = horizon;
  if (spec.st.offset_term) d.offset_term = lagged_offset_term(p, spec.st.case_lag, horizon);
  for (const auto& t : spec.st.terms) d.terms.push_back(term_feature(p, t, horizon));
  return d;
}

/// Fitted state: latent layout, hyperparameters and the Gaussian over the latent vector.
struct StFit {
  int alpha = 0;
  std::vector<int> beta;
  std::vector<std::string> term_labels;
  std::vector<PooledScale> scales;
  int season = -1;  // n x 12 block, district-major
  int delta = -1;
  int delta_groups = 0;
  int delta_length = 0;      // years covered by the training rows
  int delta_first_year = 0;  // panel year index of delta[.,0]
  double delta_sigma = 0.0;
  double delta_rho = 0.0;
  int spatial = -1;  // first entry of the effect entering the predictor
  SpatialKind spatial_kind = SpatialKind::None;
  std::vector<std::string> hyper_names;
  Eigen::VectorXd theta;
  Eigen::VectorXd x;
  Eigen::MatrixXd cov;
  int train_first = 0;  // panel month index of the first training row
  int train_last = 0;
  int n_obs = 0;

  /// Latent index of delta for panel year `a` (must be a fitted year).
  int delta_index(int district, int a) const {
    const int g = delta_groups > 1 ? district : 0;
    return delta + g * delta_length + (a - delta_first_year);
  }
};

/// Linear predictor on the log-count scale with latent values `x`:
/// log p + alpha + offset term + sum beta X + eta + delta + theta. Only for fitted years.
inline double log_mean(const StFit& f, const Eigen::VectorXd& x, const StDesign& d,
                       const PanelDataset& p, int i, int t) {
  if (!d.ok(i, t)) throw PreconditionError("design cell is masked");
  double eta = std::log(p.population_at(i, t)) + x(f.alpha);
  if (d.offset_term) eta += d.offset_term->values(i, t);
  for (std::size_t k = 0; k < f.beta.size(); ++k) {
    eta += x(f.beta[k]) * f.scales[k].apply(d.terms[k].values(i, t));
  }
  if (f.season >= 0) eta += x(f.season + i * 12 + p.month_of_year(t) - 1);
  if (f.delta >= 0) {
    const int a = p.year_index(t);
    if (a - f.delta_first_year >= f.delta_length) throw PreconditionError("year outside the fitted range");
    eta += x(f.delta_index(i, a));
  }
  if (f.spatial >= 0) eta += x(f.spatial + i);
  return eta;
}

struct StFitOptions {
  latent::LaplaceOptions laplace{};
  const Eigen::VectorXd* theta0 = nullptr;  // warm start
};

/// Fits on every month of `p`; rows with any masked feature are skipped.
inline std::pair<StFit, FitDiagnostics> fit_st(const ModelSpec& spec, const PanelDataset& p,
                                               const StFitOptions& opt = {}) {
  spec.check(&p);
  if (p.T() == 0 || p.n() == 0) throw PreconditionError("empty training window");
  const int lag_need = std::max(spec.st.offset_term ? spec.st.case_lag : 0, [&] {
    int m = 0;
    for (const auto& t : spec.st.terms) m = std::max(m, t.lag + (t.kind == "cuminc" ? t.window - 1 : 0));
    return m;
  }());
  if (p.T() <= lag_need + 1) {
    throw PreconditionError("training window of " + std::to_string(p.T()) +
                            " months is too short for model '" + spec.name + "'");
  }
  const auto design = build_design(spec, p, 0);
  const int n = p.n(), T = p.T();

  StFit f;
  int first = T, last = -1;
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < n; ++i) {
      if (design.ok(i, t)) {
        first = std::min(first, t);
        last = std::max(last, t);
      }
    }
  }
  if (last < 0) throw PreconditionError("empty training window for model '" + spec.name + "'");
  f.train_first = first;
  f.train_last = last;
  for (std::size_t k = 0; k < design.terms.size(); ++k) {
    f.term_labels.push_back(spec.st.terms[k].label());
    f.scales.push_back(pooled_scale(design.terms[k], first, last + 1));
  }

  latent::LatentModel m;
  const int K = static_cast<int>(design.terms.size());
  Eigen::VectorXd prec = Eigen::VectorXd::Ones(1 + K);
  prec(0) = 1.0 / 25.0;
  const int fixed = m.add_fixed("fixed", prec);
  int season = -1, delta = -1, spatial = -1;
  if (spec.st.seasonal) season = m.add_rw1_cyclic("season", n);
  if (spec.st.temporal) {
    f.delta_first_year = p.year_index(first);
    f.delta_length = p.year_index(last) - f.delta_first_year + 1;
    f.delta_groups = spec.st.per_district_ar1 ? n : 1;
    delta = m.add_ar1("delta", f.delta_groups, f.delta_length);
  }
  f.spatial_kind = spec.st.spatial;
  switch (spec.st.spatial) {
    case SpatialKind::None: break;
    case SpatialKind::Iid: spatial = m.add_iid("theta", n); break;
    case SpatialKind::Besag:
      if (n < 2) throw PreconditionError("a Besag effect needs at least 2 districts");
      spatial = m.add_besag("theta", p.adjacency);
      break;
    case SpatialKind::Bym2:
      if (n < 2) throw PreconditionError("a BYM2 effect needs at least 2 districts");
      spatial = m.add_bym2("theta", p.adjacency);
      break;
  }
  f.alpha = m.blocks[fixed].offset;
  for (int k = 0; k < K; ++k) f.beta.push_back(f.alpha + 1 + k);
  f.season = season >= 0 ? m.blocks[season].offset : -1;
  f.delta = delta >= 0 ? m.blocks[delta].offset : -1;
  f.spatial = spatial >= 0 ? m.blocks[spatial].offset : -1;

  std::vector<std::pair<int, double>> entries;
  for (int t = first; t <= last; ++t) {
    for (int i = 0; i < n; ++i) {
      if (!design.ok(i, t)) continue;
      entries.clear();
      entries.emplace_back(f.alpha, 1.0);
      for (int k = 0; k < K; ++k) {
        entries.emplace_back(f.beta[k], f.scales[k].apply(design.terms[k].values(i, t)));
      }
      if (f.season >= 0) entries.emplace_back(f.season + i * 12 + p.month_of_year(t) - 1, 1.0);
      if (f.delta >= 0) entries.emplace_back(f.delta_index(i, p.year_index(t)), 1.0);
      if (f.spatial >= 0) entries.emplace_back(f.spatial + i, 1.0);
      double off = std::log(p.population(i, t));
      if (design.offset_term) off += design.offset_term->values(i, t);
      m.add_observation(p.cases(i, t), off, entries);
    }
  }
  f.n_obs = m.n_obs();

  const Eigen::VectorXd* theta0 = opt.theta0;
  if (theta0 && theta0->size() != static_cast<Eigen::Index>(m.hypers.size())) theta0 = nullptr;
  const auto fit = latent::fit_laplace(m, opt.laplace, theta0);
  f.theta = fit.theta;
  for (const auto& h : m.hypers) f.hyper_names.push_back(h.name);
  f.x = fit.x;
  f.cov = fit.cov;
  if (delta >= 0) {
    const auto& b = m.blocks[delta];
    f.delta_sigma = m.hypers[b.sigma].natural(f.theta(b.sigma));
    f.delta_rho = m.hypers[b.rho].natural(f.theta(b.rho));
  }
  FitDiagnostics d;
  d.converged = fit.converged || (fit.relative_gradient <= opt.laplace.outer.grad_tol && std::isfinite(fit.log_marginal));
  d.objective = fit.log_marginal;
  d.iterations = fit.outer_iterations;
  d.evaluations = fit.evaluations;
  d.relative_gradient = fit.relative_gradient;
  d.message = fit.message;
  return {std::move(f), d};
}

/// Moments of the log mean at panel month t (possibly past the panel end), with AR(1)
/// extrapolation of delta into years beyond the training rows.
inline PredictorMoments st_predictor(const StFit& f, const StDesign& d, const PanelDataset& p, int i,
                                     int t) {
  for (std::size_t k = 0; k < d.terms.size(); ++k) {
    if (!d.terms[k].ok(i, t)) throw_missing_cell(p, d.terms[k], i, t);
  }
  if (d.offset_term && !d.offset_term->ok(i, t)) throw_missing_cell(p, *d.offset_term, i, t);
  std::vector<std::pair<int, double>> a;
  a.emplace_back(f.alpha, 1.0);
  for (std::size_t k = 0; k < f.beta.size(); ++k) {
    a.emplace_back(f.beta[k], f.scales[k].apply(d.terms[k].values(i, t)));
  }
  if (f.season >= 0) a.emplace_back(f.season + i * 12 + p.month_of_year(t) - 1, 1.0);
  double extra = 0.0;
  if (f.delta >= 0) {
    const int rel = p.year_index(t) - f.delta_first_year;
    if (rel < f.delta_length) {
      a.emplace_back(f.delta_index(i, p.year_index(t)), 1.0);
    } else {
      const int steps = rel - (f.delta_length - 1);
      const double rk = std::pow(f.delta_rho, steps);
      a.emplace_back(f.delta_index(i, f.delta_first_year + f.delta_length - 1), rk);
      extra = f.delta_sigma * f.delta_sigma * (1.0 - rk * rk);
    }
  }
  if (f.spatial >= 0) a.emplace_back(f.spatial + i, 1.0);
  PredictorMoments mo;
  mo.mean = std::log(p.population_at(i, t));
  if (d.offset_term) mo.mean += d.offset_term->values(i, t);
  for (const auto& [k, v] : a) mo.mean += v * f.x(k);
  double var = 0.0;
  for (const auto& [k1, v1] : a) {
    for (const auto& [k2, v2] : a) var += v1 * v2 * f.cov(k1, k2);
  }
  mo.variance = std::max(0.0, var) + extra;
  return mo;
}

/// Forecasts every district at each horizon from the last month of `p` (the origin).
inline std::vector<ForecastDistribution> forecast_st(const StFit& f, const ModelSpec& spec,
                                                     const PanelDataset& p,
                                                     const std::vector<int>& horizons, int n_samples,
                                                     std::uint64_t seed) {
  if (n_samples < 1) throw PreconditionError("n_samples must be >= 1");
  int hmax = 0;
  for (const int h : horizons) hmax = std::max(hmax, h);
  const auto design = build_design(spec, p, hmax);
  const YearMonth origin = p.months.back();
  const int T = p.T();
  std::vector<ForecastDistribution> out;
  for (const int h : horizons) {
    for (int i = 0; i < p.n(); ++i) {
      const auto mo = st_predictor(f, design, p, i, T - 1 + h);
      auto rng = make_rng(seed, {model_tag(spec.name), i, origin.index(), h});
      out.push_back({p.districts[static_cast<std::size_t>(i)], origin, h,
                     draw_lognormal_poisson(rng, mo, n_samples)});
    }
  }
  return out;
}

inline void to_json(nlohmann::json& j, const StFit& f) {
  j = {{"alpha", f.alpha},
       {"beta", f.beta},
       {"term_labels", f.term_labels},
       {"scales", f.scales},
       {"season", f.season},
       {"delta", f.delta},
       {"delta_groups", f.delta_groups},
       {"delta_length", f.delta_length},
       {"delta_first_year", f.delta_first_year},
       {"delta_sigma", f.delta_sigma},
       {"delta_rho", f.delta_rho},
       {"spatial", f.spatial},
       {"spatial_kind", to_string(f.spatial_kind)},
       {"hyper_names", f.hyper_names},
       {"theta", json_eigen::vec(f.theta)},
       {"x", json_eigen::vec(f.x)},
       {"cov", json_eigen::mat(f.cov)},
       {"train_first", f.train_first},
       {"train_last", f.train_last},
       {"n_obs", f.n_obs}};
}

inline void from_json(const nlohmann::json& j, StFit& f) {
  f.alpha = j.at("alpha").get<int>();
  f.beta = j.at("beta").get<std::vector<int>>();
  f.term_labels = j.at("term_labels").get<std::vector<std::string>>();
  f.scales = j.at("scales").get<std::vector<PooledScale>>();
  f.season = j.at("season").get<int>();
  f.delta = j.at("delta").get<int>();
  f.delta_groups = j.at("delta_groups").get<int>();
  f.delta_length = j.at("delta_length").get<int>();
  f.delta_first_year = j.at("delta_first_year").get<int>();
  f.delta_sigma = j.at("delta_sigma").get<double>();
  f.delta_rho = j.at("delta_rho").get<double>();
  f.spatial = j.at("spatial").get<int>();
  f.spatial_kind = parse_spatial(j.at("spatial_kind").get<std::string>());
  f.hyper_names = j.at("hyper_names").get<std::vector<std::string>>();
  f.theta = json_eigen::vec(j.at("theta"));
  f.x = json_eigen::vec(j.at("x"));
  f.cov = json_eigen::mat(j.at("cov"));
  f.train_first = j.at("train_first").get<int>();
  f.train_last = j.at("train_last").get<int>();
  f.n_obs = j.at("n_obs").get<int>();
}

}  // namespace distcast
