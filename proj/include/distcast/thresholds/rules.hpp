#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "distcast/core/errors.hpp"
#include "distcast/core/quantile.hpp"
#include "distcast/core/random.hpp"
#include "distcast/panel/features.hpp"
#include "distcast/panel/panel.hpp"

namespace distcast {

enum class RuleKind { Mean2Sd, Percentile95, PoissonGlm, FixedRate };
enum class Label { Outbreak, NoOutbreak, Undefined };

inline constexpr std::array<double, 6> kFixedRateLevels{20, 50, 100, 150, 200, 300};

inline std::string to_string(RuleKind k) {
  switch (k) {
    case RuleKind::Mean2Sd: return "mean_plus_2sd";
    case RuleKind::Percentile95: return "percentile_95";
    case RuleKind::PoissonGlm: return "poisson_glm";
    case RuleKind::FixedRate: return "fixed_rate";
  }
  return "?";
}

inline std::string to_string(Label l) {
  switch (l) {
    case Label::Outbreak: return "outbreak";
    case Label::NoOutbreak: return "no_outbreak";
    case Label::Undefined: return "undefined";
  }
  return "?";
}

inline RuleKind parse_rule_kind(const std::string& s) {
  for (const auto k : {RuleKind::Mean2Sd, RuleKind::Percentile95, RuleKind::PoissonGlm,
                       RuleKind::FixedRate}) {
    if (s == to_string(k)) return k;
  }
  throw InputError("unknown outbreak rule '" + s + "'");
}

struct OutbreakRule {
  RuleKind kind = RuleKind::FixedRate;
  double level = 50.0;         // fixed_rate, cases per 100k
  bool retrospective = false;  // percentile_95: use every year, including later ones
  int n_sims = 1000;           // poisson_glm
  bool parameter_uncertainty = true;
  std::uint64_t seed = 0;

  std::string name() const {
    if (kind == RuleKind::FixedRate) {
      return to_string(kind) + "_" + std::to_string(static_cast<int>(level));
    }
    return to_string(kind);
  }

  void check() const {
    if (kind == RuleKind::FixedRate &&
        std::find(kFixedRateLevels.begin(), kFixedRateLevels.end(), level) ==
            kFixedRateLevels.end()) {
      throw InputError("fixed-rate level must be one of 20, 50, 100, 150, 200, 300");
    }
    if (kind == RuleKind::PoissonGlm && n_sims < 1) throw InputError("n_sims must be positive");
  }
};

struct OutbreakRuleResult {
  double threshold = std::nan("");  // NaN when undefined
  Label label = Label::Undefined;
  int history_size = 0;
  std::string diagnostic;

  bool defined() const { return !std::isnan(threshold); }
};

/// Strict exceedance.
inline Label label_for(double observed, double threshold) {
  if (std::isnan(threshold) || std::isnan(observed)) return Label::Undefined;
  return observed > threshold ? Label::Outbreak : Label::NoOutbreak;
}

inline OutbreakRuleResult finish(double observed, double threshold, int history,
                                 std::string diagnostic = {}) {
  return {threshold, label_for(observed, threshold), history, std::move(diagnostic)};
}

struct HistoryThreshold {
  std::optional<double> threshold;
  int used = 0;
};

// ---------- mean + 2 sd ----------

inline constexpr int kMean2SdWindow = 5;
inline constexpr int kMean2SdMinValues = 3;
inline constexpr int kMean2SdMaxLookbackYears = 10;

/// Same-month values, most recent first (at most the lookback cap). A window of the five
/// most recent usable values gives mean + 2 sd; window members above it are excluded and
/// replaced by older years until nothing changes.
inline HistoryThreshold mean_2sd_from_history(std::span<const double> newest_first) {
  std::vector<double> candidates;
  for (std::size_t k = 0; k < newest_first.size() && k < kMean2SdMaxLookbackYears; ++k) {
    if (std::isfinite(newest_first[k])) candidates.push_back(newest_first[k]);
  }
  std::vector<bool> excluded(candidates.size(), false);
  while (true) {
    std::vector<std::size_t> window;
    for (std::size_t k = 0; k < candidates.size() && window.size() < kMean2SdWindow; ++k) {
      if (!excluded[k]) window.push_back(k);
    }
    if (window.size() < kMean2SdMinValues) return {std::nullopt, static_cast<int>(window.size())};
    double mean = 0.0;
    for (const auto k : window) mean += candidates[k];
    mean /= static_cast<double>(window.size());
    double ss = 0.0;
    for (const auto k : window) ss += (candidates[k] - mean) * (candidates[k] - mean);
    const double thr = mean + 2.0 * std::sqrt(ss / static_cast<double>(window.size() - 1));
    bool changed = false;
    for (const auto k : window) {
      if (candidates[k] > thr) {
        excluded[k] = true;
        changed = true;
      }
    }
    if (!changed) return {thr, static_cast<int>(window.size())};
  }
}

/// Same-calendar-month values before t, newest first.
inline std::vector<double> same_month_history(const PanelDataset& p, int i, int t, int max_years) {
  std::vector<double> out;
  for (int s = t - 12; s >= 0 && static_cast<int>(out.size()) < max_years; s -= 12) {
    out.push_back(p.cases(i, s));
  }
  return out;
}

inline OutbreakRuleResult mean_2sd_threshold(const PanelDataset& p, int i, int t) {
  const auto hist = same_month_history(p, i, t, kMean2SdMaxLookbackYears);
  const auto r = mean_2sd_from_history(hist);
  if (!r.threshold) return {std::nan(""), Label::Undefined, r.used, "insufficient history"};
  return finish(p.cases(i, t), *r.threshold, r.used);
}

// ---------- 95th percentile ----------

inline constexpr int kPercentileMinValues = 5;

inline HistoryThreshold percentile95_from_history(std::span<const double> history) {
  std::vector<double> v;
  for (const double x : history) {
    if (std::isfinite(x)) v.push_back(x);
  }
  if (static_cast<int>(v.size()) < kPercentileMinValues) {
    return {std::nullopt, static_cast<int>(v.size())};
  }
  return {quantile(v, 0.95), static_cast<int>(v.size())};
}

inline OutbreakRuleResult percentile95_threshold(const PanelDataset& p, int i, int t,
                                                 bool retrospective = false) {
  std::vector<double> hist;
  // Retrospective mode labels with the whole series, the target month included.
  for (int s = t % 12; s < p.T(); s += 12) {
    if (!retrospective && s >= t) break;
    hist.push_back(p.cases(i, s));
  }
  const auto r = percentile95_from_history(hist);
  if (!r.threshold) return {std::nan(""), Label::Undefined, r.used, "insufficient history"};
  return finish(p.cases(i, t), *r.threshold, r.used);
}

// ---------- Poisson GLM ----------

inline constexpr int kPoissonMinHistory = 24;
inline constexpr double kPoissonQuantile = 0.975;

struct PoissonGlmFit {
  bool converged = false;
  bool degenerate = false;  // all-zero history
  bool boundary = false;    // target month never had a case: MLE rate is 0
  double eta = 0.0;         // log rate for the target month (without offset)
  double variance = 0.0;    // asymptotic variance of eta
  int iterations = 0;
  std::string diagnostic;
};

/// IRLS fit of log E[Y_s] = log p_s + b0 + sum_m g_m [m(s) = m] on the history, returning the
/// target month's linear predictor and its asymptotic variance. Months whose history is all zero
/// have MLE at -infinity; they are left out of the design, which does not change the other
/// months' estimates in this saturated month model.
inline PoissonGlmFit fit_poisson_month_glm(std::span<const double> y, std::span<const double> pop,
                                           std::span<const int> month_of_year, int target_month) {
  PoissonGlmFit fit;
  std::array<double, 13> total{};
  for (std::size_t s = 0; s < y.size(); ++s) total[month_of_year[s]] += y[s];
  double all = 0.0;
  for (int m = 1; m <= 12; ++m) all += total[m];
  if (all <= 0.0) {
    fit.degenerate = true;
    fit.diagnostic = "all-zero history";
    return fit;
  }
  if (total[target_month] <= 0.0) {
    fit.boundary = true;
    fit.converged = true;
    fit.eta = -std::numeric_limits<double>::infinity();
    fit.diagnostic = "target month has no historical cases";
    return fit;
  }
  // Column map: the target month is the reference level, other non-zero months get dummies.
  std::array<int, 13> col{};
  col.fill(-1);
  int p = 1;
  for (int m = 1; m <= 12; ++m) {
    if (m != target_month && total[m] > 0.0) col[m] = p++;
  }
  std::vector<std::size_t> rows;
  for (std::size_t s = 0; s < y.size(); ++s) {
    if (total[month_of_year[s]] > 0.0) rows.push_back(s);
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, p);
  Eigen::VectorXd Y(n), off(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto s = rows[r];
    X(r, 0) = 1.0;
    if (col[month_of_year[s]] > 0) X(r, col[month_of_year[s]]) = 1.0;
    Y(r) = y[s];
    off(r) = std::log(pop[s]);
  }
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  beta(0) = std::log(Y.sum() / off.array().exp().sum());
  double dev_old = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd info;
  for (int it = 1; it <= 100; ++it) {
    const Eigen::VectorXd eta = X * beta + off;
    const Eigen::VectorXd mu = eta.array().exp();
    const Eigen::VectorXd z = eta - off + ((Y - mu).array() / mu.array()).matrix();
    info = X.transpose() * mu.asDiagonal() * X;
    beta = info.ldlt().solve(X.transpose() * (mu.asDiagonal() * z));
    const Eigen::VectorXd mu_new = (X * beta + off).array().exp();
    double dev = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
      dev += 2.0 * ((Y(r) > 0 ? Y(r) * std::log(Y(r) / mu_new(r)) : 0.0) - (Y(r) - mu_new(r)));
    }
    fit.iterations = it;
    if (std::abs(dev - dev_old) <= 1e-12 * (std::abs(dev) + 1.0)) {
      fit.converged = true;
      break;
    }
    dev_old = dev;
  }
  if (!fit.converged) {
    fit.diagnostic = "IRLS did not converge";
    return fit;
  }
  const Eigen::VectorXd mu = (X * beta + off).array().exp();
  info = X.transpose() * mu.asDiagonal() * X;
  const Eigen::MatrixXd cov = info.inverse();
  fit.eta = beta(0);
  fit.variance = cov(0, 0);
  return fit;
}

/// Simulates the target month: eta ~ N(eta_hat, var) (skipped without parameter uncertainty),
/// then one Poisson count per draw; returns the type-7 97.5th percentile of the counts.
inline double poisson_simulated_threshold(const PoissonGlmFit& fit, double log_pop, int n_sims,
                                          bool parameter_uncertainty, Rng& rng) {
  if (fit.boundary) return 0.0;
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sd = parameter_uncertainty ? std::sqrt(fit.variance) : 0.0;
  std::vector<double> draws(static_cast<std::size_t>(n_sims));
  for (auto& d : draws) {
    const double eta = fit.eta + log_pop + sd * normal(rng);
    d = static_cast<double>(draw_poisson_log(rng, eta));
  }
  return quantile(draws, kPoissonQuantile);
}

inline OutbreakRuleResult poisson_threshold(const PanelDataset& p, int i, int t, int n_sims,
                                            std::uint64_t seed, bool parameter_uncertainty = true) {
  if (t < kPoissonMinHistory) return {std::nan(""), Label::Undefined, t, "insufficient history"};
  std::vector<double> y(t), pop(t);
  std::vector<int> moy(t);
  for (int s = 0; s < t; ++s) {
    y[s] = p.cases(i, s);
    pop[s] = p.population(i, s);
    moy[s] = p.month_of_year(s);
  }
  const auto fit = fit_poisson_month_glm(y, pop, moy, p.month_of_year(t));
  if (fit.degenerate || !fit.converged) return {std::nan(""), Label::Undefined, t, fit.diagnostic};
  auto rng = make_rng(seed, {0x706f6973, i, p.months[t].index()});
  const double thr = poisson_simulated_threshold(fit, std::log(p.population_at(i, t)), n_sims,
                                                 parameter_uncertainty, rng);
  return finish(p.cases(i, t), thr, t, fit.diagnostic);
}

// ---------- fixed rate ----------

inline double fixed_rate_value(double level, double population) {
  return level * population / kIncidenceScale;
}

inline OutbreakRuleResult fixed_rate_threshold(const PanelDataset& p, int i, int t, double level) {
  return finish(p.cases(i, t), fixed_rate_value(level, p.population_at(i, t)), 1);
}

// ---------- dispatch ----------

inline OutbreakRuleResult evaluate_rule(const OutbreakRule& rule, const PanelDataset& p, int i,
                                        int t) {
  switch (rule.kind) {
    case RuleKind::Mean2Sd: return mean_2sd_threshold(p, i, t);
    case RuleKind::Percentile95: return percentile95_threshold(p, i, t, rule.retrospective);
    case RuleKind::PoissonGlm:
      return poisson_threshold(p, i, t, rule.n_sims, rule.seed, rule.parameter_uncertainty);
    case RuleKind::FixedRate: return fixed_rate_threshold(p, i, t, rule.level);
  }
  throw PreconditionError("unknown rule");
}

/// Fraction of samples strictly above the threshold; empty when the threshold is undefined.
template <typename T>
std::optional<double> outbreak_probability(std::span<const T> samples, double threshold) {
  if (std::isnan(threshold)) return std::nullopt;
  if (samples.empty()) throw PreconditionError("outbreak probability needs at least one sample");
  std::size_t above = 0;
  for (const auto v : samples) above += static_cast<double>(v) > threshold;
  return static_cast<double>(above) / static_cast<double>(samples.size());
}

template <typename T>
std::optional<double> outbreak_probability(const std::vector<T>& samples, double threshold) {
  return outbreak_probability(std::span<const T>(samples), threshold);
}

}  // namespace distcast
