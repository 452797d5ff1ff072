#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "distcast/core/calendar.hpp"
#include "distcast/core/errors.hpp"
#include "distcast/core/parallel.hpp"
#include "distcast/ensemble/pool.hpp"
#include "distcast/ensemble/weights.hpp"
#include "distcast/model/model.hpp"
#include "distcast/scoring/scores.hpp"
#include "distcast/thresholds/rules.hpp"

namespace distcast {

inline constexpr const char* kEnsembleName = "ensemble";
inline constexpr const char* kAllDistricts = "ALL";

/// Rolling-origin plan: one origin per month, every origin before the evaluation split.
struct TscvPlan {
  YearMonth initial_train_end;
  std::vector<YearMonth> origins;
  std::vector<int> horizons{1, 2, 3};
  YearMonth eval_start;

  static TscvPlan monthly(YearMonth initial_train_end, YearMonth first_origin, YearMonth last_origin,
                          YearMonth eval_start, std::vector<int> horizons = {1, 2, 3}) {
    TscvPlan p;
    p.initial_train_end = initial_train_end;
    for (YearMonth o = first_origin; o <= last_origin; o = o.plus(1)) p.origins.push_back(o);
    p.horizons = std::move(horizons);
    p.eval_start = eval_start;
    return p;
  }

  int max_horizon() const { return *std::max_element(horizons.begin(), horizons.end()); }

  void validate() const {
    if (origins.empty()) throw InputError("plan has no origins");
    if (horizons.empty()) throw InputError("plan has no horizons");
    std::set<int> seen;
    for (const int h : horizons) {
      if (h < 1 || h > 3) throw InputError("plan horizons must be 1, 2 or 3");
      if (!seen.insert(h).second) throw InputError("plan repeats horizon " + std::to_string(h));
    }
    for (std::size_t k = 1; k < origins.size(); ++k) {
      if (months_between(origins[k - 1], origins[k]) != 1) {
        throw InputError("plan origins must advance one month at a time (" + origins[k - 1].to_string() +
                         " -> " + origins[k].to_string() + ")");
      }
    }
    if (origins.front() < initial_train_end) {
      throw InputError("first origin " + origins.front().to_string() + " precedes the initial training end " +
                       initial_train_end.to_string());
    }
    if (!(origins.back() < eval_start)) {
      throw InputError("cross-validation origin " + origins.back().to_string() +
                       " overlaps the evaluation split starting " + eval_start.to_string());
    }
  }

  /// Also requires every origin and every target month to lie inside the panel.
  void validate(const PanelDataset& p) const {
    validate();
    p.time_index(initial_train_end);
    p.time_index(origins.front());
    const YearMonth last_target = origins.back().plus(max_horizon());
    if (p.months.back() < last_target) {
      throw InputError("plan targets run to " + last_target.to_string() + " but the panel ends " +
                       p.months.back().to_string());
    }
  }
};

inline void to_json(nlohmann::json& j, const TscvPlan& p) {
  std::vector<std::string> origins;
  for (const auto& o : p.origins) origins.push_back(o.to_string());
  j = {{"initial_train_end", p.initial_train_end.to_string()},
       {"origins", origins},
       {"horizons", p.horizons},
       {"eval_start", p.eval_start.to_string()}};
}

inline void from_json(const nlohmann::json& j, TscvPlan& p) {
  p.initial_train_end = YearMonth::parse(j.at("initial_train_end").get<std::string>());
  p.origins.clear();
  for (const auto& o : j.at("origins")) p.origins.push_back(YearMonth::parse(o.get<std::string>()));
  p.horizons = j.at("horizons").get<std::vector<int>>();
  p.eval_start = YearMonth::parse(j.at("eval_start").get<std::string>());
}

/// Origins of the out-of-sample evaluation run.
struct EvalWindow {
  YearMonth first_origin;
  YearMonth last_origin;

  std::vector<YearMonth> origins() const {
    std::vector<YearMonth> out;
    for (YearMonth o = first_origin; o <= last_origin; o = o.plus(1)) out.push_back(o);
    return out;
  }

  void validate(const TscvPlan& plan, const PanelDataset& p) const {
    if (last_origin < first_origin) throw InputError("evaluation window ends before it starts");
    if (first_origin < plan.eval_start || !(plan.origins.back() < first_origin)) {
      throw InputError("evaluation window starting " + first_origin.to_string() +
                       " overlaps the cross-validation window (last origin " + plan.origins.back().to_string() +
                       ", evaluation split " + plan.eval_start.to_string() + ")");
    }
    const YearMonth last_target = last_origin.plus(plan.max_horizon());
    if (p.months.back() < last_target) {
      throw InputError("evaluation targets run to " + last_target.to_string() + " but the panel ends " +
                       p.months.back().to_string());
    }
  }
};

// ---------- leakage audit ----------

struct LeakageFinding {
  std::string model;
  YearMonth origin;
  std::string feature;
  std::string district;
  YearMonth month;   // feature column
  YearMonth source;  // newest panel month the cell reads
};

struct LeakageAudit {
  std::size_t fits = 0;
  std::size_t cells = 0;
  std::vector<LeakageFinding> findings;

  bool clean() const { return findings.empty(); }
  void merge(const LeakageAudit& o) {
    fits += o.fits;
    cells += o.cells;
    findings.insert(findings.end(), o.findings.begin(), o.findings.end());
  }
};

namespace detail {

struct ConsumedFeature {
  FeatureMatrix feature;
  int last_column;  // newest column whose observed values the model reads
};

inline std::vector<ConsumedFeature> consumed_features(const ModelSpec& spec, const PanelDataset& p, int origin_t,
                                                      int hmax) {
  std::vector<ConsumedFeature> out;
  const int through = origin_t + hmax;
  auto add = [&](FeatureMatrix f, int last) { out.push_back({std::move(f), std::min(last, p.T() - 1)}); };
  for (const auto& t : spec.all_terms()) {
    if (t.lag < p.T()) add(term_feature(p, t, 0), through);
  }
  switch (spec.family) {
    case Family::Reference: break;
    case Family::Spatiotemporal:
      if (spec.st.offset_term) add(lagged_offset_term(p, spec.st.case_lag, 0), through);
      break;
    case Family::Hhh4:
      // Beyond one step the simulated paths feed their own draws back, not observed counts.
      if (spec.hhh4.epidemic_component || spec.hhh4.neighbourhood_component) add(lag_cases(p, 1, 0), origin_t + 1);
      break;
    case Family::Pca: {
      const auto li = log_incidence(p);
      for (const int l : spec.pca.lags) add(lag_feature(li, l, 0), through);
      break;
    }
  }
  return out;
}

}  // namespace detail

/// Scans what a fit/forecast at `origin_t` consumes: the panel it was handed (`seen`) must end
/// at the origin, and every valid feature cell it reads must have its source month <= origin.
/// Features are rebuilt on the full panel so a too-short lag would show up as a finding.
inline LeakageAudit audit_inputs(const ModelSpec& spec, const PanelDataset& full, const PanelDataset& seen,
                                 int origin_t, int hmax) {
  LeakageAudit a;
  a.fits = 1;
  const YearMonth origin = full.months[static_cast<std::size_t>(origin_t)];
  if (seen.months.empty() || seen.months.back() != origin || seen.T() != origin_t + 1 ||
      seen.cases.cols() != origin_t + 1) {
    a.findings.push_back({spec.name, origin, "panel", "", seen.months.empty() ? origin : seen.months.back(),
                          seen.months.empty() ? origin : seen.months.back()});
  }
  for (const auto& [f, last] : detail::consumed_features(spec, full, origin_t, hmax)) {
    for (int i = 0; i < f.rows(); ++i) {
      for (int t = 0; t <= last; ++t) {
        if (!f.valid(i, t)) continue;
        ++a.cells;
        const int source = t - f.min_source_lag;
        if (source > origin_t) {
          a.findings.push_back({spec.name, origin, f.name, full.districts[static_cast<std::size_t>(i)],
                                full.month_at(t), full.month_at(source)});
        }
      }
    }
  }
  return a;
}

// ---------- scoring ----------

struct RuleThresholds {
  OutbreakRule rule;
  Eigen::MatrixXd threshold;  // n x T; NaN where undefined or not computed
};

/// Thresholds for target months [t_first, t_last] of every rule, from the full panel. History
/// rules only read months before the target; the fixed-rate rule reads the population.
inline std::vector<RuleThresholds> compute_thresholds(const PanelDataset& p, const std::vector<OutbreakRule>& rules,
                                                      int t_first, int t_last, unsigned jobs = default_jobs()) {
  std::vector<RuleThresholds> out;
  for (const auto& r : rules) {
    r.check();
    out.push_back({r, Eigen::MatrixXd::Constant(p.n(), p.T(), std::nan(""))});
  }
  t_first = std::max(t_first, 0);
  t_last = std::min(t_last, p.T() - 1);
  const std::size_t n = static_cast<std::size_t>(p.n());
  parallel_for(out.size() * n, jobs, [&](std::size_t k) {
    auto& rt = out[k / n];
    const int i = static_cast<int>(k % n);
    for (int t = t_first; t <= t_last; ++t) rt.threshold(i, t) = evaluate_rule(rt.rule, p, i, t).threshold;
  });
  return out;
}

struct OutbreakRow {
  std::string model;
  std::string district;
  YearMonth origin;
  int horizon = 1;
  std::string rule;
  double threshold = std::nan("");
  double probability = std::nan("");
  Label label = Label::Undefined;
};

/// Mean and central 95% interval of one forecast unit; district "ALL" rows sum the districts
/// sample by sample.
struct ForecastSummary {
  std::string model;
  std::string district;
  YearMonth origin;
  int horizon = 1;
  double observed = std::nan("");
  double mean = 0.0, q025 = 0.0, q50 = 0.0, q975 = 0.0;

  YearMonth target() const { return origin.plus(horizon); }
};

inline ForecastSummary summarize(const std::string& model, const ForecastDistribution& f, double observed) {
  ForecastSummary s{model, f.district, f.origin, f.horizon, observed};
  auto sorted = f.samples;
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (const double v : sorted) sum += v;
  s.mean = sum / static_cast<double>(sorted.size());
  s.q025 = quantile_sorted<double>(sorted, 0.025);
  s.q50 = quantile_sorted<double>(sorted, 0.5);
  s.q975 = quantile_sorted<double>(sorted, 0.975);
  return s;
}

inline std::string brier_metric(const OutbreakRule& r) { return "brier:" + r.name(); }

/// Appends the score rows and outbreak rows of one forecast whose target is inside the panel.
inline void score_unit(const std::string& model, const ForecastDistribution& f, const PanelDataset& p,
                       const std::vector<RuleThresholds>& rules, std::vector<ScoreRow>& scores,
                       std::vector<OutbreakRow>* outbreaks) {
  f.require_scorable();
  const int i = p.district_index(f.district);
  const int t = p.time_index(f.target());
  const double y = p.cases(i, t);
  scores.push_back({f.district, f.origin, f.horizon, "crps", crps(f.samples, y)});
  scores.push_back({f.district, f.origin, f.horizon, "bias", bias(f.samples, y)});
  scores.push_back({f.district, f.origin, f.horizon, "diffuseness", diffuseness(f.samples)});
  for (const auto& rt : rules) {
    const double thr = rt.threshold(i, t);
    const auto prob = outbreak_probability(f.samples, thr);
    const Label label = label_for(y, thr);
    double b = std::nan("");
    if (prob && label != Label::Undefined) {
      const double o = label == Label::Outbreak ? 1.0 : 0.0;
      b = (*prob - o) * (*prob - o);
    }
    scores.push_back({f.district, f.origin, f.horizon, brier_metric(rt.rule), b});
    if (outbreaks) {
      outbreaks->push_back({model, f.district, f.origin, f.horizon, rt.rule.name(), thr,
                            prob.value_or(std::nan("")), label});
    }
  }
}

// ---------- harness ----------

struct ModelScores {
  std::string model;
  std::vector<ScoreRow> rows;
};

struct FitFailure {
  std::string model;
  YearMonth origin;
  std::string message;
};

using ForecastSink = std::function<void(const std::string& model, const ForecastDistribution&)>;

struct TscvOptions {
  int n_samples = 1000;
  int ensemble_samples = kEnsembleSamples;
  bool ensemble = true;
  std::vector<std::string> ensemble_members;  // empty: every non-reference model
  bool per_horizon_weights = false;
  std::vector<OutbreakRule> rules;
  unsigned jobs = default_jobs();
  FitOptions fit{};
  ForecastSink sink;  // sees every forecast, components first, in output order
};

struct TscvResult {
  std::vector<std::string> models;  // components in spec order, then the ensemble when built
  std::vector<YearMonth> origins;
  std::vector<int> horizons;
  std::vector<ModelScores> scores;
  std::vector<OutbreakRow> outbreaks;
  std::vector<ForecastSummary> summaries;
  std::vector<FitFailure> failures;
  std::vector<std::string> warnings;
  LeakageAudit audit;
  std::optional<EnsembleWeights> weights;

  const std::vector<ScoreRow>& scores_for(const std::string& model) const {
    for (const auto& s : scores) {
      if (s.model == model) return s.rows;
    }
    throw PreconditionError("no scores for model '" + model + "'");
  }

  double mean_crps(const std::string& model, std::optional<int> horizon = std::nullopt) const {
    double s = 0.0;
    std::size_t k = 0;
    for (const auto& r : scores_for(model)) {
      if (r.metric == "crps" && (!horizon || r.horizon == *horizon)) {
        s += r.value;
        ++k;
      }
    }
    return k ? s / static_cast<double>(k) : std::nan("");
  }
};

namespace detail {

inline std::vector<std::string> ensemble_members(const std::vector<ModelSpec>& specs, const TscvOptions& opt) {
  if (!opt.ensemble_members.empty()) {
    for (const auto& m : opt.ensemble_members) {
      if (std::none_of(specs.begin(), specs.end(), [&](const ModelSpec& s) { return s.name == m; })) {
        throw InputError("ensemble member '" + m + "' is not among the models");
      }
    }
    return opt.ensemble_members;
  }
  std::vector<std::string> out;
  for (const auto& s : specs) {
    if (s.family != Family::Reference) out.push_back(s.name);
  }
  return out;
}

inline void check_specs(const std::vector<ModelSpec>& specs, const PanelDataset& p, const std::vector<int>& horizons) {
  if (specs.empty()) throw InputError("no models to run");
  std::set<std::string> names;
  for (const auto& s : specs) {
    s.check(&p);
    if (s.name == kEnsembleName) throw InputError("'ensemble' is reserved for the pooled forecast");
    if (!names.insert(s.name).second) throw InputError("duplicate model name '" + s.name + "'");
    for (const int h : horizons) {
      if (std::find(s.horizons.begin(), s.horizons.end(), h) == s.horizons.end()) {
        throw InputError("model '" + s.name + "' does not forecast plan horizon " + std::to_string(h));
      }
    }
  }
}

/// Adds the sample-wise district total of a block of forecasts (all for one origin and horizon).
inline void add_total_summary(const std::string& model, const std::vector<const ForecastDistribution*>& block,
                              const PanelDataset& p, std::vector<ForecastSummary>& out) {
  if (block.empty()) return;
  const std::size_t n = block.front()->samples.size();
  for (const auto* f : block) {
    if (f->samples.size() != n) return;
  }
  ForecastDistribution total{kAllDistricts, block.front()->origin, block.front()->horizon,
                             std::vector<double>(n, 0.0)};
  double observed = 0.0;
  const int t = p.time_index(total.target());
  for (const auto* f : block) {
    for (std::size_t s = 0; s < n; ++s) total.samples[s] += f->samples[s];
    observed += p.cases(p.district_index(f->district), t);
  }
  out.push_back(summarize(model, total, observed));
}

inline TscvResult run_phase(const PanelDataset& p, const std::vector<ModelSpec>& specs,
                            const std::vector<YearMonth>& origins, const std::vector<int>& horizons,
                            std::uint64_t seed, const TscvOptions& opt, const EnsembleWeights* frozen) {
  if (opt.n_samples < static_cast<int>(kMinScoringSamples)) {
    throw InputError("n_samples must be at least " + std::to_string(kMinScoringSamples) + " for scoring");
  }
  check_specs(specs, p, horizons);
  TscvResult res;
  res.origins = origins;
  res.horizons = horizons;
  for (const auto& s : specs) res.models.push_back(s.name);
  const int hmax = *std::max_element(horizons.begin(), horizons.end());
  const int n = p.n();
  const std::size_t M = specs.size(), O = origins.size();
  std::vector<int> origin_t(O);
  for (std::size_t o = 0; o < O; ++o) origin_t[o] = p.time_index(origins[o]);

  auto rules = opt.rules;
  for (auto& r : rules) r.seed = derive_seed(seed, {0x72756c65});
  const auto thresholds = compute_thresholds(p, rules, origin_t.front() + 1, origin_t.back() + hmax, opt.jobs);

  // Component fits, parallel over (model, origin); every slot is written by one task.
  struct Slot {
    std::vector<ForecastDistribution> forecasts;  // district-major, horizons in plan order
    std::optional<std::string> failure;
    std::optional<std::string> warning;
    LeakageAudit audit;
  };
  std::vector<Slot> slots(M * O);
  parallel_for(M * O, opt.jobs, [&](std::size_t k) {
    const auto& spec = specs[k / O];
    const std::size_t o = k % O;
    auto& slot = slots[k];
    const PanelDataset train = p.truncated(origin_t[o]);
    slot.audit = audit_inputs(spec, p, train, origin_t[o], hmax);
    try {
      const auto m = fit_model(spec, train, std::nullopt, opt.fit);
      if (!m.diagnostics.converged) slot.warning = "not converged: " + m.diagnostics.message;
      auto fc = forecast_model(m, train, opt.n_samples, seed, horizons);
      std::map<std::pair<int, int>, std::size_t> at;
      for (std::size_t u = 0; u < fc.size(); ++u) at[{train.district_index(fc[u].district), fc[u].horizon}] = u;
      slot.forecasts.reserve(fc.size());
      for (int i = 0; i < n; ++i) {
        for (const int h : horizons) slot.forecasts.push_back(std::move(fc.at(at.at({i, h}))));
      }
    } catch (const LeakageError&) {
      throw;
    } catch (const ContractError&) {
      throw;
    } catch (const std::exception& e) {
      slot.forecasts.clear();
      slot.failure = e.what();
    }
  });

  const std::size_t H = horizons.size();
  auto unit = [&](const Slot& s, int i, std::size_t hk) -> const ForecastDistribution& {
    return s.forecasts[static_cast<std::size_t>(i) * H + hk];
  };

  for (std::size_t m = 0; m < M; ++m) {
    ModelScores ms{specs[m].name, {}};
    for (std::size_t o = 0; o < O; ++o) {
      const auto& slot = slots[m * O + o];
      res.audit.merge(slot.audit);
      if (slot.warning) res.warnings.push_back(specs[m].name + " at " + origins[o].to_string() + ": " + *slot.warning);
      if (slot.failure) {
        res.failures.push_back({specs[m].name, origins[o], *slot.failure});
        continue;
      }
      for (int i = 0; i < n; ++i) {
        for (std::size_t hk = 0; hk < H; ++hk) {
          const auto& f = unit(slot, i, hk);
          score_unit(specs[m].name, f, p, thresholds, ms.rows, &res.outbreaks);
          res.summaries.push_back(summarize(specs[m].name, f, p.cases(i, p.time_index(f.target()))));
          if (opt.sink) opt.sink(specs[m].name, f);
        }
      }
      for (std::size_t hk = 0; hk < H; ++hk) {
        std::vector<const ForecastDistribution*> block;
        for (int i = 0; i < n; ++i) block.push_back(&unit(slot, i, hk));
        add_total_summary(specs[m].name, block, p, res.summaries);
      }
    }
    res.scores.push_back(std::move(ms));
  }

  if (!opt.ensemble) return res;

  // Weights: frozen ones as given, otherwise inverse squared mean CRPS over this phase.
  EnsembleWeights w;
  if (frozen) {
    if (!frozen->frozen) throw ContractError("evaluation needs weights frozen by the cross-validation phase");
    w = *frozen;
  } else {
    std::vector<std::string> names;
    std::vector<double> crps_means;
    std::map<int, std::vector<double>> by_h;
    for (const auto& name : ensemble_members(specs, opt)) {
      const double c = res.mean_crps(name);
      if (std::isnan(c)) {
        res.warnings.push_back("ensemble member " + name + " has no scored forecasts and is left out");
        continue;
      }
      names.push_back(name);
      crps_means.push_back(c);
      for (const int h : horizons) by_h[h].push_back(res.mean_crps(name, h));
    }
    if (names.empty()) {
      res.warnings.push_back("no ensemble members with scores; ensemble skipped");
      return res;
    }
    w = compute_weights(names, crps_means);
    if (opt.per_horizon_weights) {
      for (const auto& [h, v] : by_h) w.per_horizon[h] = inverse_crps2(v);
    }
  }
  std::vector<std::size_t> member_index;
  for (const auto& name : w.models) {
    const auto it = std::find(res.models.begin(), res.models.end(), name);
    if (it == res.models.end()) throw InputError("weights name model '" + name + "' which is not in this run");
    member_index.push_back(static_cast<std::size_t>(it - res.models.begin()));
  }

  ModelScores es{kEnsembleName, {}};
  for (std::size_t o = 0; o < O; ++o) {
    std::vector<std::size_t> avail;
    std::vector<std::string> missing;
    for (std::size_t k = 0; k < member_index.size(); ++k) {
      if (slots[member_index[k] * O + o].failure) {
        missing.push_back(w.models[k]);
      } else {
        avail.push_back(k);
      }
    }
    if (avail.empty()) {
      res.warnings.push_back("ensemble at " + origins[o].to_string() + ": no member forecasts, skipped");
      continue;
    }
    if (!missing.empty()) {
      std::string list;
      for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
      res.warnings.push_back("ensemble at " + origins[o].to_string() + " renormalized without " + list);
    }
    std::vector<std::vector<ForecastDistribution>> pooled(H);
    for (int i = 0; i < n; ++i) {
      for (std::size_t hk = 0; hk < H; ++hk) {
        std::vector<const ForecastDistribution*> comps;
        std::vector<double> ws;
        const auto& wh = w.for_horizon(horizons[hk]);
        for (const std::size_t k : avail) {
          comps.push_back(&unit(slots[member_index[k] * O + o], i, hk));
          ws.push_back(wh[k]);
        }
        if (std::accumulate(ws.begin(), ws.end(), 0.0) <= 0.0) ws.assign(ws.size(), 1.0);
        auto pf = pool_samples(comps, ws, opt.ensemble_samples, seed);
        const double y = p.cases(i, p.time_index(pf.forecast.target()));
        score_unit(kEnsembleName, pf.forecast, p, thresholds, es.rows, &res.outbreaks);
        auto s = summarize(kEnsembleName, pf.forecast, y);
        res.summaries.push_back(s);
        if (opt.sink) opt.sink(kEnsembleName, pf.forecast);
        pooled[hk].push_back(std::move(pf.forecast));
      }
    }
    for (std::size_t hk = 0; hk < H; ++hk) {
      std::vector<const ForecastDistribution*> block;
      for (const auto& f : pooled[hk]) block.push_back(&f);
      add_total_summary(kEnsembleName, block, p, res.summaries);
    }
  }
  res.scores.push_back(std::move(es));
  res.models.push_back(kEnsembleName);
  w.frozen = true;
  res.weights = std::move(w);
  return res;
}

}  // namespace detail

/// Cross-validation phase: fit every spec at every plan origin on data up to the origin,
/// forecast the plan horizons, score against the panel, then weight and pool the ensemble
/// members. The returned weights are frozen for the evaluation phase. A failed fit drops that
/// (model, origin) only and is listed in `failures`.
inline TscvResult run_tscv(const PanelDataset& p, const std::vector<ModelSpec>& specs, const TscvPlan& plan,
                           std::uint64_t seed, const TscvOptions& opt = {}) {
  plan.validate(p);
  return detail::run_phase(p, specs, plan.origins, plan.horizons, seed, opt, nullptr);
}

/// Out-of-sample phase with the weights frozen by `run_tscv`; they are never recomputed here.
inline TscvResult run_evaluation(const PanelDataset& p, const std::vector<ModelSpec>& specs,
                                 const EnsembleWeights& weights, const TscvPlan& plan, const EvalWindow& window,
                                 std::uint64_t seed, TscvOptions opt = {}) {
  plan.validate(p);
  window.validate(plan, p);
  if (!weights.frozen) throw ContractError("evaluation needs weights frozen by the cross-validation phase");
  opt.ensemble = true;
  return detail::run_phase(p, specs, window.origins(), plan.horizons, seed, opt, &weights);
}

}  // namespace distcast
