#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "distcast/config/config.hpp"
#include "distcast/core/csv.hpp"
#include "distcast/core/errors.hpp"
#include "distcast/ensemble/artifacts.hpp"
#include "distcast/ensemble/pool.hpp"
#include "distcast/ensemble/tscv.hpp"
#include "distcast/model/forecast.hpp"
#include "distcast/model/model.hpp"
#include "distcast/panel/io.hpp"
#include "distcast/scoring/scores.hpp"
#include "distcast/synth/generate.hpp"
#include "distcast/synth/weather.hpp"
#include "distcast/thresholds/rules.hpp"
#include "distcast/weather/pipeline.hpp"

#ifndef DISTCAST_VERSION
#define DISTCAST_VERSION "0.0.0"
#endif

namespace distcast::app {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int { kOk = 0, kInternal = 1, kBadInput = 2, kMissingArtifact = 3 };

/// Maps an exception escaping a command to the process exit code.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const MissingArtifactError*>(&e)) return kMissingArtifact;
  if (dynamic_cast<const InputError*>(&e) || dynamic_cast<const PreconditionError*>(&e)) return kBadInput;
  return kInternal;
}

inline std::ostream* g_log = &std::cerr;

inline void log(const std::string& msg) {
  if (g_log) *g_log << "distcast: " << msg << '\n';
}

// ---------- shared helpers ----------

inline fs::path require_out(const RunConfig& c) {
  if (c.out.empty()) throw InputError("no output directory (config 'out', DISTCAST_OUT or --out)");
  fs::create_directories(c.out);
  return fs::path(c.out);
}

inline unsigned jobs_of(const RunConfig& c) { return c.jobs == 0 ? default_jobs() : c.jobs; }

inline PanelDataset load_panel(const RunConfig& c) {
  c.require_path(c.cases, "data.cases");
  c.require_path(c.adjacency, "data.adjacency");
  for (const auto& cov : c.covariates) c.require_path(cov, "data.covariates");
  return read_panel(c.cases, c.adjacency, c.covariates);
}

/// Preset names, plus `st_sweep` for the 60 spatiotemporal design variants.
inline std::vector<ModelSpec> load_specs(const RunConfig& c) {
  std::vector<ModelSpec> specs;
  for (const auto& name : c.presets) {
    if (name == "st_sweep") {
      for (auto& s : st_sweep()) specs.push_back(std::move(s));
    } else {
      specs.push_back(preset(name));
    }
  }
  if (specs.empty()) throw InputError("no models configured ([models] presets)");
  for (auto& s : specs) s.horizons = c.horizons;
  return specs;
}

inline YearMonth require_month(const std::optional<YearMonth>& v, const std::string& key) {
  if (!v) throw InputError("config does not set " + key);
  return *v;
}

inline TscvPlan load_plan(const RunConfig& c) {
  return TscvPlan::monthly(require_month(c.initial_train_end, "plan.initial_train_end"),
                           require_month(c.first_origin, "plan.first_origin"),
                           require_month(c.last_origin, "plan.last_origin"),
                           require_month(c.eval_start, "plan.eval_start"), c.horizons);
}

inline std::uint64_t rule_seed(std::uint64_t seed) { return derive_seed(seed, {0x72756c65}); }

inline std::vector<OutbreakRule> seeded_rules(const RunConfig& c, std::uint64_t seed) {
  auto rules = config_rules(c);
  for (auto& r : rules) r.seed = rule_seed(seed);
  return rules;
}

inline TscvOptions tscv_options(const RunConfig& c) {
  TscvOptions o;
  o.n_samples = c.samples;
  o.ensemble_samples = c.ensemble_samples;
  o.ensemble_members = c.ensemble;
  o.per_horizon_weights = c.per_horizon_weights;
  o.rules = config_rules(c);
  o.jobs = jobs_of(c);
  return o;
}

inline EnsembleWeights load_weights(const fs::path& out) {
  const auto j = read_json_file((out / "weights.json").string());
  EnsembleWeights w = j.get<EnsembleWeights>();
  if (!w.frozen) throw ContractError("weights.json was not frozen by a cross-validation run");
  return w;
}

inline json inputs_manifest(const RunConfig& c) {
  json in = json::object();
  auto add = [&](const std::string& key, const std::string& path) {
    if (!path.empty() && fs::exists(path)) {
      in[key] = {{"file", fs::path(path).filename().string()}, {"fnv1a64", file_digest(path)}};
    }
  };
  add("data.cases", c.cases);
  add("data.adjacency", c.adjacency);
  for (std::size_t k = 0; k < c.covariates.size(); ++k) add("data.covariates." + std::to_string(k), c.covariates[k]);
  if (!c.source.empty() && fs::exists(c.source)) add("config", c.source);
  return in;
}

/// Run manifest: tool version, seeds and digests of inputs and outputs, no timestamps.
inline void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& c,
                           std::uint64_t seed, const std::vector<std::string>& outputs) {
  json outs = json::object();
  for (const auto& rel : outputs) outs[rel] = file_digest((dir / rel).string());
  json m{{"tool", "distcast"},
         {"version", DISTCAST_VERSION},
         {"command", command},
         {"seed", seed},
         {"seeds", {{"forecast", seed}, {"ensemble_pool", seed}, {"threshold_rules", rule_seed(seed)}}},
         {"inputs", inputs_manifest(c)},
         {"outputs", outs}};
  write_json_file((dir / "manifest.json").string(), m);
}

/// Collects every forecast passed to the sink into forecasts/<model>.bin.
class ForecastFiles {
 public:
  explicit ForecastFiles(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
    for (const auto& e : fs::directory_iterator(dir_)) {
      const auto name = e.path().filename().string();
      if (name.size() > 4 && (name.ends_with(".bin") || name.ends_with(".bin.json"))) fs::remove(e.path());
    }
  }

  void add(const std::string& model, const ForecastDistribution& f) {
    auto it = writers_.find(model);
    if (it == writers_.end()) {
      it = writers_.emplace(model, std::make_unique<BinaryForecastWriter>((dir_ / (model + ".bin")).string())).first;
    }
    it->second->add(f);
  }

  /// Closes every file; returns the names written (model.bin and sidecars), sorted.
  std::vector<std::string> close() {
    std::vector<std::string> names;
    for (auto& [model, w] : writers_) {
      w->close();
      names.push_back(model + ".bin");
      names.push_back(model + ".bin.json");
    }
    writers_.clear();
    return names;
  }

 private:
  fs::path dir_;
  std::map<std::string, std::unique_ptr<BinaryForecastWriter>> writers_;
};

inline json run_record(const TscvResult& r) {
  json failures = json::array();
  for (const auto& f : r.failures) {
    failures.push_back({{"model", f.model}, {"origin", f.origin.to_string()}, {"message", f.message}});
  }
  json crps = json::object();
  for (const auto& m : r.models) crps[m] = r.mean_crps(m);
  return {{"models", r.models}, {"mean_crps", crps}, {"failures", failures}, {"warnings", r.warnings},
          {"audit", audit_json(r.audit)}};
}

/// Writes the tables of one phase under `dir` and returns the relative paths written.
inline std::vector<std::string> write_phase(const fs::path& dir, const TscvResult& r, const json& plan,
                                            ForecastFiles& files) {
  std::vector<std::string> written = write_run_tables(dir.string(), r, plan);
  for (const auto& name : files.close()) written.push_back("forecasts/" + name);
  write_json_file((dir / "run.json").string(), run_record(r));
  written.push_back("run.json");
  if (!r.audit.clean()) {
    throw LeakageError("leakage audit found " + std::to_string(r.audit.findings.size()) +
                       " feature cells newer than their origin (see run.json)");
  }
  return written;
}

// ---------- synthgen ----------

inline std::string plan_ini(const PanelDataset& p) {
  const int T = p.T();
  const int eval_idx = T - std::max(12, T / 5);
  const int ite_idx = std::min(std::max(23, T / 2 - 1), eval_idx - 1);
  if (ite_idx < 23 || eval_idx + 3 >= T) return "";
  std::ostringstream s;
  s << "[plan]\n"
    << "initial_train_end = " << p.months[ite_idx].to_string() << "\n"
    << "first_origin = " << p.months[ite_idx].to_string() << "\n"
    << "last_origin = " << p.months[eval_idx - 1].to_string() << "\n"
    << "eval_start = " << p.months[eval_idx].to_string() << "\n"
    << "eval_first_origin = " << p.months[eval_idx].to_string() << "\n"
    << "eval_last_origin = " << p.months[T - 4].to_string() << "\n"
    << "horizons = 1, 2, 3\n\n";
  return s.str();
}

/// Synthetic panel (cases, adjacency, monthly covariates), a daily weather fixture for both
/// ingestion modes, the generating truth, and a ready-to-run config.
inline void cmd_synthgen(const RunConfig& c) {
  const auto seed = c.require_seed();
  const auto out = require_out(c);
  synth::BaseOptions base;
  base.districts = c.synth_districts;
  base.months = c.synth_months;
  base.start = c.synth_start;
  PanelDataset p;
  json truth{{"kind", c.synth_kind}, {"seed", seed}};
  if (c.synth_kind == "seasonal") {
    synth::SeasonalOptions o;
    o.base = base;
    auto [panel, tr] = synth::seasonal_panel(o, seed);
    p = std::move(panel);
    json obs = json::array();
    for (const auto& ob : tr.outbreaks) {
      obs.push_back({{"district", p.districts[ob.district]}, {"start", p.months[ob.start].to_string()},
                     {"months", ob.length}, {"factor", ob.factor}});
    }
    json nb = json::array();
    for (const int j : tr.hotspot_neighbours) nb.push_back(p.districts[j]);
    truth["outbreaks"] = obs;
    truth["hotspot"] = tr.hotspot >= 0 ? json(p.districts[tr.hotspot]) : json(nullptr);
    truth["hotspot_neighbours"] = nb;
  } else if (c.synth_kind == "mixture") {
    auto mix = synth::mixture_panel(base, seed);
    p = std::move(mix.panel);
    json fam = json::object();
    for (int i = 0; i < p.n(); ++i) fam[p.districts[i]] = mix.family[i];
    truth["family"] = fam;
  } else if (c.synth_kind == "st" || c.synth_kind == "hhh4" || c.synth_kind == "pca") {
    p = synth::base_panel(base, seed);
    if (c.synth_kind == "st") synth::simulate_st(p, {}, seed);
    if (c.synth_kind == "hhh4") synth::simulate_hhh4(p, {}, seed);
    if (c.synth_kind == "pca") synth::simulate_pca(p, {}, seed);
  } else {
    throw InputError("unknown synthgen kind '" + c.synth_kind + "' (seasonal, mixture, st, hhh4, pca)");
  }

  fs::create_directories(out / "covariates");
  fs::create_directories(out / "weather");
  write_panel_csv(p, (out / "cases.csv").string());
  write_edge_list(p.adjacency, (out / "adjacency.csv").string());
  for (const auto& [name, cov] : p.covariates) {
    write_covariate_csv(p.districts, p.months, cov.values, name, (out / "covariates" / (name + ".csv")).string());
  }

  const auto [rows, cols] = synth::lattice_shape(p.n());
  synth::WeatherOptions wo;
  wo.start = {p.months.front().year, p.months.front().month, 1};
  wo.months = std::min(12, p.T());
  const auto fx = synth::weather_fixture(p.districts, rows, cols, wo, seed);
  weather::write_stations_csv(fx.stations, (out / "weather/stations.csv").string());
  weather::write_centroids_csv(fx.centroids, (out / "weather/centroids.csv").string());
  for (const auto& [name, g] : fx.grids) weather::write_grid_csv(g, (out / "weather" / ("grid_" + name + ".csv")).string());
  write_json_file((out / "truth.json").string(), truth);

  std::ostringstream ini;
  ini << "seed = " << seed << "\n"
      << "out = run\n\n"
      << "[data]\n"
      << "cases = cases.csv\n"
      << "adjacency = adjacency.csv\n"
      << "covariates = covariates/tmin.csv, covariates/tavg.csv, covariates/rain.csv\n\n"
      << "[weather]\n"
      << "mode = station\n"
      << "stations = weather/stations.csv\n"
      << "centroids = weather/centroids.csv\n"
      << "grid = weather/grid_tmin.csv, weather/grid_rain.csv\n"
      << "variables = tmin, rain\n\n"
      << "[models]\n"
      << "presets = reference, st1, st2, st3, hhh4, pca\n"
      << "samples = 1000\n"
      << "ensemble_samples = 10000\n\n"
      << plan_ini(p)
      << "[thresholds]\n"
      << "rules = mean_plus_2sd, percentile_95, poisson_glm, fixed_rate_50, fixed_rate_100\n";
  std::ofstream((out / "distcast.ini").string(), std::ios::binary) << ini.str();
  log("synthgen: " + std::to_string(p.n()) + " districts x " + std::to_string(p.T()) + " months (" +
      c.synth_kind + ") in " + out.string());
}

// ---------- ingest-weather ----------

/// One covariate CSV per configured variable under <out>/covariates, plus ingest.json.
inline void cmd_ingest_weather(const RunConfig& c) {
  const auto out = require_out(c);
  c.require_path(c.centroids, "weather.centroids");
  const auto centroids = weather::read_centroids(c.centroids);
  std::vector<weather::Variable> vars;
  for (const auto& v : c.weather_variables) vars.push_back(weather::parse_variable(v));
  if (vars.empty()) throw InputError("no weather variables configured");
  fs::create_directories(out / "covariates");
  json report = json::object();
  report["mode"] = c.weather_mode;
  std::vector<weather::DistrictMonthly> results;
  if (c.weather_mode == "station") {
    c.require_path(c.stations, "weather.stations");
    const auto stations = weather::read_stations(c.stations);
    for (const auto v : vars) {
      weather::IngestDiagnostics d;
      results.push_back(weather::ingest_stations(stations, centroids, v, jobs_of(c), d));
      report[weather::to_string(v)] = {{"days", d.days},
                                       {"days_interpolated", d.days_interpolated},
                                       {"days_skipped", d.days_skipped},
                                       {"degenerate_variograms", d.degenerate_variograms},
                                       {"negative_weight_solves", d.negative_weight_solves},
                                       {"regularized_solves", d.regularized_solves},
                                       {"flagged_months", d.flagged_months}};
    }
  } else {
    const auto& grids = c.grid;
    if (grids.size() != vars.size()) {
      throw InputError("grid mode needs one grid file per variable (" + std::to_string(vars.size()) +
                       " variables, " + std::to_string(grids.size()) + " grids)");
    }
    for (std::size_t k = 0; k < vars.size(); ++k) {
      c.require_path(grids[k], "weather.grid");
      const auto g = grids[k].ends_with(".csv") ? weather::read_grid_csv(grids[k]) : weather::read_grid_binary(grids[k]);
      weather::IngestDiagnostics d;
      results.push_back(weather::ingest_grid(g, centroids, vars[k], d));
      report[weather::to_string(vars[k])] = {{"days", d.days}, {"flagged_months", d.flagged_months}};
    }
  }
  json files = json::array();
  for (const auto& m : results) {
    const auto path = out / "covariates" / (m.variable + ".csv");
    weather::write_district_monthly(m, path.string());
    files.push_back(("covariates/" + m.variable + ".csv"));
  }
  report["files"] = files;
  write_json_file((out / "covariates/ingest.json").string(), report);
  log("ingest-weather: wrote " + std::to_string(results.size()) + " covariate files to " + (out / "covariates").string());
}

// ---------- tscv / evaluate ----------

inline TscvResult cmd_tscv(const RunConfig& c) {
  const auto seed = c.require_seed();
  const auto out = require_out(c);
  const auto p = load_panel(c);
  const auto specs = load_specs(c);
  const auto plan = load_plan(c);
  plan.validate(p);
  auto opt = tscv_options(c);
  ForecastFiles files(out / "forecasts");
  opt.sink = [&](const std::string& m, const ForecastDistribution& f) { files.add(m, f); };
  log("tscv: " + std::to_string(specs.size()) + " models x " + std::to_string(plan.origins.size()) + " origins x " +
      std::to_string(p.n()) + " districts");
  const auto r = run_tscv(p, specs, plan, seed, opt);
  auto written = write_phase(out, r, json(plan), files);
  write_manifest(out, "tscv", c, seed, written);
  for (const auto& f : r.failures) log("fit failed: " + f.model + " at " + f.origin.to_string() + ": " + f.message);
  for (const auto& m : r.models) log("mean CRPS " + m + ": " + format_double(r.mean_crps(m)));
  return r;
}

/// Out-of-sample run with the frozen weights of a previous `tscv` in the same output directory.
inline TscvResult cmd_evaluate(const RunConfig& c) {
  const auto seed = c.require_seed();
  const auto out = require_out(c);
  const auto weights = load_weights(out);
  const auto p = load_panel(c);
  const auto specs = load_specs(c);
  const auto plan = load_plan(c);
  const EvalWindow window{require_month(c.eval_first_origin, "plan.eval_first_origin"),
                          require_month(c.eval_last_origin, "plan.eval_last_origin")};
  const auto dir = out / "evaluation";
  auto opt = tscv_options(c);
  ForecastFiles files(dir / "forecasts");
  opt.sink = [&](const std::string& m, const ForecastDistribution& f) { files.add(m, f); };
  const auto r = run_evaluation(p, specs, weights, plan, window, seed, opt);
  json pj = json(plan);
  pj["evaluation"] = {{"first_origin", window.first_origin.to_string()},
                      {"last_origin", window.last_origin.to_string()}};
  auto written = write_phase(dir, r, pj, files);
  write_manifest(dir, "evaluate", c, seed, written);
  for (const auto& m : r.models) log("evaluation mean CRPS " + m + ": " + format_double(r.mean_crps(m)));
  return r;
}

// ---------- forecast ----------

/// Live forecasts from one origin (default: the last panel month) into <out>/live. The ensemble
/// is added when <out>/weights.json exists.
inline void cmd_forecast(const RunConfig& c) {
  const auto seed = c.require_seed();
  const auto out = require_out(c);
  const auto p = load_panel(c);
  const auto specs = load_specs(c);
  const YearMonth origin = c.forecast_origin.value_or(p.months.back());
  const int t0 = p.time_index(origin);
  const auto train = p.truncated(t0);
  const auto dir = out / "live";
  ForecastFiles files(dir);
  std::map<std::string, std::vector<ForecastDistribution>> by_model;
  std::vector<ForecastSummary> summaries;
  auto observed = [&](const ForecastDistribution& f) {
    const int t = t0 + f.horizon;
    return t < p.T() ? p.cases(p.district_index(f.district), t) : std::nan("");
  };
  for (const auto& spec : specs) {
    const auto m = fit_model(spec, train, std::nullopt, {});
    if (!m.diagnostics.converged) log("forecast: " + spec.name + " not converged: " + m.diagnostics.message);
    auto fc = forecast_model(m, train, c.samples, seed, c.horizons);
    for (const auto& f : fc) {
      files.add(spec.name, f);
      summaries.push_back(summarize(spec.name, f, observed(f)));
    }
    by_model[spec.name] = std::move(fc);
  }
  if (fs::exists(out / "weights.json")) {
    const auto w = load_weights(out);
    const auto& any = by_model.begin()->second;
    for (std::size_t u = 0; u < any.size(); ++u) {
      std::vector<const ForecastDistribution*> comps;
      std::vector<double> ws;
      for (std::size_t k = 0; k < w.size(); ++k) {
        const auto it = by_model.find(w.models[k]);
        if (it == by_model.end()) continue;
        for (const auto& f : it->second) {
          if (key_of(f) == key_of(any[u])) {
            comps.push_back(&f);
            ws.push_back(w.for_horizon(any[u].horizon)[k]);
          }
        }
      }
      if (comps.empty()) continue;
      const auto pf = pool_samples(comps, ws, c.ensemble_samples, seed);
      files.add(kEnsembleName, pf.forecast);
      summaries.push_back(summarize(kEnsembleName, pf.forecast, observed(pf.forecast)));
    }
  } else {
    log("forecast: no weights.json in " + out.string() + "; ensemble skipped (run tscv first)");
  }
  files.close();
  write_summaries_csv((dir / "summary.csv").string(), summaries);
  log("forecast: origin " + origin.to_string() + ", " + std::to_string(summaries.size()) + " forecast units");
}

// ---------- ensemble ----------

inline std::vector<ForecastDistribution> read_model_forecasts(const fs::path& dir, const std::string& model) {
  const auto path = dir / (model + ".bin");
  if (!fs::exists(path)) throw MissingArtifactError("missing forecasts for '" + model + "': " + path.string());
  return read_forecasts_binary(path.string());
}

/// Re-pools <out>/forecasts/<member>.bin with the frozen weights into forecasts/ensemble.bin.
inline void cmd_ensemble(const RunConfig& c) {
  const auto seed = c.require_seed();
  const auto out = require_out(c);
  const auto w = load_weights(out);
  const auto dir = out / "forecasts";
  std::vector<std::vector<ForecastDistribution>> members;
  for (const auto& m : w.models) members.push_back(read_model_forecasts(dir, m));
  // Unit order: first appearance over the members, which matches the cross-validation order.
  std::vector<ForecastKey> order;
  std::map<ForecastKey, std::vector<const ForecastDistribution*>> at;
  for (std::size_t k = 0; k < members.size(); ++k) {
    for (const auto& f : members[k]) {
      auto [it, inserted] = at.try_emplace(key_of(f), std::vector<const ForecastDistribution*>(members.size(), nullptr));
      if (inserted) order.push_back(key_of(f));
      it->second[k] = &f;
    }
  }
  std::stable_sort(order.begin(), order.end(), [](const ForecastKey& a, const ForecastKey& b) {
    return std::get<1>(a) < std::get<1>(b);
  });
  BinaryForecastWriter out_file((dir / (std::string(kEnsembleName) + ".bin")).string());
  std::size_t renormalized = 0;
  for (const auto& key : order) {
    std::vector<const ForecastDistribution*> comps;
    std::vector<double> ws;
    const auto& wh = w.for_horizon(std::get<2>(key));
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (!at[key][k]) continue;
      comps.push_back(at[key][k]);
      ws.push_back(wh[k]);
    }
    renormalized += comps.size() < members.size();
    if (std::accumulate(ws.begin(), ws.end(), 0.0) <= 0.0) ws.assign(ws.size(), 1.0);
    out_file.add(pool_samples(comps, ws, c.ensemble_samples, seed).forecast);
  }
  out_file.close();
  log("ensemble: pooled " + std::to_string(order.size()) + " units from " + std::to_string(members.size()) +
      " members" + (renormalized ? " (" + std::to_string(renormalized) + " renormalized)" : ""));
}

// ---------- score ----------

/// Scores every forecasts/<model>.bin against the panel into scores/ (same layout as tscv).
inline void cmd_score(const RunConfig& c) {
  const auto seed = c.require_seed();
  const auto out = require_out(c);
  const auto dir = out / "forecasts";
  std::vector<std::string> models;
  if (fs::exists(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      const auto name = e.path().filename().string();
      if (name.ends_with(".bin")) models.push_back(name.substr(0, name.size() - 4));
    }
  }
  if (models.empty()) throw MissingArtifactError("missing forecasts: no " + dir.string() + "/*.bin (run tscv first)");
  std::sort(models.begin(), models.end());
  // Keep the run's model order when it is known.
  if (fs::exists(out / "run.json")) {
    const auto listed = read_json_file((out / "run.json").string()).at("models").get<std::vector<std::string>>();
    std::vector<std::string> ordered;
    for (const auto& m : listed) {
      if (std::find(models.begin(), models.end(), m) != models.end()) ordered.push_back(m);
    }
    for (const auto& m : models) {
      if (std::find(ordered.begin(), ordered.end(), m) == ordered.end()) ordered.push_back(m);
    }
    models = ordered;
  }
  const auto p = load_panel(c);
  const auto rules = seeded_rules(c, seed);
  std::map<std::string, std::vector<ForecastDistribution>> fcs;
  int t_first = p.T(), t_last = -1;
  for (const auto& m : models) {
    fcs[m] = read_model_forecasts(dir, m);
    for (const auto& f : fcs[m]) {
      const int t = f.target().index() - p.months.front().index();
      if (t >= 0 && t < p.T()) {
        t_first = std::min(t_first, t);
        t_last = std::max(t_last, t);
      }
    }
  }
  const auto thresholds = compute_thresholds(p, rules, t_first, t_last, jobs_of(c));
  std::vector<ModelScores> scores;
  std::vector<OutbreakRow> outbreaks;
  std::size_t skipped = 0;
  for (const auto& m : models) {
    ModelScores ms{m, {}};
    for (const auto& f : fcs[m]) {
      const int t = f.target().index() - p.months.front().index();
      if (t < 0 || t >= p.T()) {
        ++skipped;
        continue;
      }
      score_unit(m, f, p, thresholds, ms.rows, &outbreaks);
    }
    scores.push_back(std::move(ms));
  }
  fs::create_directories(out / "scores");
  for (const auto& ms : scores) write_scores_csv(ms.rows, (out / "scores" / (ms.model + ".csv")).string());
  write_model_scores_csv((out / "scores/all.csv").string(), scores);
  write_outbreaks_csv((out / "scores/outbreaks.csv").string(), outbreaks);
  log("score: " + std::to_string(models.size()) + " models scored" +
      (skipped ? ", " + std::to_string(skipped) + " units with targets past the panel skipped" : ""));
}

// ---------- detect ----------

/// One label CSV per configured rule: detect/<rule>.csv with the threshold and label of every
/// district-month the rule can judge.
inline void cmd_detect(const RunConfig& c) {
  const auto seed = c.require_seed();
  const auto out = require_out(c);
  const auto p = load_panel(c);
  const auto rules = seeded_rules(c, seed);
  const auto th = compute_thresholds(p, rules, 0, p.T() - 1, jobs_of(c));
  fs::create_directories(out / "detect");
  for (const auto& rt : th) {
    CsvWriter w((out / "detect" / (rt.rule.name() + ".csv")).string(),
                {"district", "year", "month", "cases", "threshold", "outbreak"});
    for (int i = 0; i < p.n(); ++i) {
      for (int t = 0; t < p.T(); ++t) {
        const double thr = rt.threshold(i, t);
        w.row({p.districts[i], std::to_string(p.months[t].year), std::to_string(p.months[t].month),
               format_double(p.cases(i, t)), format_double(thr), label_token(label_for(p.cases(i, t), thr))});
      }
    }
    w.close();
  }
  log("detect: " + std::to_string(th.size()) + " rules written to " + (out / "detect").string());
}

// ---------- report ----------

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

/// Writes `<stem>.csv` and a JSON twin `<stem>.json` holding an array of row objects; numeric
/// cells become JSON numbers and NA becomes null.
inline void write_table(const Table& t, const fs::path& stem) {
  CsvWriter w(stem.string() + ".csv", t.columns);
  json rows = json::array();
  for (const auto& r : t.rows) {
    w.row(r);
    json o = json::object();
    for (std::size_t k = 0; k < t.columns.size(); ++k) {
      const auto& cell = r[k];
      if (cell == "NA") {
        o[t.columns[k]] = nullptr;
        continue;
      }
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec == std::errc{} && res.ptr == cell.data() + cell.size()) {
        o[t.columns[k]] = v;
      } else {
        o[t.columns[k]] = cell;
      }
    }
    rows.push_back(o);
  }
  w.close();
  std::ofstream(stem.string() + ".json", std::ios::binary) << json{{"columns", t.columns}, {"rows", rows}}.dump(1)
                                                           << '\n';
}

/// Observed against forecast mean and 95% interval of the district total, by horizon.
inline Table fig3_timeseries(const std::vector<ForecastSummary>& s) {
  Table t{{"model", "horizon", "target_year", "target_month", "observed", "mean", "q025", "q975"}, {}};
  for (const auto& r : s) {
    if (r.district != kAllDistricts) continue;
    t.rows.push_back({r.model, std::to_string(r.horizon), std::to_string(r.target().year),
                      std::to_string(r.target().month), format_double(r.observed), format_double(r.mean),
                      format_double(r.q025), format_double(r.q975)});
  }
  return t;
}

/// Brier score per (model, rule, target month), averaged over districts and horizons.
inline Table fig4_brier_by_month(const std::vector<OutbreakRow>& rows) {
  std::map<std::tuple<std::string, std::string, int>, std::pair<double, std::size_t>> acc;
  std::vector<std::tuple<std::string, std::string, int>> order;
  for (const auto& r : rows) {
    if (r.label == Label::Undefined || std::isnan(r.probability)) continue;
    const auto key = std::make_tuple(r.model, r.rule, r.origin.plus(r.horizon).index());
    auto [it, inserted] = acc.try_emplace(key, 0.0, 0);
    if (inserted) order.push_back(key);
    const double o = r.label == Label::Outbreak ? 1.0 : 0.0;
    it->second.first += (r.probability - o) * (r.probability - o);
    ++it->second.second;
  }
  std::sort(order.begin(), order.end());
  Table t{{"model", "rule", "target_year", "target_month", "brier", "count"}, {}};
  for (const auto& key : order) {
    const auto [sum, n] = acc.at(key);
    const auto ym = YearMonth::from_index(std::get<2>(key));
    t.rows.push_back({std::get<0>(key), std::get<1>(key), std::to_string(ym.year), std::to_string(ym.month),
                      format_double(sum / static_cast<double>(n)), std::to_string(n)});
  }
  return t;
}

/// Reliability table: ten probability bins per (model, rule).
inline Table figS5_calibration(const std::vector<OutbreakRow>& rows) {
  std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, std::vector<std::optional<bool>>>> by;
  for (const auto& r : rows) {
    if (std::isnan(r.probability)) continue;
    auto& [p, o] = by[{r.model, r.rule}];
    p.push_back(r.probability);
    o.push_back(r.label == Label::Undefined ? std::nullopt : std::optional<bool>(r.label == Label::Outbreak));
  }
  Table t{{"model", "rule", "bin_lower", "bin_upper", "count", "mean_predicted", "observed_frequency"}, {}};
  for (const auto& [key, po] : by) {
    for (const auto& b : calibration_bins(po.first, po.second)) {
      t.rows.push_back({key.first, key.second, format_double(b.lower), format_double(b.upper), std::to_string(b.count),
                        format_double(b.mean_predicted.value_or(std::nan(""))),
                        format_double(b.observed_frequency.value_or(std::nan("")))});
    }
  }
  return t;
}

/// Accuracy, sensitivity, specificity and PPV per (model, rule) with outbreak predicted when the
/// probability reaches `cutoff`; rows with an undefined label are counted as dropped.
inline Table classification_summary(const std::vector<OutbreakRow>& rows, double cutoff) {
  std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, std::vector<std::optional<bool>>>> by;
  for (const auto& r : rows) {
    auto& [p, o] = by[{r.model, r.rule}];
    p.push_back(r.probability);
    o.push_back(r.label == Label::Undefined ? std::nullopt : std::optional<bool>(r.label == Label::Outbreak));
  }
  Table t{{"model", "rule", "cutoff", "accuracy", "sensitivity", "specificity", "ppv", "used", "dropped"}, {}};
  for (const auto& [key, po] : by) {
    const auto c = confusion_from_probabilities(po.first, po.second, cutoff);
    const auto m = classification_metrics(c);
    const auto cell = [](const std::optional<double>& v) { return format_double(v.value_or(std::nan(""))); };
    t.rows.push_back({key.first, key.second, format_double(cutoff), cell(m.accuracy), cell(m.sensitivity),
                      cell(m.specificity), cell(m.ppv), std::to_string(c.tp + c.fp + c.tn + c.fn),
                      std::to_string(c.dropped)});
  }
  return t;
}

/// Per-model means of CRPS, bias and diffuseness, skill against the reference, and weights.
inline Table model_summary(const std::vector<ModelScores>& scores, const std::string& reference,
                           const std::optional<EnsembleWeights>& w) {
  double ref = std::nan("");
  for (const auto& ms : scores) {
    if (ms.model == reference) ref = mean_metric(ms.rows, "crps");
  }
  Table t{{"model", "crps", "crpss", "bias", "diffuseness", "weight"}, {}};
  for (const auto& ms : scores) {
    const double crps_mean = mean_metric(ms.rows, "crps");
    const auto skill = std::isnan(ref) ? std::nullopt : crpss(crps_mean, ref);
    double weight = std::nan("");
    if (w && w->index_of(ms.model) >= 0) weight = w->weights[static_cast<std::size_t>(w->index_of(ms.model))];
    t.rows.push_back({ms.model, format_double(crps_mean), format_double(skill.value_or(std::nan(""))),
                      format_double(mean_metric(ms.rows, "bias")), format_double(mean_metric(ms.rows, "diffuseness")),
                      format_double(weight)});
  }
  return t;
}

/// Chart data for a finished run (evaluation phase when present, else cross-validation) into
/// <out>/report.
inline void cmd_report(const RunConfig& c) {
  const auto out = require_out(c);
  const fs::path run = fs::exists(out / "evaluation/scores/all.csv") ? out / "evaluation" : out;
  for (const char* rel : {"scores/all.csv", "scores/outbreaks.csv", "forecasts/summary.csv"}) {
    if (!fs::exists(run / rel)) throw MissingArtifactError("missing " + (run / rel).string() + " (run tscv first)");
  }
  const auto summaries = read_summaries_csv((run / "forecasts/summary.csv").string());
  const auto outbreaks = read_outbreaks_csv((run / "scores/outbreaks.csv").string());
  const auto scores = read_model_scores_csv((run / "scores/all.csv").string());
  std::optional<EnsembleWeights> w;
  if (fs::exists(out / "weights.json")) w = load_weights(out);
  const auto dir = out / "report";
  fs::create_directories(dir);
  write_table(fig3_timeseries(summaries), dir / "fig3_timeseries");
  write_table(fig4_brier_by_month(outbreaks), dir / "fig4_brier_by_month");
  write_table(figS5_calibration(outbreaks), dir / "figS5_calibration");
  write_table(model_summary(scores, c.reference, w), dir / "models");
  write_table(classification_summary(outbreaks, c.cutoff), dir / "classification");
  log("report: chart data for " + run.string() + " written to " + dir.string());
}

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"synthgen", "ingest-weather", "tscv",   "evaluate", "forecast",
                                              "ensemble", "score",          "detect", "report"};
  return names;
}

inline void run_command(const std::string& name, const RunConfig& c) {
  if (name == "synthgen") return cmd_synthgen(c);
  if (name == "ingest-weather") return cmd_ingest_weather(c);
  if (name == "tscv") return static_cast<void>(cmd_tscv(c));
  if (name == "evaluate") return static_cast<void>(cmd_evaluate(c));
  if (name == "forecast") return cmd_forecast(c);
  if (name == "ensemble") return cmd_ensemble(c);
  if (name == "score") return cmd_score(c);
  if (name == "detect") return cmd_detect(c);
  if (name == "report") return cmd_report(c);
  throw InputError("unknown command '" + name + "'");
}

/// Runs a command and converts escaping exceptions to exit codes.
inline int run_command_guarded(const std::string& name, const RunConfig& c, std::ostream& err = std::cerr) {
  try {
    run_command(name, c);
    return kOk;
  } catch (const std::exception& e) {
    err << "distcast " << name << ": error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace distcast::app
