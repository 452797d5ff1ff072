#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "distcast/core/calendar.hpp"
#include "distcast/core/errors.hpp"
#include "distcast/core/text.hpp"
#include "distcast/thresholds/rules.hpp"

namespace distcast {

inline constexpr const char* kEnvPrefix = "DISTCAST_";

/// Everything a command reads from the key-value config. Paths are absolute after loading
/// (relative ones are taken from the config file's directory).
struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned jobs = 0;  // 0: all cores

  // [data]
  std::string cases;
  std::string adjacency;
  std::vector<std::string> covariates;

  // [weather]
  std::string weather_mode = "station";
  std::string stations;
  std::vector<std::string> grid;  // one file per variable, same order
  std::string centroids;
  std::vector<std::string> weather_variables{"tmin", "rain"};

  // [models]
  std::vector<std::string> presets{"reference", "st1", "st2", "st3", "hhh4", "pca"};
  std::vector<std::string> ensemble;  // empty: every non-reference preset
  int samples = 1000;
  int ensemble_samples = 10000;
  bool per_horizon_weights = false;
  std::string reference = "reference";

  // [plan]
  std::optional<YearMonth> initial_train_end, first_origin, last_origin, eval_start;
  std::optional<YearMonth> eval_first_origin, eval_last_origin;
  std::vector<int> horizons{1, 2, 3};

  // [thresholds]
  std::vector<std::string> rules{"mean_plus_2sd", "percentile_95", "poisson_glm", "fixed_rate_50",
                                 "fixed_rate_100"};
  int poisson_sims = 1000;
  double cutoff = 0.5;

  // [forecast]
  std::optional<YearMonth> forecast_origin;

  // [synthgen]
  std::string synth_kind = "seasonal";
  int synth_districts = 20;
  int synth_months = 120;
  YearMonth synth_start{2004, 1};

  std::string source;  // config path, for messages

  std::uint64_t require_seed() const {
    if (!seed) throw InputError("a seed is required (config 'seed', " + std::string(kEnvPrefix) + "SEED or --seed)");
    return *seed;
  }
  const std::string& require_path(const std::string& value, const std::string& key) const {
    if (value.empty()) throw InputError("config " + source + " does not set " + key);
    if (!std::filesystem::exists(value)) throw InputError(key + ": file not found: " + value);
    return value;
  }
};

/// Parses a rule token: mean_plus_2sd, percentile_95, percentile_95_retrospective, poisson_glm or
/// fixed_rate_<level>.
inline OutbreakRule parse_rule(const std::string& token, int poisson_sims = 1000) {
  OutbreakRule r;
  if (token.rfind("fixed_rate_", 0) == 0) {
    r.kind = RuleKind::FixedRate;
    r.level = parse_double(token.substr(11), "rule " + token);
  } else if (token == "percentile_95_retrospective") {
    r.kind = RuleKind::Percentile95;
    r.retrospective = true;
  } else {
    r.kind = parse_rule_kind(token);
  }
  r.n_sims = poisson_sims;
  r.check();
  return r;
}

inline std::vector<OutbreakRule> config_rules(const RunConfig& c) {
  std::vector<OutbreakRule> out;
  for (const auto& t : c.rules) out.push_back(parse_rule(t, c.poisson_sims));
  return out;
}

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

namespace detail {

inline std::string env_name(const std::string& key) {
  std::string out = kEnvPrefix;
  for (const char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace detail

/// Reads an INI config. Each key `section.name` can be overridden by the environment variable
/// DISTCAST_SECTION_NAME (top-level keys: DISTCAST_NAME); the environment wins over the file.
/// An empty `path` gives the defaults plus environment overrides.
inline RunConfig load_config(const std::string& path, const EnvLookup& env = process_env) {
  namespace fs = std::filesystem;
  namespace pt = boost::property_tree;
  pt::ptree tree;
  fs::path base = fs::current_path();
  RunConfig c;
  c.source = path.empty() ? "(defaults)" : path;
  if (!path.empty()) {
    if (!fs::exists(path)) throw InputError("config file not found: " + path);
    try {
      pt::ini_parser::read_ini(path, tree);
    } catch (const pt::ini_parser_error& e) {
      throw InputError(std::string("config: ") + e.what());
    }
    base = fs::absolute(path).parent_path();
  }
  auto get = [&](const std::string& key) -> std::optional<std::string> {
    if (auto v = env(detail::env_name(key))) return std::string(trim(*v));
    if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(key, '.'))) return std::string(trim(*v));
    return std::nullopt;
  };
  auto where = [&](const std::string& key) { return c.source + " [" + key + "]"; };
  auto path_of = [&](const std::string& v) {
    if (v.empty()) return v;
    const fs::path p(v);
    return (p.is_absolute() ? p : base / p).lexically_normal().string();
  };
  auto str = [&](const std::string& key, std::string& dst) {
    if (auto v = get(key)) dst = *v;
  };
  auto file = [&](const std::string& key, std::string& dst) {
    if (auto v = get(key)) dst = path_of(*v);
  };
  auto list = [&](const std::string& key, std::vector<std::string>& dst) {
    if (auto v = get(key)) dst = split_list(*v);
  };
  auto integer = [&](const std::string& key, auto& dst) {
    if (auto v = get(key)) dst = static_cast<std::decay_t<decltype(dst)>>(parse_int(*v, where(key)));
  };
  auto month = [&](const std::string& key, std::optional<YearMonth>& dst) {
    if (auto v = get(key)) {
      try {
        dst = YearMonth::parse(*v);
      } catch (const std::exception& e) {
        throw InputError(where(key) + ": " + e.what());
      }
    }
  };
  auto boolean = [&](const std::string& key, bool& dst) {
    if (auto v = get(key)) {
      if (*v == "true" || *v == "1" || *v == "yes") {
        dst = true;
      } else if (*v == "false" || *v == "0" || *v == "no") {
        dst = false;
      } else {
        throw InputError(where(key) + ": expected true or false, got '" + *v + "'");
      }
    }
  };

  if (auto v = get("seed")) c.seed = static_cast<std::uint64_t>(parse_int(*v, where("seed")));
  file("out", c.out);
  integer("jobs", c.jobs);
  file("data.cases", c.cases);
  file("data.adjacency", c.adjacency);
  if (auto v = get("data.covariates")) {
    c.covariates.clear();
    for (const auto& p : split_list(*v)) c.covariates.push_back(path_of(p));
  }
  str("weather.mode", c.weather_mode);
  file("weather.stations", c.stations);
  if (auto v = get("weather.grid")) {
    c.grid.clear();
    for (const auto& g : split_list(*v)) c.grid.push_back(path_of(g));
  }
  file("weather.centroids", c.centroids);
  list("weather.variables", c.weather_variables);
  list("models.presets", c.presets);
  list("models.ensemble", c.ensemble);
  integer("models.samples", c.samples);
  integer("models.ensemble_samples", c.ensemble_samples);
  boolean("models.per_horizon_weights", c.per_horizon_weights);
  str("models.reference", c.reference);
  month("plan.initial_train_end", c.initial_train_end);
  month("plan.first_origin", c.first_origin);
  month("plan.last_origin", c.last_origin);
  month("plan.eval_start", c.eval_start);
  month("plan.eval_first_origin", c.eval_first_origin);
  month("plan.eval_last_origin", c.eval_last_origin);
  if (auto v = get("plan.horizons")) {
    c.horizons.clear();
    for (const auto& h : split_list(*v)) c.horizons.push_back(static_cast<int>(parse_int(h, where("plan.horizons"))));
  }
  list("thresholds.rules", c.rules);
  integer("thresholds.poisson_sims", c.poisson_sims);
  if (auto v = get("thresholds.cutoff")) c.cutoff = parse_double(*v, where("thresholds.cutoff"));
  month("forecast.origin", c.forecast_origin);
  str("synthgen.kind", c.synth_kind);
  integer("synthgen.districts", c.synth_districts);
  integer("synthgen.months", c.synth_months);
  if (auto v = get("synthgen.start")) c.synth_start = YearMonth::parse(*v);

  if (c.weather_mode != "station" && c.weather_mode != "grid") {
    throw InputError(where("weather.mode") + ": expected station or grid");
  }
  if (c.samples < 1 || c.ensemble_samples < 1) throw InputError(c.source + ": sample counts must be positive");
  if (c.cutoff < 0.0 || c.cutoff > 1.0) throw InputError(where("thresholds.cutoff") + ": outside [0,1]");
  for (const auto& r : c.rules) parse_rule(r, c.poisson_sims);
  return c;
}

}  // namespace distcast
