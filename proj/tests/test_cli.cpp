#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

#include "distcast/app/commands.hpp"
#include "distcast/config/config.hpp"

using namespace distcast;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("distcast_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

EnvLookup env_of(std::map<std::string, std::string> vars) {
  return [vars = std::move(vars)](const std::string& k) -> std::optional<std::string> {
    const auto it = vars.find(k);
    if (it == vars.end()) return std::nullopt;
    return it->second;
  };
}

std::string slurp(const fs::path& p) { return read_file(p.string()); }

/// A 5-district, 48-month seasonal fixture with its generated config, shared by the suite.
class CliFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    app::g_log = nullptr;
    root_ = new fs::path(scratch("fixture"));
    RunConfig c;
    c.seed = 7;
    c.out = (*root_ / "fx").string();
    c.synth_districts = 5;
    c.synth_months = 48;
    app::cmd_synthgen(c);
  }
  static void TearDownTestSuite() {
    fs::remove_all(*root_);
    delete root_;
  }

  static RunConfig config(const std::string& out, std::map<std::string, std::string> env = {}) {
    env.try_emplace("DISTCAST_MODELS_PRESETS", "reference, st2");
    auto c = load_config((*root_ / "fx/distcast.ini").string(), env_of(env));
    c.out = (*root_ / out).string();
    c.jobs = 2;
    return c;
  }

  static fs::path dir(const std::string& out) { return *root_ / out; }

  static fs::path* root_;
};

fs::path* CliFixture::root_ = nullptr;

}  // namespace

// ---------- config ----------

TEST(Config, ParsesSectionsAndResolvesRelativePaths) {
  const auto d = scratch("config");
  std::ofstream(d / "run.ini") << "seed = 11\nout = results\n[data]\ncases = in/cases.csv\n"
                                  "covariates = a.csv, /abs/b.csv\n[models]\npresets = st1, hhh4\n"
                                  "per_horizon_weights = yes\n[plan]\nfirst_origin = 2008-01\nhorizons = 1, 3\n"
                                  "[thresholds]\nrules = fixed_rate_50, poisson_glm\ncutoff = 0.4\n";
  const auto c = load_config((d / "run.ini").string(), env_of({}));
  EXPECT_EQ(*c.seed, 11u);
  EXPECT_EQ(c.out, (d / "results").string());
  EXPECT_EQ(c.cases, (d / "in/cases.csv").string());
  EXPECT_EQ(c.covariates, (std::vector<std::string>{(d / "a.csv").string(), "/abs/b.csv"}));
  EXPECT_EQ(c.presets, (std::vector<std::string>{"st1", "hhh4"}));
  EXPECT_TRUE(c.per_horizon_weights);
  EXPECT_EQ(*c.first_origin, (YearMonth{2008, 1}));
  EXPECT_EQ(c.horizons, (std::vector<int>{1, 3}));
  EXPECT_DOUBLE_EQ(c.cutoff, 0.4);
  const auto rules = config_rules(c);
  ASSERT_EQ(rules.size(), 2u);
  EXPECT_EQ(rules[0].name(), "fixed_rate_50");
  EXPECT_EQ(rules[1].kind, RuleKind::PoissonGlm);
  fs::remove_all(d);
}

TEST(Config, EnvironmentOverridesFile) {
  const auto d = scratch("config_env");
  std::ofstream(d / "run.ini") << "seed = 11\n[models]\nsamples = 1000\n";
  const auto c = load_config((d / "run.ini").string(),
                             env_of({{"DISTCAST_SEED", "99"}, {"DISTCAST_MODELS_SAMPLES", "2000"}}));
  EXPECT_EQ(*c.seed, 99u);
  EXPECT_EQ(c.samples, 2000);
  fs::remove_all(d);
}

TEST(Config, SeedIsMandatory) {
  const auto c = load_config("", env_of({}));
  EXPECT_FALSE(c.seed.has_value());
  EXPECT_THROW(c.require_seed(), InputError);
}

TEST(Config, BadValuesAreInputErrors) {
  const auto d = scratch("config_bad");
  std::ofstream(d / "a.ini") << "[models]\nsamples = many\n";
  EXPECT_THROW(load_config((d / "a.ini").string(), env_of({})), InputError);
  std::ofstream(d / "b.ini") << "[thresholds]\nrules = fixed_rate_70\n";
  EXPECT_THROW(load_config((d / "b.ini").string(), env_of({})), InputError);
  std::ofstream(d / "c.ini") << "[plan]\nfirst_origin = 2008-13\n";
  EXPECT_THROW(load_config((d / "c.ini").string(), env_of({})), InputError);
  std::ofstream(d / "d.ini") << "[weather]\nmode = satellite\n";
  EXPECT_THROW(load_config((d / "d.ini").string(), env_of({})), InputError);
  EXPECT_THROW(load_config((d / "missing.ini").string(), env_of({})), InputError);
  fs::remove_all(d);
}

// ---------- exit codes ----------

TEST(ExitCodes, MapErrorKinds) {
  EXPECT_EQ(app::exit_code_for(InputError("x")), 2);
  EXPECT_EQ(app::exit_code_for(PreconditionError("x")), 2);
  EXPECT_EQ(app::exit_code_for(MissingArtifactError("x")), 3);
  EXPECT_EQ(app::exit_code_for(ConvergenceError("x")), 1);
  EXPECT_EQ(app::exit_code_for(LeakageError("x")), 1);
  EXPECT_EQ(app::exit_code_for(std::runtime_error("x")), 1);
}

// ---------- commands ----------

TEST_F(CliFixture, SynthgenWritesPanelWeatherAndConfig) {
  for (const char* f : {"cases.csv", "adjacency.csv", "covariates/tmin.csv", "covariates/rain.csv",
                        "weather/stations.csv", "weather/centroids.csv", "weather/grid_tmin.csv",
                        "weather/grid_rain.csv", "truth.json", "distcast.ini"}) {
    EXPECT_TRUE(fs::exists(dir("fx") / f)) << f;
  }
  const auto p = app::load_panel(config("unused"));
  EXPECT_EQ(p.n(), 5);
  EXPECT_EQ(p.T(), 48);
}

TEST_F(CliFixture, IngestWeatherStationAndGridModesShareTheSchema) {
  const auto st = config("ing_station");
  app::cmd_ingest_weather(st);
  const auto gr = config("ing_grid", {{"DISTCAST_WEATHER_MODE", "grid"}});
  app::cmd_ingest_weather(gr);
  for (const char* var : {"tmin", "rain"}) {
    const auto a = read_csv((dir("ing_station") / "covariates" / (std::string(var) + ".csv")).string());
    const auto b = read_csv((dir("ing_grid") / "covariates" / (std::string(var) + ".csv")).string());
    EXPECT_EQ(a.header(), b.header());
    EXPECT_EQ(a.size(), b.size());
    EXPECT_EQ(a.size(), 5u * 12u);
  }
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir("ing_station") / "covariates")) files += e.path().extension() == ".csv";
  EXPECT_EQ(files, 2u);
}

TEST_F(CliFixture, IngestWeatherMissingCentroidsNamesThePath) {
  const auto c = config("ing_missing", {{"DISTCAST_WEATHER_CENTROIDS", "no_such_centroids.csv"}});
  std::ostringstream err;
  EXPECT_EQ(app::run_command_guarded("ingest-weather", c, err), 2);
  EXPECT_NE(err.str().find("no_such_centroids.csv"), std::string::npos) << err.str();
}

TEST_F(CliFixture, TscvScoreTableCountsAndDeterminism) {
  const auto c = config("run_a");
  const auto r = app::cmd_tscv(c);
  const auto plan = app::load_plan(c);
  const std::size_t units = plan.origins.size() * 5 * 3;
  const auto scores = read_model_scores_csv((dir("run_a") / "scores/all.csv").string());
  std::size_t crps_rows = 0;
  for (const auto& ms : scores) {
    if (ms.model == "ensemble") continue;
    for (const auto& row : ms.rows) crps_rows += row.metric == "crps";
  }
  EXPECT_EQ(crps_rows, 2 * units);
  EXPECT_TRUE(fs::exists(dir("run_a") / "forecasts/st2.bin"));
  EXPECT_TRUE(fs::exists(dir("run_a") / "weights.json"));
  EXPECT_TRUE(fs::exists(dir("run_a") / "manifest.json"));

  // Same config and seed: byte-identical tables, whatever the thread count.
  auto again = config("run_b");
  again.jobs = 1;
  app::cmd_tscv(again);
  for (const char* f : {"scores/all.csv", "scores/st2.csv", "scores/ensemble.csv", "scores/outbreaks.csv",
                        "forecasts/summary.csv", "weights.json", "manifest.json"}) {
    EXPECT_EQ(slurp(dir("run_a") / f), slurp(dir("run_b") / f)) << f;
  }

  // Another seed moves the aggregate CRPS by Monte Carlo noise only.
  auto other = config("run_c");
  other.seed = 8;
  const auto r2 = app::cmd_tscv(other);
  for (const auto& m : r.models) EXPECT_NEAR(r2.mean_crps(m) / r.mean_crps(m), 1.0, 0.02) << m;
}

TEST_F(CliFixture, DownstreamCommandsReproduceTscvArtifacts) {
  const auto c = config("run_d");
  app::cmd_tscv(c);
  const auto copy = dir("run_d_copy");
  fs::copy(dir("run_d"), copy, fs::copy_options::recursive);
  auto cc = c;
  cc.out = copy.string();
  app::cmd_score(cc);
  for (const char* f : {"scores/all.csv", "scores/reference.csv", "scores/ensemble.csv", "scores/outbreaks.csv"}) {
    EXPECT_EQ(slurp(dir("run_d") / f), slurp(copy / f)) << f;
  }
  app::cmd_ensemble(cc);
  EXPECT_EQ(slurp(dir("run_d") / "forecasts/ensemble.bin"), slurp(copy / "forecasts/ensemble.bin"));
}

TEST_F(CliFixture, EvaluateDetectReportAndForecast) {
  const auto c = config("run_e");
  app::cmd_tscv(c);
  const auto ev = app::cmd_evaluate(c);
  EXPECT_EQ(ev.origins.front(), *c.eval_first_origin);
  const auto w = read_json_file((dir("run_e") / "weights.json").string()).get<EnsembleWeights>();
  ASSERT_TRUE(ev.weights);
  EXPECT_EQ(ev.weights->weights, w.weights);

  auto four = config("run_e", {{"DISTCAST_THRESHOLDS_RULES", "mean_plus_2sd, percentile_95, poisson_glm, fixed_rate_50"}});
  app::cmd_detect(four);
  std::size_t label_files = 0;
  for (const auto& e : fs::directory_iterator(dir("run_e") / "detect")) label_files += e.path().extension() == ".csv";
  EXPECT_EQ(label_files, 4u);

  app::cmd_report(c);
  for (const char* f : {"fig3_timeseries", "fig4_brier_by_month", "figS5_calibration", "models", "classification"}) {
    EXPECT_TRUE(fs::exists(dir("run_e") / "report" / (std::string(f) + ".csv"))) << f;
    const auto j = read_json_file((dir("run_e") / "report" / (std::string(f) + ".json")).string());
    EXPECT_FALSE(j.at("rows").empty()) << f;
  }
  // A zero cutoff calls every defined forecast an outbreak.
  app::cmd_report(config("run_e", {{"DISTCAST_THRESHOLDS_CUTOFF", "0"}}));
  const auto cls = read_json_file((dir("run_e") / "report/classification.json").string());
  for (const auto& row : cls.at("rows")) {
    EXPECT_EQ(row.at("cutoff").get<double>(), 0.0);
    if (!row.at("specificity").is_null()) EXPECT_EQ(row.at("specificity").get<double>(), 0.0);
    if (!row.at("sensitivity").is_null()) EXPECT_EQ(row.at("sensitivity").get<double>(), 1.0);
  }

  app::cmd_forecast(c);
  const auto live = read_summaries_csv((dir("run_e") / "live/summary.csv").string());
  // Two models plus the ensemble, each district and horizon.
  EXPECT_EQ(live.size(), 3u * 5u * 3u);
}

TEST_F(CliFixture, MissingPrerequisitesExitThree) {
  std::ostringstream err;
  EXPECT_EQ(app::run_command_guarded("score", config("empty_score"), err), 3);
  EXPECT_NE(err.str().find("missing forecasts"), std::string::npos);
  EXPECT_EQ(app::run_command_guarded("evaluate", config("empty_eval"), err), 3);
  EXPECT_EQ(app::run_command_guarded("report", config("empty_report"), err), 3);
  EXPECT_EQ(app::run_command_guarded("ensemble", config("empty_ens"), err), 3);
}

TEST_F(CliFixture, BadInputExitsTwo) {
  std::ostringstream err;
  auto no_seed = config("bad_seed");
  no_seed.seed.reset();
  EXPECT_EQ(app::run_command_guarded("tscv", no_seed, err), 2);
  auto bad_plan = config("bad_plan", {{"DISTCAST_PLAN_LAST_ORIGIN", "2007-02"}});
  EXPECT_EQ(app::run_command_guarded("tscv", bad_plan, err), 2);
  EXPECT_NE(err.str().find("overlaps"), std::string::npos);
  EXPECT_EQ(app::run_command_guarded("frobnicate", config("bad_cmd"), err), 2);
}

#ifdef DISTCAST_CLI_PATH
TEST(CliBinary, ExitCodesFromTheProcess) {
  const auto d = scratch("binary");
  const std::string bin = DISTCAST_CLI_PATH;
  auto run = [&](const std::string& args) {
    const int status = std::system((bin + " " + args + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
  };
  EXPECT_EQ(run("--version"), 0);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("score --seed 1 --out " + (d / "nothing").string()), 3);
  EXPECT_EQ(run("tscv --out " + (d / "x").string()), 2);
  EXPECT_EQ(run("synthgen --seed 3 --out " + (d / "fx").string()), 0);
  EXPECT_TRUE(fs::exists(d / "fx/cases.csv"));
  fs::remove_all(d);
}
#endif
