#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "distcast/app/commands.hpp"
#include "distcast/config/config.hpp"

namespace {

const char* kDescriptions[][2] = {
    {"synthgen", "write a synthetic panel, weather fixture and config"},
    {"ingest-weather", "krige station readings (or sample grids) to district monthly covariates"},
    {"tscv", "rolling-origin cross-validation of every model plus the weighted ensemble"},
    {"evaluate", "out-of-sample run with the frozen weights of a previous tscv"},
    {"forecast", "live forecasts from one origin"},
    {"ensemble", "re-pool member forecasts with the frozen weights"},
    {"score", "score the forecasts of a run against the panel"},
    {"detect", "outbreak labels per threshold rule"},
    {"report", "chart data (CSV and JSON) for a finished run"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distcast: district-level probabilistic case forecasting"};
  app.set_version_flag("--version", DISTCAST_VERSION);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<unsigned> jobs;
  app.add_option("--config", config_path, "INI config; every key can be overridden by DISTCAST_<SECTION>_<KEY>");
  app.add_option("--seed", seed, "random seed (required unless set in the config)");
  app.add_option("--out", out, "output directory");
  app.add_option("--jobs", jobs, "worker threads (default: available cores)")->check(CLI::PositiveNumber);
  app.require_subcommand(1);
  for (const auto& d : kDescriptions) app.add_subcommand(d[0], d[1])->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : distcast::app::kBadInput;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  distcast::RunConfig cfg;
  try {
    cfg = distcast::load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "distcast " << command << ": error: " << e.what() << '\n';
    return distcast::app::exit_code_for(e);
  }
  if (seed) cfg.seed = *seed;
  if (out) cfg.out = *out;
  if (jobs) cfg.jobs = *jobs;
  return distcast::app::run_command_guarded(command, cfg);
}
