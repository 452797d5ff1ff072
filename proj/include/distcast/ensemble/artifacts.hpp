#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "distcast/core/csv.hpp"
#include "distcast/core/errors.hpp"
#include "distcast/core/text.hpp"
#include "distcast/ensemble/tscv.hpp"

namespace distcast {

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw InputError("failed writing " + path);
}

inline nlohmann::json read_json_file(const std::string& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifactError("missing " + path);
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

inline std::string file_digest(const std::string& path) { return hex64(fnv1a64(read_file(path))); }

/// Score rows of several models in one table, model first.
inline void write_model_scores_csv(const std::string& path, const std::vector<ModelScores>& scores) {
  CsvWriter w(path, {"model", "district", "origin_year", "origin_month", "horizon", "metric", "value"});
  for (const auto& ms : scores) {
    for (const auto& r : ms.rows) {
      w.row({ms.model, r.district, std::to_string(r.origin.year), std::to_string(r.origin.month),
             std::to_string(r.horizon), r.metric, format_double(r.value)});
    }
  }
  w.close();
}

inline std::vector<ModelScores> read_model_scores_csv(const std::string& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifactError("missing scores " + path);
  const auto csv = read_csv(path);
  csv.require({"model", "district", "origin_year", "origin_month", "horizon", "metric", "value"});
  std::vector<ModelScores> out;
  const auto cm = csv.column("model"), cd = csv.column("district"), cy = csv.column("origin_year"),
             co = csv.column("origin_month"), ch = csv.column("horizon"), cx = csv.column("metric"),
             cv = csv.column("value");
  for (std::size_t r = 0; r < csv.size(); ++r) {
    const auto& model = csv.at(r, cm);
    if (out.empty() || out.back().model != model) out.push_back({model, {}});
    ScoreRow s;
    s.district = csv.at(r, cd);
    s.origin = {static_cast<int>(parse_int(csv.at(r, cy), csv.where(r))),
                static_cast<int>(parse_int(csv.at(r, co), csv.where(r)))};
    s.horizon = static_cast<int>(parse_int(csv.at(r, ch), csv.where(r)));
    s.metric = csv.at(r, cx);
    s.value = parse_double(csv.at(r, cv), csv.where(r));
    out.back().rows.push_back(std::move(s));
  }
  return out;
}

inline std::string label_token(Label l) {
  switch (l) {
    case Label::Outbreak: return "1";
    case Label::NoOutbreak: return "0";
    case Label::Undefined: return "NA";
  }
  return "NA";
}

inline Label parse_label_token(const std::string& s) {
  if (s == "1") return Label::Outbreak;
  if (s == "0") return Label::NoOutbreak;
  return Label::Undefined;
}

inline void write_outbreaks_csv(const std::string& path, const std::vector<OutbreakRow>& rows) {
  CsvWriter w(path, {"model", "district", "origin_year", "origin_month", "horizon", "rule", "threshold",
                     "probability", "outbreak"});
  for (const auto& r : rows) {
    w.row({r.model, r.district, std::to_string(r.origin.year), std::to_string(r.origin.month),
           std::to_string(r.horizon), r.rule, format_double(r.threshold), format_double(r.probability),
           label_token(r.label)});
  }
  w.close();
}

inline std::vector<OutbreakRow> read_outbreaks_csv(const std::string& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifactError("missing outbreak table " + path);
  const auto csv = read_csv(path);
  csv.require({"model", "district", "origin_year", "origin_month", "horizon", "rule", "threshold", "probability",
               "outbreak"});
  std::vector<OutbreakRow> out;
  for (std::size_t r = 0; r < csv.size(); ++r) {
    OutbreakRow o;
    o.model = csv.at(r, csv.column("model"));
    o.district = csv.at(r, csv.column("district"));
    o.origin = {static_cast<int>(parse_int(csv.at(r, csv.column("origin_year")), csv.where(r))),
                static_cast<int>(parse_int(csv.at(r, csv.column("origin_month")), csv.where(r)))};
    o.horizon = static_cast<int>(parse_int(csv.at(r, csv.column("horizon")), csv.where(r)));
    o.rule = csv.at(r, csv.column("rule"));
    o.threshold = parse_double(csv.at(r, csv.column("threshold")), csv.where(r));
    o.probability = parse_double(csv.at(r, csv.column("probability")), csv.where(r));
    o.label = parse_label_token(csv.at(r, csv.column("outbreak")));
    out.push_back(std::move(o));
  }
  return out;
}

inline void write_summaries_csv(const std::string& path, const std::vector<ForecastSummary>& rows) {
  CsvWriter w(path, {"model", "district", "origin_year", "origin_month", "horizon", "target", "observed", "mean",
                     "q025", "q50", "q975"});
  for (const auto& s : rows) {
    w.row({s.model, s.district, std::to_string(s.origin.year), std::to_string(s.origin.month),
           std::to_string(s.horizon), s.target().to_string(), format_double(s.observed), format_double(s.mean),
           format_double(s.q025), format_double(s.q50), format_double(s.q975)});
  }
  w.close();
}

inline std::vector<ForecastSummary> read_summaries_csv(const std::string& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifactError("missing forecast summary " + path);
  const auto csv = read_csv(path);
  csv.require({"model", "district", "origin_year", "origin_month", "horizon", "observed", "mean", "q025", "q50",
               "q975"});
  std::vector<ForecastSummary> out;
  for (std::size_t r = 0; r < csv.size(); ++r) {
    ForecastSummary s;
    s.model = csv.at(r, csv.column("model"));
    s.district = csv.at(r, csv.column("district"));
    s.origin = {static_cast<int>(parse_int(csv.at(r, csv.column("origin_year")), csv.where(r))),
                static_cast<int>(parse_int(csv.at(r, csv.column("origin_month")), csv.where(r)))};
    s.horizon = static_cast<int>(parse_int(csv.at(r, csv.column("horizon")), csv.where(r)));
    s.observed = parse_double(csv.at(r, csv.column("observed")), csv.where(r));
    s.mean = parse_double(csv.at(r, csv.column("mean")), csv.where(r));
    s.q025 = parse_double(csv.at(r, csv.column("q025")), csv.where(r));
    s.q50 = parse_double(csv.at(r, csv.column("q50")), csv.where(r));
    s.q975 = parse_double(csv.at(r, csv.column("q975")), csv.where(r));
    out.push_back(std::move(s));
  }
  return out;
}

inline nlohmann::json audit_json(const LeakageAudit& a) {
  nlohmann::json f = nlohmann::json::array();
  for (const auto& x : a.findings) {
    f.push_back({{"model", x.model}, {"origin", x.origin.to_string()}, {"feature", x.feature},
                 {"district", x.district}, {"month", x.month.to_string()}, {"source", x.source.to_string()}});
  }
  return {{"fits", a.fits}, {"cells", a.cells}, {"violations", a.findings.size()}, {"findings", f}};
}

/// Writes scores/, forecasts/summary.csv, weights.json (when an ensemble was built) and plan.json
/// under `dir`. Returns the relative paths written, in a fixed order.
inline std::vector<std::string> write_run_tables(const std::string& dir, const TscvResult& r,
                                                 const nlohmann::json& plan) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "scores");
  fs::create_directories(fs::path(dir) / "forecasts");
  std::vector<std::string> written;
  for (const auto& ms : r.scores) {
    const std::string rel = "scores/" + ms.model + ".csv";
    write_scores_csv(ms.rows, (fs::path(dir) / rel).string());
    written.push_back(rel);
  }
  write_model_scores_csv((fs::path(dir) / "scores/all.csv").string(), r.scores);
  written.push_back("scores/all.csv");
  write_outbreaks_csv((fs::path(dir) / "scores/outbreaks.csv").string(), r.outbreaks);
  written.push_back("scores/outbreaks.csv");
  write_summaries_csv((fs::path(dir) / "forecasts/summary.csv").string(), r.summaries);
  written.push_back("forecasts/summary.csv");
  if (r.weights) {
    write_json_file((fs::path(dir) / "weights.json").string(), *r.weights);
    written.push_back("weights.json");
  }
  write_json_file((fs::path(dir) / "plan.json").string(), plan);
  written.push_back("plan.json");
  return written;
}

}  // namespace distcast
