#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "distcast/core/calendar.hpp"
#include "distcast/core/errors.hpp"
#include "distcast/core/text.hpp"
#include "distcast/model/common.hpp"
#include "distcast/model/forecast.hpp"
#include "distcast/model/hhh4.hpp"
#include "distcast/model/pca.hpp"
#include "distcast/model/spec.hpp"
#include "distcast/model/st.hpp"
#include "distcast/panel/panel.hpp"

namespace distcast {

inline constexpr int kFittedModelVersion = 1;
inline constexpr const char* kFittedModelFormat = "distcast-fitted-model";

/// A model fitted on every panel month up to and including `origin`.
struct FittedModel {
  ModelSpec spec;
  std::vector<std::string> districts;
  YearMonth origin;
  FitDiagnostics diagnostics;
  std::variant<StFit, Hhh4Fit, PcaFit> state;
};

struct FitOptions {
  latent::LaplaceOptions laplace{};
  Hhh4FitOptions hhh4{};
};

/// Fits `spec` on the months of `p` up to `origin` (default: the last panel month).
inline FittedModel fit_model(const ModelSpec& spec, const PanelDataset& p,
                             std::optional<YearMonth> origin = std::nullopt, const FitOptions& opt = {}) {
  if (p.T() == 0 || p.n() == 0) throw PreconditionError("empty training window");
  const int last = origin ? p.time_index(*origin) : p.T() - 1;
  const PanelDataset train = last == p.T() - 1 ? p : p.truncated(last);
  FittedModel m;
  m.spec = spec;
  m.districts = p.districts;
  m.origin = train.months.back();
  switch (spec.family) {
    case Family::Reference:
    case Family::Spatiotemporal: {
      StFitOptions o;
      o.laplace = opt.laplace;
      auto [f, d] = fit_st(spec, train, o);
      m.state = std::move(f);
      m.diagnostics = d;
      break;
    }
    case Family::Hhh4: {
      auto [f, d] = fit_hhh4(spec, train, opt.hhh4);
      m.state = std::move(f);
      m.diagnostics = d;
      break;
    }
    case Family::Pca: {
      PcaFitOptions o;
      o.laplace = opt.laplace;
      auto [f, d] = fit_pca_model(spec, train, o);
      m.state = std::move(f);
      m.diagnostics = d;
      break;
    }
  }
  return m;
}

/// Predictive samples for every district at `horizons` (default: the spec's) from the model's
/// origin. Only panel months up to the origin are read.
inline std::vector<ForecastDistribution> forecast_model(const FittedModel& m, const PanelDataset& p,
                                                        int n_samples, std::uint64_t seed,
                                                        std::vector<int> horizons = {}) {
  if (p.districts != m.districts) throw InputError("panel districts do not match the fitted model");
  if (horizons.empty()) horizons = m.spec.horizons;
  for (const int h : horizons) {
    if (h < 1) throw PreconditionError("forecast horizons must be >= 1");
  }
  const int last = p.time_index(m.origin);
  const PanelDataset hist = last == p.T() - 1 ? p : p.truncated(last);
  if (const auto* f = std::get_if<StFit>(&m.state)) return forecast_st(*f, m.spec, hist, horizons, n_samples, seed);
  if (const auto* f = std::get_if<Hhh4Fit>(&m.state)) {
    return forecast_hhh4(*f, m.spec, hist, horizons, n_samples, seed);
  }
  return forecast_pca(std::get<PcaFit>(m.state), m.spec, hist, horizons, n_samples, seed);
}

inline nlohmann::json model_to_json(const FittedModel& m) {
  nlohmann::json j;
  j["format"] = kFittedModelFormat;
  j["version"] = kFittedModelVersion;
  j["spec"] = spec_to_json(m.spec);
  j["districts"] = m.districts;
  j["origin"] = m.origin.to_string();
  j["diagnostics"] = m.diagnostics;
  std::visit([&](const auto& s) { j["state"] = s; }, m.state);
  return j;
}

inline FittedModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kFittedModelFormat) throw InputError("not a fitted model document");
    const int v = j.at("version").get<int>();
    if (v != kFittedModelVersion) {
      throw InputError("fitted model version " + std::to_string(v) + " is not supported (expected " +
                       std::to_string(kFittedModelVersion) + ")");
    }
    FittedModel m;
    m.spec = spec_from_json(j.at("spec"));
    m.districts = j.at("districts").get<std::vector<std::string>>();
    m.origin = YearMonth::parse(j.at("origin").get<std::string>());
    m.diagnostics = j.at("diagnostics").get<FitDiagnostics>();
    const auto& s = j.at("state");
    switch (m.spec.family) {
      case Family::Reference:
      case Family::Spatiotemporal: m.state = s.get<StFit>(); break;
      case Family::Hhh4:
        m.state = hhh4_fit_from_json(s, m.spec.hhh4, static_cast<int>(m.districts.size()));
        break;
      case Family::Pca: m.state = s.get<PcaFit>(); break;
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed fitted model document: ") + e.what());
  }
}

inline void save_model(const std::string& path, const FittedModel& m) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << model_to_json(m).dump() << '\n';
}

inline FittedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("missing model file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace distcast
