#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "json.hpp"

#include "distcast/core/errors.hpp"
#include "distcast/panel/panel.hpp"

namespace distcast {

enum class Family { Reference, Spatiotemporal, Hhh4, Pca };
enum class SpatialKind { None, Iid, Besag, Bym2 };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::Reference: return "reference";
    case Family::Spatiotemporal: return "spatiotemporal";
    case Family::Hhh4: return "hhh4";
    case Family::Pca: return "pca";
  }
  return "?";
}

inline Family parse_family(const std::string& s) {
  for (auto f : {Family::Reference, Family::Spatiotemporal, Family::Hhh4, Family::Pca}) {
    if (to_string(f) == s) return f;
  }
  throw InputError("unknown model family '" + s + "'");
}

inline std::string to_string(SpatialKind k) {
  switch (k) {
    case SpatialKind::None: return "none";
    case SpatialKind::Iid: return "iid";
    case SpatialKind::Besag: return "besag";
    case SpatialKind::Bym2: return "bym2";
  }
  return "?";
}

inline SpatialKind parse_spatial(const std::string& s) {
  for (auto k : {SpatialKind::None, SpatialKind::Iid, SpatialKind::Besag, SpatialKind::Bym2}) {
    if (to_string(k) == s) return k;
  }
  throw InputError("unknown spatial effect '" + s + "'");
}

/// A lagged regressor: a panel covariate (`kind == "covariate"`) or log cumulative incidence
/// over `window` months (`kind == "cuminc"`).
struct Term {
  std::string kind = "covariate";
  std::string name;
  int lag = 3;
  int window = 0;

  std::string label() const {
    return kind == "cuminc" ? "cuminc" + std::to_string(window) + "_lag" + std::to_string(lag)
                            : name + "_lag" + std::to_string(lag);
  }
  bool operator==(const Term&) const = default;
};

struct StOptions {
  bool offset_term = true;  // log((Y[t-L]+1)/p) with coefficient 1
  int case_lag = 3;
  std::vector<Term> terms;
  SpatialKind spatial = SpatialKind::Iid;
  bool seasonal = true;        // cyclic RW1 per district, shared variance
  bool temporal = true;        // yearly AR(1) delta
  bool per_district_ar1 = false;
};

struct Hhh4Options {
  std::vector<Term> endemic;
  std::vector<Term> epidemic;
  std::vector<Term> neighbourhood;
  bool random_intercepts = true;  // ridge-penalized endemic intercept per district
  bool epidemic_component = true;
  bool neighbourhood_component = true;
};

struct PcaOptions {
  int components = 10;
  std::vector<int> lags{3, 4, 5};
  std::vector<Term> terms;  // same-district regressors
  bool temporal = true;
};

struct ModelSpec {
  std::string name;
  Family family = Family::Reference;
  StOptions st;
  Hhh4Options hhh4;
  PcaOptions pca;
  std::vector<int> horizons{1, 2, 3};

  int max_horizon() const { return *std::max_element(horizons.begin(), horizons.end()); }

  /// Every term a fit will read, across components.
  std::vector<Term> all_terms() const {
    std::vector<Term> out;
    auto add = [&](const std::vector<Term>& v) { out.insert(out.end(), v.begin(), v.end()); };
    switch (family) {
      case Family::Reference: break;
      case Family::Spatiotemporal: add(st.terms); break;
      case Family::Hhh4:
        add(hhh4.endemic);
        add(hhh4.epidemic);
        add(hhh4.neighbourhood);
        break;
      case Family::Pca: add(pca.terms); break;
    }
    return out;
  }

  /// Structural checks, and panel compatibility when a panel is given.
  void check(const PanelDataset* panel = nullptr) const {
    if (name.empty()) throw InputError("model spec needs a name");
    if (horizons.empty()) throw InputError("model '" + name + "' has no horizons");
    for (const int h : horizons) {
      if (h < 1 || h > 3) throw InputError("model '" + name + "': horizon must be 1, 2 or 3");
    }
    const int hmax = max_horizon();
    // hhh4 reads lag-1 cases by design and simulates paths; lagged regressors still need lag >= h.
    if (family == Family::Spatiotemporal && st.offset_term && st.case_lag < hmax) {
      throw InputError("model '" + name + "': case lag " + std::to_string(st.case_lag) +
                       " is shorter than horizon " + std::to_string(hmax));
    }
    if (family == Family::Pca) {
      if (pca.components < 1) throw InputError("model '" + name + "': components must be >= 1");
      if (pca.lags.empty()) throw InputError("model '" + name + "': no case lags");
      for (const int l : pca.lags) {
        if (l < hmax) {
          throw InputError("model '" + name + "': case lag " + std::to_string(l) +
                           " is shorter than horizon " + std::to_string(hmax));
        }
      }
    }
    for (const auto& t : all_terms()) {
      if (t.lag < hmax) {
        throw InputError("model '" + name + "': term " + t.label() + " has lag below horizon " +
                         std::to_string(hmax));
      }
      if (t.kind == "cuminc") {
        if (t.window != 12 && t.window != 24 && t.window != 36) {
          throw InputError("model '" + name + "': cumulative incidence window must be 12, 24 or 36");
        }
      } else if (t.kind == "covariate") {
        if (t.name.empty()) throw InputError("model '" + name + "': covariate term without a name");
        if (panel && !panel->covariates.count(t.name)) {
          throw InputError("model '" + name + "' needs covariate '" + t.name +
                           "' which the panel does not have");
        }
      } else {
        throw InputError("model '" + name + "': unknown term kind '" + t.kind + "'");
      }
    }
  }
};

/// Names of the weather covariates the presets refer to.
struct WeatherNames {
  std::string tmin = "tmin";
  std::string tavg = "tavg";
  std::string rain = "rain";
};

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"reference", "st1", "st2", "st3", "hhh4", "pca"};
  return names;
}

inline ModelSpec preset(const std::string& name, const WeatherNames& w = {}) {
  ModelSpec s;
  s.name = name;
  const Term tmin{"covariate", w.tmin, 3, 0}, tavg{"covariate", w.tavg, 3, 0},
      rain{"covariate", w.rain, 3, 0};
  if (name == "reference") {
    s.family = Family::Reference;
    s.st.offset_term = false;
    s.st.temporal = false;
    s.st.spatial = SpatialKind::Iid;
  } else if (name == "st1") {
    s.family = Family::Spatiotemporal;
    s.st.spatial = SpatialKind::Iid;
  } else if (name == "st2") {
    s.family = Family::Spatiotemporal;
    s.st.terms = {tmin, rain};
    s.st.spatial = SpatialKind::Besag;
  } else if (name == "st3") {
    s.family = Family::Spatiotemporal;
    s.st.terms = {Term{"cuminc", "", 3, 12}, Term{"cuminc", "", 3, 24}, Term{"cuminc", "", 3, 36},
                  tmin, rain};
    s.st.spatial = SpatialKind::Besag;
  } else if (name == "hhh4") {
    s.family = Family::Hhh4;
    s.hhh4.endemic = {tavg, rain};
    s.hhh4.epidemic = {tavg, rain};
  } else if (name == "pca") {
    s.family = Family::Pca;
    s.pca.terms = {tmin, rain};
  } else {
    throw InputError("unknown model preset '" + name + "'");
  }
  return s;
}

/// The spatiotemporal design space: 5 covariate bundles x lagged-case offset on/off x
/// spatial effect x shared or per-district AR(1), 60 specs in all.
inline std::vector<ModelSpec> st_sweep(const WeatherNames& w = {}) {
  const Term tmin{"covariate", w.tmin, 3, 0}, rain{"covariate", w.rain, 3, 0};
  const std::vector<std::vector<Term>> bundles{
      {},
      {tmin},
      {rain},
      {tmin, rain},
      {Term{"cuminc", "", 3, 12}, Term{"cuminc", "", 3, 24}, Term{"cuminc", "", 3, 36}, tmin, rain},
  };
  std::vector<ModelSpec> out;
  for (std::size_t c = 0; c < bundles.size(); ++c) {
    for (const bool offset : {true, false}) {
      for (const auto sp : {SpatialKind::Iid, SpatialKind::Besag, SpatialKind::Bym2}) {
        for (const bool per_district : {false, true}) {
          ModelSpec s;
          s.family = Family::Spatiotemporal;
          s.st.terms = bundles[c];
          s.st.offset_term = offset;
          s.st.spatial = sp;
          s.st.per_district_ar1 = per_district;
          s.name = "sweep_c" + std::to_string(c) + (offset ? "_lagged_" : "_nolag_") + to_string(sp) +
                   (per_district ? "_ar1district" : "_ar1shared");
          out.push_back(std::move(s));
        }
      }
    }
  }
  return out;
}

// JSON round trip for specs.

inline void to_json(nlohmann::json& j, const Term& t) {
  j = {{"kind", t.kind}, {"name", t.name}, {"lag", t.lag}, {"window", t.window}};
}
inline void from_json(const nlohmann::json& j, Term& t) {
  t.kind = j.at("kind").get<std::string>();
  t.name = j.value("name", "");
  t.lag = j.at("lag").get<int>();
  t.window = j.value("window", 0);
}

inline nlohmann::json spec_to_json(const ModelSpec& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["family"] = to_string(s.family);
  j["horizons"] = s.horizons;
  j["st"] = {{"offset_term", s.st.offset_term},
             {"case_lag", s.st.case_lag},
             {"terms", s.st.terms},
             {"spatial", to_string(s.st.spatial)},
             {"seasonal", s.st.seasonal},
             {"temporal", s.st.temporal},
             {"per_district_ar1", s.st.per_district_ar1}};
  j["hhh4"] = {{"endemic", s.hhh4.endemic},
               {"epidemic", s.hhh4.epidemic},
               {"neighbourhood", s.hhh4.neighbourhood},
               {"random_intercepts", s.hhh4.random_intercepts},
               {"epidemic_component", s.hhh4.epidemic_component},
               {"neighbourhood_component", s.hhh4.neighbourhood_component}};
  j["pca"] = {{"components", s.pca.components},
              {"lags", s.pca.lags},
              {"terms", s.pca.terms},
              {"temporal", s.pca.temporal}};
  return j;
}

inline ModelSpec spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.name = j.at("name").get<std::string>();
  s.family = parse_family(j.at("family").get<std::string>());
  s.horizons = j.at("horizons").get<std::vector<int>>();
  const auto& st = j.at("st");
  s.st.offset_term = st.at("offset_term").get<bool>();
  s.st.case_lag = st.at("case_lag").get<int>();
  s.st.terms = st.at("terms").get<std::vector<Term>>();
  s.st.spatial = parse_spatial(st.at("spatial").get<std::string>());
  s.st.seasonal = st.at("seasonal").get<bool>();
  s.st.temporal = st.at("temporal").get<bool>();
  s.st.per_district_ar1 = st.at("per_district_ar1").get<bool>();
  const auto& h = j.at("hhh4");
  s.hhh4.endemic = h.at("endemic").get<std::vector<Term>>();
  s.hhh4.epidemic = h.at("epidemic").get<std::vector<Term>>();
  s.hhh4.neighbourhood = h.at("neighbourhood").get<std::vector<Term>>();
  s.hhh4.random_intercepts = h.at("random_intercepts").get<bool>();
  s.hhh4.epidemic_component = h.at("epidemic_component").get<bool>();
  s.hhh4.neighbourhood_component = h.at("neighbourhood_component").get<bool>();
  const auto& p = j.at("pca");
  s.pca.components = p.at("components").get<int>();
  s.pca.lags = p.at("lags").get<std::vector<int>>();
  s.pca.terms = p.at("terms").get<std::vector<Term>>();
  s.pca.temporal = p.at("temporal").get<bool>();
  return s;
}

}  // namespace distcast
