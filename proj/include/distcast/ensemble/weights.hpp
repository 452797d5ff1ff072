#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"

#include "distcast/core/errors.hpp"

namespace distcast {

/// One weight per ensemble member, in member order. `per_horizon` is only filled when
/// per-horizon weighting was requested.
struct EnsembleWeights {
  std::vector<std::string> models;
  std::vector<double> weights;
  std::map<int, std::vector<double>> per_horizon;
  bool degenerate = false;  // a member had CRPS 0 and took all the weight
  bool frozen = false;      // set once the cross-validation phase is over
  std::vector<double> crps;  // the inputs, kept for the record

  std::size_t size() const { return models.size(); }

  const std::vector<double>& for_horizon(int h) const {
    const auto it = per_horizon.find(h);
    return it == per_horizon.end() ? weights : it->second;
  }

  int index_of(const std::string& model) const {
    const auto it = std::find(models.begin(), models.end(), model);
    return it == models.end() ? -1 : static_cast<int>(it - models.begin());
  }
};

enum class WeightPhase { CrossValidation, Evaluation };

/// Normalized inverse squared CRPS. A zero CRPS gives that model (or the zero-CRPS models, in
/// equal shares) all the weight and marks the result degenerate.
inline std::vector<double> inverse_crps2(const std::vector<double>& crps, bool* degenerate = nullptr) {
  if (crps.empty()) throw PreconditionError("ensemble weights need at least one model");
  std::size_t zeros = 0;
  for (const double c : crps) {
    if (!std::isfinite(c) || c < 0.0) throw PreconditionError("CRPS values must be finite and non-negative");
    zeros += c == 0.0;
  }
  std::vector<double> w(crps.size(), 0.0);
  if (degenerate) *degenerate = zeros > 0;
  if (zeros > 0) {
    for (std::size_t m = 0; m < crps.size(); ++m) {
      if (crps[m] == 0.0) w[m] = 1.0 / static_cast<double>(zeros);
    }
    return w;
  }
  double total = 0.0;
  for (std::size_t m = 0; m < crps.size(); ++m) {
    w[m] = 1.0 / (crps[m] * crps[m]);
    total += w[m];
  }
  for (double& v : w) v /= total;
  return w;
}

/// Weights from cross-validation CRPS. Calling this in the evaluation phase breaks the
/// freeze rule and throws ContractError.
inline EnsembleWeights compute_weights(const std::vector<std::string>& models, const std::vector<double>& crps,
                                       WeightPhase phase = WeightPhase::CrossValidation) {
  if (phase == WeightPhase::Evaluation) {
    throw ContractError("ensemble weights are frozen after cross-validation and cannot be recomputed");
  }
  if (models.size() != crps.size()) throw PreconditionError("one CRPS value per model is required");
  EnsembleWeights w;
  w.models = models;
  w.crps = crps;
  w.weights = inverse_crps2(crps, &w.degenerate);
  return w;
}

/// Integer sample counts summing to `n_total`: floors of w*n, then the leftover units go to
/// the largest fractional parts (lower index first on ties).
inline std::vector<int> largest_remainder(const std::vector<double>& weights, int n_total) {
  if (weights.empty()) throw PreconditionError("allocation needs at least one weight");
  if (n_total < 0) throw PreconditionError("negative sample total");
  double sum = 0.0;
  for (const double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw PreconditionError("weights must be finite and non-negative");
    sum += w;
  }
  if (!(sum > 0.0)) throw PreconditionError("weights sum to zero");
  const std::size_t m = weights.size();
  std::vector<int> out(m);
  std::vector<double> rem(m);
  long long assigned = 0;
  for (std::size_t k = 0; k < m; ++k) {
    const double quota = weights[k] / sum * n_total;
    out[k] = static_cast<int>(std::floor(quota));
    rem[k] = quota - out[k];
    assigned += out[k];
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  long long left = n_total - assigned;
  for (std::size_t k = 0; left > 0; k = (k + 1) % m) {
    if (weights[order[k]] > 0.0) {
      ++out[order[k]];
      --left;
    }
  }
  // Rounding can only overshoot when the weights sum to slightly more than the total quota.
  for (std::size_t k = m; left < 0 && k-- > 0;) {
    if (out[order[k]] > 0) {
      --out[order[k]];
      ++left;
    }
  }
  return out;
}

inline void to_json(nlohmann::json& j, const EnsembleWeights& w) {
  j = nlohmann::json::object();
  j["models"] = w.models;
  j["weights"] = w.weights;
  j["crps"] = w.crps;
  j["degenerate"] = w.degenerate;
  j["frozen"] = w.frozen;
  nlohmann::json ph = nlohmann::json::object();
  for (const auto& [h, v] : w.per_horizon) ph[std::to_string(h)] = v;
  j["per_horizon"] = ph;
}

inline void from_json(const nlohmann::json& j, EnsembleWeights& w) {
  w.models = j.at("models").get<std::vector<std::string>>();
  w.weights = j.at("weights").get<std::vector<double>>();
  w.crps = j.value("crps", std::vector<double>{});
  w.degenerate = j.value("degenerate", false);
  w.frozen = j.value("frozen", false);
  w.per_horizon.clear();
  if (j.contains("per_horizon")) {
    for (const auto& [h, v] : j.at("per_horizon").items()) w.per_horizon[std::stoi(h)] = v.get<std::vector<double>>();
  }
  if (w.models.size() != w.weights.size()) throw InputError("weights file: models and weights differ in length");
}

}  // namespace distcast
