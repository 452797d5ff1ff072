#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "distcast/core/errors.hpp"
#include "distcast/core/quantile.hpp"
#include "distcast/core/random.hpp"
#include "distcast/core/text.hpp"
#include "distcast/ensemble/weights.hpp"
#include "distcast/model/forecast.hpp"

namespace distcast {

inline constexpr int kEnsembleSamples = 10000;

struct PooledForecast {
  ForecastDistribution forecast;
  std::vector<int> allocation;  // samples taken from each component
  double q025 = 0.0, q50 = 0.0, q975 = 0.0;
};

/// Weighted pool of component forecasts for one (district, origin, horizon). Component m
/// contributes its largest-remainder share of `n_total` samples, drawn with replacement.
/// A null component means its forecast is missing and raises InputError.
inline PooledForecast pool_samples(const std::vector<const ForecastDistribution*>& components,
                                   const std::vector<double>& weights, int n_total, std::uint64_t seed) {
  if (components.empty()) throw PreconditionError("pooling needs at least one component");
  if (components.size() != weights.size()) throw PreconditionError("one weight per component is required");
  if (n_total < 1) throw PreconditionError("pooled sample count must be positive");
  for (std::size_t m = 0; m < components.size(); ++m) {
    if (!components[m]) throw InputError("missing component forecast " + std::to_string(m));
  }
  const auto& first = *components.front();
  for (const auto* c : components) {
    if (key_of(*c) != key_of(first)) {
      throw PreconditionError("pooled components must share district, origin and horizon");
    }
  }
  PooledForecast out;
  out.allocation = largest_remainder(weights, n_total);
  out.forecast.district = first.district;
  out.forecast.origin = first.origin;
  out.forecast.horizon = first.horizon;
  out.forecast.samples.reserve(static_cast<std::size_t>(n_total));
  auto rng = make_rng(seed, {0x706f6f6c, static_cast<std::int64_t>(fnv1a64(first.district) >> 1),
                             first.origin.index(), first.horizon});
  for (std::size_t m = 0; m < components.size(); ++m) {
    const int k = out.allocation[m];
    if (k == 0) continue;
    const auto& s = components[m]->samples;
    if (s.empty()) throw InputError("component forecast " + std::to_string(m) + " has no samples");
    std::uniform_int_distribution<std::size_t> pick(0, s.size() - 1);
    for (int r = 0; r < k; ++r) out.forecast.samples.push_back(s[pick(rng)]);
  }
  auto sorted = out.forecast.samples;
  std::sort(sorted.begin(), sorted.end());
  out.q025 = quantile_sorted<double>(sorted, 0.025);
  out.q50 = quantile_sorted<double>(sorted, 0.5);
  out.q975 = quantile_sorted<double>(sorted, 0.975);
  return out;
}

}  // namespace distcast
