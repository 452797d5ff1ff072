#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "distcast/core/errors.hpp"

namespace distcast {

/// Type-7 (linear interpolation) quantile of an ascending-sorted sample.
template <typename T>
double quantile_sorted(std::span<const T> sorted, double prob) {
  if (sorted.empty()) throw PreconditionError("quantile of an empty sample");
  if (prob < 0.0 || prob > 1.0) throw PreconditionError("quantile probability outside [0,1]");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return static_cast<double>(sorted[lo]) +
         frac * (static_cast<double>(sorted[hi]) - static_cast<double>(sorted[lo]));
}

template <typename T>
double quantile(std::span<const T> values, double prob) {
  std::vector<T> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return quantile_sorted<T>(sorted, prob);
}

template <typename T>
double quantile(const std::vector<T>& values, double prob) {
  return quantile(std::span<const T>(values), prob);
}

}  // namespace distcast
