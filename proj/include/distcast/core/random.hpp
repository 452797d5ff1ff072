#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace distcast {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream seed for a tagged unit of work, e.g. (seed, district, origin, horizon).
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::int64_t> tags) {
  std::uint64_t h = splitmix64(seed);
  for (const auto t : tags) h = splitmix64(h ^ static_cast<std::uint64_t>(t));
  return h;
}

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::int64_t> tags) {
  return Rng(derive_seed(seed, tags));
}

// Log-means are clamped so exp() stays finite; ~7e10 expected cases is far beyond any panel.
inline constexpr double kMaxLogMean = 25.0;

inline long long draw_poisson(Rng& rng, double mean) {
  if (!(mean > 0.0)) return 0;
  std::poisson_distribution<long long> dist(mean);
  return dist(rng);
}

inline long long draw_poisson_log(Rng& rng, double log_mean) {
  return draw_poisson(rng, std::exp(std::min(log_mean, kMaxLogMean)));
}

/// Negative binomial with Var = mean + mean^2 / size, drawn as a gamma-Poisson mixture.
inline long long draw_negbin(Rng& rng, double mean, double size) {
  if (!(mean > 0.0)) return 0;
  std::gamma_distribution<double> gamma(size, mean / size);
  return draw_poisson(rng, gamma(rng));
}

inline double draw_normal(Rng& rng, double mean = 0.0, double sd = 1.0) {
  std::normal_distribution<double> dist(mean, sd);
  return dist(rng);
}

}  // namespace distcast
