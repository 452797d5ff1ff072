#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "distcast/core/errors.hpp"

namespace distcast::weather {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct Observation {
  Point at;
  double value = 0.0;
};

/// Exponential model gamma(h) = nugget + psill * (1 - exp(-h / range)).
struct Variogram {
  double nugget = 0.0;
  double psill = 0.0;
  double range = 1.0;
  bool degenerate = false;  // no spatial variance in the data

  double operator()(double h) const { return nugget + psill * (1.0 - std::exp(-h / range)); }
  double sill() const { return nugget + psill; }
};

struct VariogramBin {
  double distance = 0.0;  // mean pair distance in the bin
  double gamma = 0.0;     // half mean squared difference
  std::size_t pairs = 0;
};

/// Classical (Matheron) estimator on equal-width bins up to `cutoff`.
inline std::vector<VariogramBin> empirical_variogram(const std::vector<Observation>& obs,
                                                     double cutoff, int n_bins) {
  std::vector<VariogramBin> bins(static_cast<std::size_t>(n_bins));
  std::vector<double> dsum(bins.size(), 0.0), gsum(bins.size(), 0.0);
  const double width = cutoff / n_bins;
  for (std::size_t a = 0; a < obs.size(); ++a) {
    for (std::size_t b = a + 1; b < obs.size(); ++b) {
      const double h = distance(obs[a].at, obs[b].at);
      if (h > cutoff || h <= 0.0) continue;
      const auto k = std::min(bins.size() - 1, static_cast<std::size_t>(h / width));
      const double d = obs[a].value - obs[b].value;
      dsum[k] += h;
      gsum[k] += 0.5 * d * d;
      ++bins[k].pairs;
    }
  }
  std::vector<VariogramBin> out;
  for (std::size_t k = 0; k < bins.size(); ++k) {
    if (bins[k].pairs == 0) continue;
    const double n = static_cast<double>(bins[k].pairs);
    out.push_back({dsum[k] / n, gsum[k] / n, bins[k].pairs});
  }
  return out;
}

inline constexpr int kMinVariogramStations = 4;

namespace detail {

struct LinearFit {
  double nugget, psill, sse;
};

/// Weighted least squares for (nugget, psill) >= 0 at a fixed range.
inline LinearFit fit_sills(const std::vector<VariogramBin>& bins, double range) {
  double sw = 0, sf = 0, sff = 0, sg = 0, sfg = 0;
  for (const auto& b : bins) {
    const double w = static_cast<double>(b.pairs);
    const double f = 1.0 - std::exp(-b.distance / range);
    sw += w;
    sf += w * f;
    sff += w * f * f;
    sg += w * b.gamma;
    sfg += w * f * b.gamma;
  }
  auto sse = [&](double c0, double c1) {
    double s = 0.0;
    for (const auto& b : bins) {
      const double r = b.gamma - c0 - c1 * (1.0 - std::exp(-b.distance / range));
      s += static_cast<double>(b.pairs) * r * r;
    }
    return s;
  };
  LinearFit best{0.0, 0.0, std::numeric_limits<double>::infinity()};
  auto consider = [&](double c0, double c1) {
    if (c0 < 0.0 || c1 < 0.0) return;
    const double s = sse(c0, c1);
    if (s < best.sse) best = {c0, c1, s};
  };
  const double det = sw * sff - sf * sf;
  if (det > 1e-14 * sw * sff) consider((sff * sg - sf * sfg) / det, (sw * sfg - sf * sg) / det);
  consider(0.0, sff > 0.0 ? std::max(0.0, sfg / sff) : 0.0);
  consider(std::max(0.0, sg / sw), 0.0);
  return best;
}

}  // namespace detail

/// Weighted (pair-count) least-squares fit of the exponential model. The range is profiled:
/// a log-spaced grid followed by golden-section refinement, with the sills solved in closed form.
inline Variogram fit_variogram(const std::vector<Observation>& obs, int n_bins = 15) {
  if (static_cast<int>(obs.size()) < kMinVariogramStations) {
    throw PreconditionError("variogram fit needs at least 4 stations, got " +
                            std::to_string(obs.size()));
  }
  double max_h = 0.0, vmin = obs[0].value, vmax = obs[0].value;
  for (std::size_t a = 0; a < obs.size(); ++a) {
    vmin = std::min(vmin, obs[a].value);
    vmax = std::max(vmax, obs[a].value);
    for (std::size_t b = a + 1; b < obs.size(); ++b) max_h = std::max(max_h, distance(obs[a].at, obs[b].at));
  }
  Variogram v;
  if (max_h <= 0.0) throw PreconditionError("variogram fit needs distinct station locations");
  if (vmax - vmin <= 1e-12 * std::max(1.0, std::abs(vmax))) {
    v.range = max_h / 3.0;
    v.degenerate = true;
    return v;
  }
  const double cutoff = max_h / 2.0;
  auto bins = empirical_variogram(obs, cutoff, n_bins);
  if (bins.size() < 2) bins = empirical_variogram(obs, max_h, n_bins);

  const double lo = std::log(cutoff / 100.0), hi = std::log(cutoff * 3.0);
  const int grid = 80;
  double best_x = lo, best_sse = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= grid; ++k) {
    const double x = lo + (hi - lo) * k / grid;
    const double s = detail::fit_sills(bins, std::exp(x)).sse;
    if (s < best_sse) {
      best_sse = s;
      best_x = x;
    }
  }
  const double step = (hi - lo) / grid;
  double a = std::max(lo, best_x - step), b = std::min(hi, best_x + step);
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = detail::fit_sills(bins, std::exp(c)).sse, fd = detail::fit_sills(bins, std::exp(d)).sse;
  for (int it = 0; it < 60; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = detail::fit_sills(bins, std::exp(c)).sse;
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = detail::fit_sills(bins, std::exp(d)).sse;
    }
  }
  const double x = fc < best_sse || fd < best_sse ? (fc < fd ? c : d) : best_x;
  const auto fit = detail::fit_sills(bins, std::exp(x));
  v.range = std::exp(x);
  v.nugget = fit.nugget;
  v.psill = fit.psill;
  double gmax = 0.0;
  for (const auto& bin : bins) gmax = std::max(gmax, bin.gamma);
  v.degenerate = v.psill <= 1e-9 * std::max(gmax, 1e-300);
  return v;
}

}  // namespace distcast::weather
