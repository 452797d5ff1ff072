#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "distcast/core/calendar.hpp"
#include "distcast/core/csv.hpp"
#include "distcast/core/errors.hpp"

namespace distcast {

namespace detail {

template <typename T>
std::vector<double> sorted_copy(std::span<const T> samples) {
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  return x;
}

/// sum_{i,j} |x_i - x_j| for ascending x, in O(n).
inline double pairwise_abs_sum(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (2.0 * static_cast<double>(i) - n + 1.0) * x[i];
  return 2.0 * s;
}

}  // namespace detail

/// Energy-form CRPS of the empirical forecast distribution: E|X-y| - E|X-X'|/2.
template <typename T>
double crps(std::span<const T> samples, double observed) {
  if (samples.empty()) throw PreconditionError("crps needs at least one sample");
  const auto x = detail::sorted_copy(samples);
  const double n = static_cast<double>(x.size());
  double abs_err = 0.0;
  for (const double v : x) abs_err += std::abs(v - observed);
  return std::max(0.0, abs_err / n - 0.5 * detail::pairwise_abs_sum(x) / (n * n));
}

template <typename T>
double crps(const std::vector<T>& samples, double observed) {
  return crps(std::span<const T>(samples), observed);
}

/// 1 - 2 F(y), F counting samples below y plus half of those equal to y.
template <typename T>
double bias(std::span<const T> samples, double observed) {
  if (samples.empty()) throw PreconditionError("bias needs at least one sample");
  double below = 0.0, equal = 0.0;
  for (const auto v : samples) {
    const double x = static_cast<double>(v);
    below += x < observed;
    equal += x == observed;
  }
  return 1.0 - 2.0 * (below + 0.5 * equal) / static_cast<double>(samples.size());
}

template <typename T>
double bias(const std::vector<T>& samples, double observed) {
  return bias(std::span<const T>(samples), observed);
}

/// E|X-X'| / (1 + E X), with E|X-X'| averaged over all n^2 ordered pairs.
template <typename T>
double diffuseness(std::span<const T> samples) {
  if (samples.size() < 2) throw PreconditionError("diffuseness needs at least two samples");
  const auto x = detail::sorted_copy(samples);
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (const double v : x) mean += v;
  mean /= n;
  return detail::pairwise_abs_sum(x) / (n * n) / (1.0 + mean);
}

template <typename T>
double diffuseness(const std::vector<T>& samples) {
  return diffuseness(std::span<const T>(samples));
}

/// 1 - model/reference; undefined when the reference CRPS is not positive.
inline std::optional<double> crpss(double model_crps, double reference_crps) {
  if (!(reference_crps > 0.0)) return std::nullopt;
  return 1.0 - model_crps / reference_crps;
}

/// Probability/outcome pair; an empty outcome marks an undefined label.
struct ProbabilityOutcome {
  double probability;
  std::optional<bool> outcome;
};

struct BrierResult {
  std::optional<double> score;  // empty when no defined outcomes
  std::size_t used = 0;
  std::size_t dropped = 0;
};

inline BrierResult brier(std::span<const double> p, std::span<const std::optional<bool>> o) {
  if (p.size() != o.size()) throw PreconditionError("brier: length mismatch");
  BrierResult r;
  double sum = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!o[k].has_value() || std::isnan(p[k])) {
      ++r.dropped;
      continue;
    }
    if (p[k] < 0.0 || p[k] > 1.0) throw PreconditionError("brier: probability outside [0,1]");
    const double d = p[k] - (*o[k] ? 1.0 : 0.0);
    sum += d * d;
    ++r.used;
  }
  if (r.used > 0) r.score = sum / static_cast<double>(r.used);
  return r;
}

inline BrierResult brier(const std::vector<double>& p, const std::vector<std::optional<bool>>& o) {
  return brier(std::span<const double>(p), std::span<const std::optional<bool>>(o));
}

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  std::optional<double> mean_predicted;
  std::optional<double> observed_frequency;
};

/// Ten bins [0,0.1), ..., [0.8,0.9), [0.9,1].
inline std::vector<CalibrationBin> calibration_bins(std::span<const double> p,
                                                    std::span<const std::optional<bool>> o) {
  if (p.size() != o.size()) throw PreconditionError("calibration: length mismatch");
  std::vector<CalibrationBin> bins(10);
  std::vector<double> psum(10, 0.0), osum(10, 0.0);
  for (int b = 0; b < 10; ++b) {
    bins[b].lower = b / 10.0;
    bins[b].upper = (b + 1) / 10.0;
  }
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!o[k].has_value() || std::isnan(p[k])) continue;
    if (p[k] < 0.0 || p[k] > 1.0) throw PreconditionError("calibration: probability outside [0,1]");
    // Integer comparison avoids 0.3*10 style rounding at bin edges.
    int b = 0;
    while (b < 9 && p[k] >= bins[b + 1].lower) ++b;
    ++bins[b].count;
    psum[b] += p[k];
    osum[b] += *o[k] ? 1.0 : 0.0;
  }
  for (int b = 0; b < 10; ++b) {
    if (bins[b].count == 0) continue;
    bins[b].mean_predicted = psum[b] / static_cast<double>(bins[b].count);
    bins[b].observed_frequency = osum[b] / static_cast<double>(bins[b].count);
  }
  return bins;
}

inline std::vector<CalibrationBin> calibration_bins(const std::vector<double>& p,
                                                    const std::vector<std::optional<bool>>& o) {
  return calibration_bins(std::span<const double>(p), std::span<const std::optional<bool>>(o));
}

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t dropped = 0;
};

struct ClassificationMetrics {
  std::optional<double> accuracy, sensitivity, specificity, ppv;
};

inline std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

inline ClassificationMetrics classification_metrics(const Confusion& c) {
  return {ratio(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn), ratio(c.tp, c.tp + c.fn),
          ratio(c.tn, c.tn + c.fp), ratio(c.tp, c.tp + c.fp)};
}

inline Confusion confusion(std::span<const bool> predicted, std::span<const std::optional<bool>> observed) {
  if (predicted.size() != observed.size()) throw PreconditionError("confusion: length mismatch");
  Confusion c;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    if (!observed[k]) {
      ++c.dropped;
      continue;
    }
    const bool o = *observed[k];
    if (predicted[k]) {
      (o ? c.tp : c.fp)++;
    } else {
      (o ? c.fn : c.tn)++;
    }
  }
  return c;
}

/// Thresholds outbreak probabilities at `cutoff` (probability >= cutoff predicts an outbreak).
inline Confusion confusion_from_probabilities(std::span<const double> p,
                                              std::span<const std::optional<bool>> observed,
                                              double cutoff = 0.5) {
  if (p.size() != observed.size()) throw PreconditionError("confusion: length mismatch");
  Confusion c;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!observed[k] || std::isnan(p[k])) {
      ++c.dropped;
      continue;
    }
    const bool o = *observed[k];
    if (p[k] >= cutoff) {
      (o ? c.tp : c.fp)++;
    } else {
      (o ? c.fn : c.tn)++;
    }
  }
  return c;
}

struct ScoreRow {
  std::string district;
  YearMonth origin;
  int horizon = 1;
  std::string metric;
  double value = 0.0;

  YearMonth target() const { return origin.plus(horizon); }
};

enum class Grouping { District, Month, Horizon, Overall };

inline Grouping parse_grouping(const std::string& s) {
  if (s == "district") return Grouping::District;
  if (s == "month") return Grouping::Month;
  if (s == "horizon") return Grouping::Horizon;
  if (s == "overall") return Grouping::Overall;
  throw InputError("unknown grouping '" + s + "'");
}

struct AggregateRow {
  std::string group;  // district id, target "YYYY-MM", horizon, or "all"
  std::string metric;
  double value = 0.0;
  std::size_t count = 0;
};

/// Arithmetic mean per (group, metric). "month" groups by target month; NaN values are skipped.
inline std::vector<AggregateRow> aggregate(const std::vector<ScoreRow>& rows, Grouping by) {
  if (rows.empty()) throw PreconditionError("aggregate of an empty score table");
  std::map<std::tuple<std::string, std::string>, std::pair<double, std::size_t>> acc;
  std::vector<std::tuple<std::string, std::string>> order;
  for (const auto& r : rows) {
    if (std::isnan(r.value)) continue;
    std::string g;
    switch (by) {
      case Grouping::District: g = r.district; break;
      case Grouping::Month: g = r.target().to_string(); break;
      case Grouping::Horizon: g = std::to_string(r.horizon); break;
      case Grouping::Overall: g = "all"; break;
    }
    auto key = std::make_tuple(g, r.metric);
    auto [it, inserted] = acc.try_emplace(key, 0.0, 0);
    if (inserted) order.push_back(key);
    it->second.first += r.value;
    ++it->second.second;
  }
  std::vector<AggregateRow> out;
  for (const auto& key : order) {
    const auto& [sum, count] = acc.at(key);
    out.push_back({std::get<0>(key), std::get<1>(key), sum / static_cast<double>(count), count});
  }
  return out;
}

inline double mean_metric(const std::vector<ScoreRow>& rows, const std::string& metric) {
  double s = 0.0;
  std::size_t k = 0;
  for (const auto& r : rows) {
    if (r.metric == metric && !std::isnan(r.value)) {
      s += r.value;
      ++k;
    }
  }
  return k ? s / static_cast<double>(k) : std::nan("");
}

inline const std::vector<std::string>& score_csv_header() {
  static const std::vector<std::string> h{"district", "origin_year", "origin_month",
                                          "horizon",  "metric",      "value"};
  return h;
}

inline void write_scores_csv(const std::vector<ScoreRow>& rows, const std::string& path) {
  CsvWriter w(path, score_csv_header());
  for (const auto& r : rows) {
    w.row({r.district, std::to_string(r.origin.year), std::to_string(r.origin.month),
           std::to_string(r.horizon), r.metric, format_double(r.value)});
  }
  w.close();
}

inline std::vector<ScoreRow> read_scores_csv(const std::string& path) {
  const auto csv = read_csv(path);
  csv.require({"district", "origin_year", "origin_month", "horizon", "metric", "value"});
  std::vector<ScoreRow> rows;
  for (std::size_t r = 0; r < csv.size(); ++r) {
    ScoreRow s;
    s.district = csv.at(r, csv.column("district"));
    s.origin = {static_cast<int>(parse_int(csv.at(r, csv.column("origin_year")), csv.where(r))),
                static_cast<int>(parse_int(csv.at(r, csv.column("origin_month")), csv.where(r)))};
    s.horizon = static_cast<int>(parse_int(csv.at(r, csv.column("horizon")), csv.where(r)));
    s.metric = csv.at(r, csv.column("metric"));
    s.value = parse_double(csv.at(r, csv.column("value")), csv.where(r));
    rows.push_back(std::move(s));
  }
  return rows;
}

}  // namespace distcast
