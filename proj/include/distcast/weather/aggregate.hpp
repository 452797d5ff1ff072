#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "distcast/core/errors.hpp"

namespace distcast::weather {

enum class Variable { Tmin, Tmax, Tavg, Rh, Rain };
enum class Aggregation { Mean, Sum };

inline Variable parse_variable(const std::string& s) {
  if (s == "tmin") return Variable::Tmin;
  if (s == "tmax") return Variable::Tmax;
  if (s == "tavg") return Variable::Tavg;
  if (s == "rh") return Variable::Rh;
  if (s == "rain") return Variable::Rain;
  throw InputError("unknown weather variable '" + s + "'");
}

inline std::string to_string(Variable v) {
  switch (v) {
    case Variable::Tmin: return "tmin";
    case Variable::Tmax: return "tmax";
    case Variable::Tavg: return "tavg";
    case Variable::Rh: return "rh";
    case Variable::Rain: return "rain";
  }
  return "?";
}

inline std::string unit_of(Variable v) {
  switch (v) {
    case Variable::Rh: return "%";
    case Variable::Rain: return "mm";
    default: return "degC";
  }
}

/// Temperatures and humidity average over the month; rainfall accumulates.
inline Aggregation aggregation_for(Variable v) {
  return v == Variable::Rain ? Aggregation::Sum : Aggregation::Mean;
}

inline constexpr double kMaxMissingFraction = 0.20;

struct MonthlyValue {
  double value = std::nan("");  // NaN when every day is missing
  double missing_fraction = 1.0;
  bool flagged = true;  // more than 20% of days missing
};

/// `daily` holds one entry per calendar day of the month (NaN for missing days).
inline MonthlyValue aggregate_monthly(std::span<const double> daily, Aggregation how) {
  if (daily.empty()) throw PreconditionError("aggregate_monthly needs the month's days");
  // Summing in sorted order makes the result independent of day order, bit for bit.
  std::vector<double> values;
  for (const double v : daily) {
    if (!std::isnan(v)) values.push_back(v);
  }
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (const double v : values) sum += v;
  const std::size_t valid = values.size();
  MonthlyValue m;
  m.missing_fraction = 1.0 - static_cast<double>(valid) / static_cast<double>(daily.size());
  m.flagged = m.missing_fraction > kMaxMissingFraction;
  if (valid == 0) return m;
  m.value = how == Aggregation::Sum ? sum : sum / static_cast<double>(valid);
  return m;
}

}  // namespace distcast::weather
