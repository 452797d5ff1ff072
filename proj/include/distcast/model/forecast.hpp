#pragma once

#include <cmath>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"

#include "distcast/core/calendar.hpp"
#include "distcast/core/csv.hpp"
#include "distcast/core/errors.hpp"
#include "distcast/core/text.hpp"

namespace distcast {

inline constexpr std::size_t kMinScoringSamples = 1000;

/// Predictive samples of the case count for one (district, origin, horizon).
struct ForecastDistribution {
  std::string district;
  YearMonth origin;
  int horizon = 1;
  std::vector<double> samples;  // non-negative integer counts

  YearMonth target() const { return origin.plus(horizon); }
  std::size_t size() const { return samples.size(); }

  /// Throws unless the distribution is usable for scoring.
  void require_scorable() const {
    if (samples.size() < kMinScoringSamples) {
      throw PreconditionError("forecast for " + district + " " + origin.to_string() + " h" +
                              std::to_string(horizon) + " has " + std::to_string(samples.size()) +
                              " samples; scoring needs at least " + std::to_string(kMinScoringSamples));
    }
    for (const double v : samples) {
      if (!std::isfinite(v) || v < 0.0) {
        throw PreconditionError("forecast for " + district + " has a non-finite or negative sample");
      }
    }
  }
};

using ForecastKey = std::tuple<std::string, int, int>;  // district, origin index, horizon

inline ForecastKey key_of(const ForecastDistribution& f) {
  return {f.district, f.origin.index(), f.horizon};
}

inline const std::vector<std::string>& forecast_csv_header() {
  static const std::vector<std::string> h{"district", "origin_year", "origin_month", "horizon",
                                          "sample_index", "value"};
  return h;
}

inline void write_forecasts_csv(const std::string& path, const std::vector<ForecastDistribution>& fs) {
  CsvWriter w(path, forecast_csv_header());
  for (const auto& f : fs) {
    for (std::size_t s = 0; s < f.samples.size(); ++s) {
      w.row({f.district, std::to_string(f.origin.year), std::to_string(f.origin.month),
             std::to_string(f.horizon), std::to_string(s), format_double(f.samples[s])});
    }
  }
  w.close();
}

/// Rows are grouped by (district, origin, horizon) in first-seen order; sample indices must run 0..n-1.
inline std::vector<ForecastDistribution> read_forecasts_csv(const std::string& path) {
  const auto table = read_csv(path);
  table.require({"district", "origin_year", "origin_month", "horizon", "sample_index", "value"});
  const auto cd = table.column("district"), cy = table.column("origin_year"),
            cm = table.column("origin_month"), ch = table.column("horizon"),
            cs = table.column("sample_index"), cv = table.column("value");
  std::vector<ForecastDistribution> out;
  std::map<ForecastKey, std::size_t> slot;
  for (std::size_t r = 0; r < table.size(); ++r) {
    ForecastDistribution probe;
    probe.district = table.at(r, cd);
    probe.origin = YearMonth{static_cast<int>(parse_int(table.at(r, cy), table.where(r))),
                             static_cast<int>(parse_int(table.at(r, cm), table.where(r)))};
    if (!probe.origin.valid()) throw InputError("invalid origin month at " + table.where(r));
    probe.horizon = static_cast<int>(parse_int(table.at(r, ch), table.where(r)));
    const auto key = key_of(probe);
    auto it = slot.find(key);
    if (it == slot.end()) {
      it = slot.emplace(key, out.size()).first;
      out.push_back(std::move(probe));
    }
    auto& f = out[it->second];
    const auto idx = parse_int(table.at(r, cs), table.where(r));
    if (idx != static_cast<long long>(f.samples.size())) {
      throw InputError("non-contiguous sample_index at " + table.where(r));
    }
    const double v = parse_double(table.at(r, cv), table.where(r));
    if (!std::isfinite(v) || v < 0.0) throw InputError("invalid sample value at " + table.where(r));
    f.samples.push_back(v);
  }
  return out;
}

/// Dense binary layout: for each unit in sidecar order, `samples` little-endian doubles.
/// The sidecar `<path>.json` lists the units and the per-unit sample count. Units are
/// appended one at a time so a long run never holds all of them in memory.
class BinaryForecastWriter {
 public:
  explicit BinaryForecastWriter(std::string path) : path_(std::move(path)), out_(path_, std::ios::binary) {
    static_assert(std::endian::native == std::endian::little, "binary forecasts assume little-endian");
    if (!out_) throw InputError("cannot write " + path_);
    units_ = nlohmann::json::array();
  }

  void add(const ForecastDistribution& f) {
    if (units_.empty()) {
      samples_ = f.samples.size();
    } else if (f.samples.size() != samples_) {
      throw PreconditionError("binary forecasts need equal sample counts");
    }
    units_.push_back({{"district", f.district}, {"origin", f.origin.to_string()}, {"horizon", f.horizon}});
    out_.write(reinterpret_cast<const char*>(f.samples.data()),
               static_cast<std::streamsize>(samples_ * sizeof(double)));
  }

  void close() {
    out_.close();
    if (!out_) throw InputError("failed writing " + path_);
    nlohmann::json side;
    side["format"] = "distcast-forecast-binary";
    side["version"] = 1;
    side["dtype"] = "float64-le";
    side["samples"] = samples_;
    side["units"] = units_;
    std::ofstream js(path_ + ".json");
    if (!js) throw InputError("cannot write " + path_ + ".json");
    js << side.dump(2) << '\n';
  }

 private:
  std::string path_;
  std::ofstream out_;
  nlohmann::json units_;
  std::size_t samples_ = 0;
};

inline void write_forecasts_binary(const std::string& path, const std::vector<ForecastDistribution>& fs) {
  BinaryForecastWriter w(path);
  for (const auto& f : fs) w.add(f);
  w.close();
}

inline std::vector<ForecastDistribution> read_forecasts_binary(const std::string& path) {
  static_assert(std::endian::native == std::endian::little, "binary forecasts assume little-endian");
  std::ifstream js(path + ".json");
  if (!js) throw MissingArtifactError("missing sidecar " + path + ".json");
  nlohmann::json side;
  try {
    js >> side;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ".json: " + e.what());
  }
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw MissingArtifactError("missing forecast file " + path);
  const std::string raw = read_file(path);
  const auto n = side.at("samples").get<std::size_t>();
  if (raw.size() != side.at("units").size() * n * sizeof(double)) {
    throw InputError(path + ": size does not match its sidecar");
  }
  std::size_t pos = 0;
  std::vector<ForecastDistribution> out;
  for (const auto& u : side.at("units")) {
    ForecastDistribution f;
    f.district = u.at("district").get<std::string>();
    f.origin = YearMonth::parse(u.at("origin").get<std::string>());
    f.horizon = u.at("horizon").get<int>();
    f.samples.resize(n);
    std::memcpy(f.samples.data(), raw.data() + pos, n * sizeof(double));
    pos += n * sizeof(double);
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace distcast
