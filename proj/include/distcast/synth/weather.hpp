#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "distcast/core/calendar.hpp"
#include "distcast/core/errors.hpp"
#include "distcast/core/random.hpp"
#include "distcast/weather/pipeline.hpp"

namespace distcast::synth {

/// Daily station readings, district centroids and gridded fields drawn from one smooth
/// synthetic weather field, for exercising both ingestion paths.
struct WeatherFixture {
  std::vector<weather::StationSeries> stations;
  std::vector<weather::Centroid> centroids;
  std::map<std::string, weather::GridField> grids;  // by variable name
};

struct WeatherOptions {
  int stations = 12;
  Date start{2004, 1, 1};
  int months = 12;
  double district_km = 10.0;  // lattice spacing of the centroids
  double cell_km = 5.0;       // grid resolution
  double missing = 0.02;      // fraction of station readings left out
  std::vector<std::string> grid_variables{"tmin", "rain"};
};

/// Districts sit on a rows x cols lattice (row-major, matching `lattice`).
inline WeatherFixture weather_fixture(const std::vector<std::string>& districts, int rows, int cols,
                                      const WeatherOptions& o, std::uint64_t seed) {
  if (static_cast<int>(districts.size()) != rows * cols) throw PreconditionError("centroid lattice shape mismatch");
  if (o.stations < 4) throw PreconditionError("the weather fixture needs at least 4 stations");
  auto rng = make_rng(seed, {0x77656174});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double width = cols * o.district_km, height = rows * o.district_km;
  WeatherFixture fx;
  for (int k = 0; k < rows * cols; ++k) {
    fx.centroids.push_back({districts[static_cast<std::size_t>(k)],
                            {(k % cols + 0.5) * o.district_km, (k / cols + 0.5) * o.district_km}});
  }
  for (int s = 0; s < o.stations; ++s) {
    char id[16];
    std::snprintf(id, sizeof id, "S%02d", s + 1);
    const double x = std::round(unit(rng) * width * 100.0) / 100.0, y = std::round(unit(rng) * height * 100.0) / 100.0;
    fx.stations.push_back({id, {x, y}, {}});
  }
  const int grows = std::max(1, static_cast<int>(std::ceil(height / o.cell_km)));
  const int gcols = std::max(1, static_cast<int>(std::ceil(width / o.cell_km)));
  for (const auto& v : o.grid_variables) {
    weather::parse_variable(v);
    auto& g = fx.grids[v];
    g.cell_size = o.cell_km;
    for (int r = 0; r < grows; ++r) {
      for (int c = 0; c < gcols; ++c) g.cells.push_back({r, c, {(c + 0.5) * o.cell_km, (r + 0.5) * o.cell_km}});
    }
  }

  // Smooth field: seasonal cycle + linear gradient + a day-level anomaly shared by all sites,
  // plus a slowly moving rain band.
  double anomaly = 0.0;
  const YearMonth last = o.start.year_month().plus(o.months - 1);
  for (Date d = o.start; d.year_month() <= last; d = weather::next_day(d)) {
    anomaly = 0.7 * anomaly + draw_normal(rng, 0.0, 0.8);
    const double season = 2.0 * std::sin(2 * M_PI * (d.month - 2) / 12.0);
    const bool wet_day = unit(rng) < 0.35 + 0.25 * std::sin(2 * M_PI * (d.month - 5) / 12.0);
    const double band_x = unit(rng) * width, band_amount = wet_day ? -std::log(1.0 - unit(rng)) * 12.0 : 0.0;
    auto tmin_at = [&](const weather::Point& p) { return 22.5 + season + anomaly + 0.04 * p.x - 0.03 * p.y; };
    auto rain_at = [&](const weather::Point& p) {
      const double dx = (p.x - band_x) / (0.6 * width + 1.0);
      return band_amount * std::exp(-dx * dx);
    };
    for (auto& st : fx.stations) {
      weather::DailyRecord r;
      r.date = d;
      const auto tenth = [](double v) { return std::round(v * 10.0) / 10.0; };
      r.tmin = tenth(tmin_at(st.at) + draw_normal(rng, 0.0, 0.3));
      r.tmax = tenth(r.tmin + 8.0 + std::abs(draw_normal(rng, 0.0, 1.0)));
      r.tavg = tenth(0.5 * (r.tmin + r.tmax));
      r.rh = tenth(std::clamp(78.0 + 2.0 * rain_at(st.at) + draw_normal(rng, 0.0, 4.0), 0.0, 100.0));
      r.rain = std::max(0.0, rain_at(st.at) + (wet_day ? draw_normal(rng, 0.0, 0.5) : 0.0));
      r.rain = std::round(r.rain * 10.0) / 10.0;
      if (unit(rng) < o.missing) r.tmin = r.tmax = r.tavg = std::nan("");
      if (unit(rng) < o.missing) r.rain = std::nan("");
      st.days.push_back(r);
    }
    for (auto& [name, g] : fx.grids) {
      const auto var = weather::parse_variable(name);
      std::vector<double> values;
      for (const auto& cell : g.cells) {
        const double tmin = tmin_at(cell.centre);
        double v = 0.0;
        switch (var) {
          case weather::Variable::Tmin: v = tmin; break;
          case weather::Variable::Tmax: v = tmin + 8.8; break;
          case weather::Variable::Tavg: v = tmin + 4.4; break;
          case weather::Variable::Rh: v = std::clamp(78.0 + 2.0 * rain_at(cell.centre), 0.0, 100.0); break;
          case weather::Variable::Rain: v = std::round(rain_at(cell.centre) * 10.0) / 10.0; break;
        }
        values.push_back(std::round(v * 100.0) / 100.0);
      }
      g.days.push_back(d);
      g.values.push_back(std::move(values));
    }
  }
  return fx;
}

}  // namespace distcast::synth
