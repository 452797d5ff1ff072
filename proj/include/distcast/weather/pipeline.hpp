#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cstring>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "distcast/core/calendar.hpp"
#include "distcast/core/csv.hpp"
#include "distcast/core/parallel.hpp"
#include "distcast/weather/aggregate.hpp"
#include "distcast/weather/grid.hpp"
#include "distcast/weather/kriging.hpp"
#include "distcast/weather/variogram.hpp"

namespace distcast::weather {

struct DailyRecord {
  Date date;
  double tmin = std::nan(""), tmax = std::nan(""), tavg = std::nan(""), rh = std::nan(""),
         rain = std::nan("");

  double get(Variable v) const {
    switch (v) {
      case Variable::Tmin: return tmin;
      case Variable::Tmax: return tmax;
      case Variable::Tavg: return tavg;
      case Variable::Rh: return rh;
      case Variable::Rain: return rain;
    }
    return std::nan("");
  }
};

struct StationSeries {
  std::string id;
  Point at;
  std::vector<DailyRecord> days;
};

struct Centroid {
  std::string district;
  Point at;
};

inline Date next_day(const Date& d) {
  if (d.day < days_in_month(d.year, d.month)) return {d.year, d.month, d.day + 1};
  if (d.month < 12) return {d.year, d.month + 1, 1};
  return {d.year + 1, 1, 1};
}

// ---------- readers ----------

/// CSV `station,x,y,date,tmin,tmax,tavg,rh,rain`; NA marks a missing reading.
inline std::vector<StationSeries> read_stations(const std::string& path) {
  const auto csv = read_csv(path);
  csv.require({"station", "x", "y", "date", "tmin", "tmax", "tavg", "rh", "rain"});
  std::map<std::string, std::size_t> idx;
  std::vector<StationSeries> out;
  for (std::size_t r = 0; r < csv.size(); ++r) {
    const auto& id = csv.at(r, csv.column("station"));
    const Point at{parse_double(csv.at(r, csv.column("x")), csv.where(r)),
                   parse_double(csv.at(r, csv.column("y")), csv.where(r))};
    auto [it, inserted] = idx.try_emplace(id, out.size());
    if (inserted) out.push_back({id, at, {}});
    auto& s = out[it->second];
    if (s.at.x != at.x || s.at.y != at.y) throw InputError(csv.where(r) + ": station moved");
    DailyRecord d;
    d.date = Date::parse(csv.at(r, csv.column("date")));
    d.tmin = parse_double(csv.at(r, csv.column("tmin")), csv.where(r));
    d.tmax = parse_double(csv.at(r, csv.column("tmax")), csv.where(r));
    d.tavg = parse_double(csv.at(r, csv.column("tavg")), csv.where(r));
    d.rh = parse_double(csv.at(r, csv.column("rh")), csv.where(r));
    d.rain = parse_double(csv.at(r, csv.column("rain")), csv.where(r));
    const auto le = [](double a, double b) { return std::isnan(a) || std::isnan(b) || a <= b; };
    if (!le(d.tmin, d.tavg) || !le(d.tavg, d.tmax) || !le(d.tmin, d.tmax)) {
      throw InputError(csv.where(r) + ": temperatures violate tmin <= tavg <= tmax");
    }
    if (!std::isnan(d.rh) && (d.rh < 0 || d.rh > 100)) {
      throw InputError(csv.where(r) + ": humidity outside [0,100]");
    }
    if (!std::isnan(d.rain) && d.rain < 0) throw InputError(csv.where(r) + ": negative rainfall");
    s.days.push_back(d);
  }
  return out;
}

inline std::vector<Centroid> read_centroids(const std::string& path) {
  const auto csv = read_csv(path);
  csv.require({"district", "x", "y"});
  std::vector<Centroid> out;
  for (std::size_t r = 0; r < csv.size(); ++r) {
    out.push_back({csv.at(r, csv.column("district")),
                   {parse_double(csv.at(r, csv.column("x")), csv.where(r)),
                    parse_double(csv.at(r, csv.column("y")), csv.where(r))}});
  }
  return out;
}

/// CSV `date,row,col,x,y,value`; every cell must appear on every day.
inline GridField read_grid_csv(const std::string& path) {
  const auto csv = read_csv(path);
  csv.require({"date", "row", "col", "x", "y", "value"});
  std::map<std::pair<int, int>, Point> cells;
  std::set<Date> days;
  for (std::size_t r = 0; r < csv.size(); ++r) {
    const int row = static_cast<int>(parse_int(csv.at(r, csv.column("row")), csv.where(r)));
    const int col = static_cast<int>(parse_int(csv.at(r, csv.column("col")), csv.where(r)));
    cells.try_emplace({row, col}, Point{parse_double(csv.at(r, csv.column("x")), csv.where(r)),
                                        parse_double(csv.at(r, csv.column("y")), csv.where(r))});
    days.insert(Date::parse(csv.at(r, csv.column("date"))));
  }
  GridField g;
  std::map<std::pair<int, int>, std::size_t> cell_idx;
  for (const auto& [rc, p] : cells) {
    cell_idx[rc] = g.cells.size();
    g.cells.push_back({rc.first, rc.second, p});
  }
  g.days.assign(days.begin(), days.end());
  std::map<Date, std::size_t> day_idx;
  for (std::size_t k = 0; k < g.days.size(); ++k) day_idx[g.days[k]] = k;
  g.values.assign(g.days.size(), std::vector<double>(g.cells.size(), std::nan("")));
  std::vector<std::vector<char>> seen(g.days.size(), std::vector<char>(g.cells.size(), 0));
  for (std::size_t r = 0; r < csv.size(); ++r) {
    const auto d = day_idx.at(Date::parse(csv.at(r, csv.column("date"))));
    const auto c = cell_idx.at({static_cast<int>(parse_int(csv.at(r, csv.column("row")))),
                                static_cast<int>(parse_int(csv.at(r, csv.column("col"))))});
    if (seen[d][c]) throw InputError(csv.where(r) + ": duplicate grid cell");
    seen[d][c] = 1;
    g.values[d][c] = parse_double(csv.at(r, csv.column("value")), csv.where(r));
  }
  for (const auto& row : seen) {
    if (std::find(row.begin(), row.end(), 0) != row.end()) {
      throw InputError(path + ": grid is not complete on every day");
    }
  }
  return g;
}

/// Dense layout: little-endian doubles ordered [day][row][col], described by `<path>.json`
/// with keys rows, cols, days, start_date (YYYY-MM-DD), x0, y0 (centre of cell 0,0), cell_size.
inline GridField read_grid_binary(const std::string& path) {
  static_assert(std::endian::native == std::endian::little, "binary grids assume little-endian");
  const auto meta = nlohmann::json::parse(read_file(path + ".json"));
  const int rows = meta.at("rows"), cols = meta.at("cols"), n_days = meta.at("days");
  const double x0 = meta.at("x0"), y0 = meta.at("y0"), cs = meta.at("cell_size");
  GridField g;
  g.cell_size = cs;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) g.cells.push_back({r, c, {x0 + c * cs, y0 + r * cs}});
  }
  Date d = Date::parse(meta.at("start_date").get<std::string>());
  const std::string raw = read_file(path);
  const auto per_day = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  if (raw.size() != per_day * static_cast<std::size_t>(n_days) * sizeof(double)) {
    throw InputError(path + ": size does not match its sidecar dimensions");
  }
  for (int k = 0; k < n_days; ++k) {
    g.days.push_back(d);
    d = next_day(d);
    std::vector<double> v(per_day);
    std::memcpy(v.data(), raw.data() + k * per_day * sizeof(double), per_day * sizeof(double));
    g.values.push_back(std::move(v));
  }
  return g;
}

inline void write_stations_csv(const std::vector<StationSeries>& stations, const std::string& path) {
  CsvWriter w(path, {"station", "x", "y", "date", "tmin", "tmax", "tavg", "rh", "rain"});
  for (const auto& s : stations) {
    for (const auto& d : s.days) {
      w.row({s.id, format_double(s.at.x), format_double(s.at.y), d.date.to_string(), format_double(d.tmin),
             format_double(d.tmax), format_double(d.tavg), format_double(d.rh), format_double(d.rain)});
    }
  }
  w.close();
}

inline void write_centroids_csv(const std::vector<Centroid>& centroids, const std::string& path) {
  CsvWriter w(path, {"district", "x", "y"});
  for (const auto& c : centroids) w.row({c.district, format_double(c.at.x), format_double(c.at.y)});
  w.close();
}

inline void write_grid_csv(const GridField& g, const std::string& path) {
  CsvWriter w(path, {"date", "row", "col", "x", "y", "value"});
  for (std::size_t k = 0; k < g.days.size(); ++k) {
    for (std::size_t c = 0; c < g.cells.size(); ++c) {
      const auto& cell = g.cells[c];
      w.row({g.days[k].to_string(), std::to_string(cell.row), std::to_string(cell.col), format_double(cell.centre.x),
             format_double(cell.centre.y), format_double(g.values[k][c])});
    }
  }
  w.close();
}

inline void write_grid_binary(const GridField& g, int rows, int cols, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  for (const auto& day : g.values) {
    out.write(reinterpret_cast<const char*>(day.data()),
              static_cast<std::streamsize>(day.size() * sizeof(double)));
  }
  nlohmann::json meta{{"rows", rows},
                      {"cols", cols},
                      {"days", g.days.size()},
                      {"start_date", g.days.front().to_string()},
                      {"x0", g.cells.front().centre.x},
                      {"y0", g.cells.front().centre.y},
                      {"cell_size", g.cell_size}};
  std::ofstream(path + ".json") << meta.dump(2) << "\n";
}

// ---------- district series ----------

struct DistrictMonthly {
  std::string variable;
  std::string unit;
  std::vector<std::string> districts;
  std::vector<YearMonth> months;
  Eigen::MatrixXd values;  // district x month
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> flagged;
};

struct IngestDiagnostics {
  std::size_t days = 0;
  std::size_t days_interpolated = 0;
  std::size_t days_skipped = 0;  // fewer than 4 reporting stations
  std::size_t degenerate_variograms = 0;
  std::size_t negative_weight_solves = 0;
  std::size_t regularized_solves = 0;
  std::size_t flagged_months = 0;
};

namespace detail {

/// Daily district values (day x district) to calendar months.
inline DistrictMonthly to_monthly(const std::vector<Date>& days, const Eigen::MatrixXd& daily,
                                  const std::vector<Centroid>& centroids, Variable var,
                                  IngestDiagnostics& diag) {
  DistrictMonthly m;
  m.variable = to_string(var);
  m.unit = unit_of(var);
  for (const auto& c : centroids) m.districts.push_back(c.district);
  const YearMonth first = days.front().year_month(), last = days.back().year_month();
  const int M = months_between(first, last) + 1;
  for (int k = 0; k < M; ++k) m.months.push_back(first.plus(k));
  const auto n = static_cast<Eigen::Index>(centroids.size());
  m.values = Eigen::MatrixXd::Constant(n, M, std::nan(""));
  m.flagged.setConstant(n, M, true);
  std::map<Date, std::size_t> day_idx;
  for (std::size_t k = 0; k < days.size(); ++k) day_idx[days[k]] = k;
  for (int k = 0; k < M; ++k) {
    const auto ym = m.months[static_cast<std::size_t>(k)];
    const int nd = days_in_month(ym.year, ym.month);
    for (Eigen::Index i = 0; i < n; ++i) {
      std::vector<double> month_days(static_cast<std::size_t>(nd), std::nan(""));
      for (int d = 1; d <= nd; ++d) {
        const auto it = day_idx.find(Date{ym.year, ym.month, d});
        if (it != day_idx.end()) month_days[d - 1] = daily(static_cast<Eigen::Index>(it->second), i);
      }
      const auto mv = aggregate_monthly(month_days, aggregation_for(var));
      m.values(i, k) = mv.value;
      m.flagged(i, k) = mv.flagged;
      diag.flagged_months += mv.flagged;
    }
  }
  return m;
}

}  // namespace detail

/// Kriges each day's station readings to the district centroids, then aggregates by month.
inline DistrictMonthly ingest_stations(const std::vector<StationSeries>& stations,
                                       const std::vector<Centroid>& centroids, Variable var,
                                       unsigned jobs, IngestDiagnostics& diag) {
  if (stations.empty()) throw InputError("no weather stations");
  if (centroids.empty()) throw InputError("no district centroids");
  std::set<Date> all_days;
  for (const auto& s : stations) {
    for (const auto& d : s.days) all_days.insert(d.date);
  }
  std::vector<Date> days;
  for (Date d = *all_days.begin(); d <= *all_days.rbegin(); d = next_day(d)) days.push_back(d);
  std::map<Date, std::size_t> day_idx;
  for (std::size_t k = 0; k < days.size(); ++k) day_idx[days[k]] = k;
  std::vector<std::vector<Observation>> per_day(days.size());
  for (const auto& s : stations) {
    for (const auto& d : s.days) {
      const double v = d.get(var);
      if (!std::isnan(v)) per_day[day_idx.at(d.date)].push_back({s.at, v});
    }
  }
  const auto n = static_cast<Eigen::Index>(centroids.size());
  Eigen::MatrixXd daily = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(days.size()), n, std::nan(""));
  struct DayFlags {
    bool done = false, degenerate = false;
    int negative = 0, regularized = 0;
  };
  std::vector<DayFlags> flags(days.size());
  parallel_for(days.size(), jobs, [&](std::size_t k) {
    const auto& obs = per_day[k];
    if (static_cast<int>(obs.size()) < kMinVariogramStations) return;
    const auto v = fit_variogram(obs);
    flags[k].done = true;
    flags[k].degenerate = v.degenerate;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto r = krige_point(obs, v, centroids[static_cast<std::size_t>(i)].at);
      daily(static_cast<Eigen::Index>(k), i) = r.estimate;
      flags[k].negative += r.negative_weights;
      flags[k].regularized += r.regularized;
    }
  });
  diag.days += days.size();
  for (const auto& f : flags) {
    diag.days_interpolated += f.done;
    diag.days_skipped += !f.done;
    diag.degenerate_variograms += f.degenerate;
    diag.negative_weight_solves += static_cast<std::size_t>(f.negative);
    diag.regularized_solves += static_cast<std::size_t>(f.regularized);
  }
  return detail::to_monthly(days, daily, centroids, var, diag);
}

/// Assigns each district the value of its nearest grid cell, then aggregates by month.
inline DistrictMonthly ingest_grid(const GridField& grid, const std::vector<Centroid>& centroids,
                                   Variable var, IngestDiagnostics& diag) {
  if (grid.empty() || grid.days.empty()) throw InputError("empty weather grid");
  if (centroids.empty()) throw InputError("no district centroids");
  const auto n = static_cast<Eigen::Index>(centroids.size());
  std::vector<std::size_t> cell(centroids.size());
  for (std::size_t i = 0; i < centroids.size(); ++i) cell[i] = nearest_cell_index(grid, centroids[i].at);
  Eigen::MatrixXd daily(static_cast<Eigen::Index>(grid.days.size()), n);
  for (std::size_t k = 0; k < grid.days.size(); ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      daily(static_cast<Eigen::Index>(k), i) = grid.values[k][cell[static_cast<std::size_t>(i)]];
    }
  }
  diag.days += grid.days.size();
  diag.days_interpolated += grid.days.size();
  return detail::to_monthly(grid.days, daily, centroids, var, diag);
}

inline void write_district_monthly(const DistrictMonthly& m, const std::string& path) {
  CsvWriter w(path, {"district", "year", "month", m.variable});
  for (std::size_t i = 0; i < m.districts.size(); ++i) {
    for (std::size_t k = 0; k < m.months.size(); ++k) {
      w.row({m.districts[i], std::to_string(m.months[k].year), std::to_string(m.months[k].month),
             format_double(m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)))});
    }
  }
  w.close();
}

}  // namespace distcast::weather
