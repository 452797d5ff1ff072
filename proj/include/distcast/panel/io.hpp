#pragma once

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "distcast/core/csv.hpp"
#include "distcast/core/text.hpp"
#include "distcast/panel/panel.hpp"

namespace distcast {

/// Reads `district_a,district_b` lines. Blank lines, '#' comments and a header line are skipped.
inline std::vector<std::pair<std::string, std::string>> read_edge_list(const std::string& path) {
  const std::string text = read_file(path);
  std::vector<std::pair<std::string, std::string>> edges;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split(line, ',');
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      throw InputError(path + " line " + std::to_string(line_no) + ": expected 'a,b'");
    }
    if (line_no == 1 && fields[0] == "district_a" && fields[1] == "district_b") continue;
    edges.emplace_back(fields[0], fields[1]);
  }
  return edges;
}

namespace detail {

struct LongKey {
  std::string district;
  YearMonth month;
};

inline LongKey long_key(const CsvTable& csv, std::size_t r) {
  const auto& d = csv.at(r, csv.column("district"));
  const auto year = parse_int(csv.at(r, csv.column("year")), csv.where(r));
  const auto month = parse_int(csv.at(r, csv.column("month")), csv.where(r));
  if (d.empty()) throw InputError(csv.where(r) + ": empty district");
  if (month < 1 || month > 12) throw InputError(csv.where(r) + ": month outside 1-12");
  return {d, YearMonth{static_cast<int>(year), static_cast<int>(month)}};
}

}  // namespace detail

/// Builds a panel from the long case table plus an edge list. Districts keep first-seen order.
/// Population is read per (district, year) from the earliest month listed in that year.
inline PanelDataset panel_from_tables(const CsvTable& csv,
                                      const std::vector<std::pair<std::string, std::string>>& edges) {
  csv.require({"district", "year", "month", "cases", "population"});
  if (csv.size() == 0) throw InputError(csv.source() + ": no rows");
  PanelDataset p;
  std::map<std::string, int> idx;
  YearMonth lo{9999, 12}, hi{0, 1};
  for (std::size_t r = 0; r < csv.size(); ++r) {
    const auto key = detail::long_key(csv, r);
    if (idx.emplace(key.district, static_cast<int>(p.districts.size())).second) {
      p.districts.push_back(key.district);
    }
    lo = std::min(lo, key.month);
    hi = std::max(hi, key.month);
  }
  const int T = months_between(lo, hi) + 1;
  for (int t = 0; t < T; ++t) p.months.push_back(lo.plus(t));
  const int n = p.n();
  p.cases = Eigen::MatrixXd::Constant(n, T, std::nan(""));
  Eigen::MatrixXd pop_raw = Eigen::MatrixXd::Constant(n, T, std::nan(""));
  for (std::size_t r = 0; r < csv.size(); ++r) {
    const auto key = detail::long_key(csv, r);
    const int i = idx.at(key.district);
    const int t = months_between(lo, key.month);
    if (!std::isnan(p.cases(i, t))) {
      throw InputError(csv.where(r) + ": duplicate row for " + key.district + " " +
                       key.month.to_string());
    }
    const double y = parse_double(csv.at(r, csv.column("cases")), csv.where(r));
    if (std::isnan(y)) throw InputError(csv.where(r) + ": missing case count");
    p.cases(i, t) = y;
    pop_raw(i, t) = parse_double(csv.at(r, csv.column("population")), csv.where(r));
  }
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < T; ++t) {
      if (std::isnan(p.cases(i, t))) {
        throw InputError(csv.source() + ": no row for " + p.districts[i] + " " +
                         p.months[t].to_string() + " (months must be contiguous)");
      }
    }
  }
  // Step-function broadcast of yearly population.
  p.population.resize(n, T);
  for (int i = 0; i < n; ++i) {
    int t = 0;
    while (t < T) {
      const int year = p.months[t].year;
      int end = t;
      double value = std::nan("");
      while (end < T && p.months[end].year == year) {
        if (std::isnan(value) && !std::isnan(pop_raw(i, end))) value = pop_raw(i, end);
        ++end;
      }
      for (int s = t; s < end; ++s) p.population(i, s) = value;
      t = end;
    }
  }
  p.adjacency = AdjacencyGraph::from_edges(p.districts, edges);
  return p;
}

/// Adds a covariate from `district,year,month,<name>`; cells outside the file stay missing.
inline void add_covariate(PanelDataset& p, const CsvTable& csv, const std::string& name,
                          const std::string& unit = {}) {
  csv.require({"district", "year", "month"});
  const auto col = csv.column(name);
  Covariate cov{Eigen::MatrixXd::Constant(p.n(), p.T(), std::nan("")), unit};
  for (std::size_t r = 0; r < csv.size(); ++r) {
    const auto key = detail::long_key(csv, r);
    const auto it = std::find(p.districts.begin(), p.districts.end(), key.district);
    if (it == p.districts.end()) {
      throw InputError(csv.where(r) + ": unknown district '" + key.district + "'");
    }
    const int t = months_between(p.months.front(), key.month);
    if (t < 0 || t >= p.T()) continue;
    cov.values(it - p.districts.begin(), t) = parse_double(csv.at(r, col), csv.where(r));
  }
  p.covariates[name] = std::move(cov);
}

/// Covariate files hold exactly one value column; its header names the covariate.
inline std::string covariate_column(const CsvTable& csv) {
  std::vector<std::string> extra;
  for (const auto& h : csv.header()) {
    if (h != "district" && h != "year" && h != "month") extra.push_back(h);
  }
  if (extra.size() != 1) {
    throw InputError(csv.source() + ": expected one covariate column besides district,year,month");
  }
  return extra.front();
}

inline PanelDataset read_panel(const std::string& cases_path, const std::string& adjacency_path,
                               const std::vector<std::string>& covariate_paths = {}) {
  auto p = panel_from_tables(read_csv(cases_path), read_edge_list(adjacency_path));
  for (const auto& path : covariate_paths) {
    const auto csv = read_csv(path);
    add_covariate(p, csv, covariate_column(csv));
  }
  return p;
}

inline void write_panel_csv(const PanelDataset& p, const std::string& path) {
  CsvWriter w(path, {"district", "year", "month", "cases", "population"});
  for (int i = 0; i < p.n(); ++i) {
    for (int t = 0; t < p.T(); ++t) {
      w.row({p.districts[i], std::to_string(p.months[t].year), std::to_string(p.months[t].month),
             format_double(p.cases(i, t)), format_double(p.population(i, t))});
    }
  }
  w.close();
}

inline void write_covariate_csv(const std::vector<std::string>& districts,
                                const std::vector<YearMonth>& months, const Eigen::MatrixXd& values,
                                const std::string& name, const std::string& path) {
  CsvWriter w(path, {"district", "year", "month", name});
  for (std::size_t i = 0; i < districts.size(); ++i) {
    for (std::size_t t = 0; t < months.size(); ++t) {
      w.row({districts[i], std::to_string(months[t].year), std::to_string(months[t].month),
             format_double(values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)))});
    }
  }
  w.close();
}

inline void write_edge_list(const AdjacencyGraph& g, const std::string& path) {
  CsvWriter w(path, {"district_a", "district_b"});
  for (const auto& [a, b] : g.edge_list()) w.row({g.nodes[a], g.nodes[b]});
  w.close();
}

}  // namespace distcast
