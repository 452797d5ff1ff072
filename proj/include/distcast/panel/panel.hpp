#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "distcast/core/calendar.hpp"
#include "distcast/core/errors.hpp"

namespace distcast {

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Undirected neighbour relation with all-pairs neighbourhood order (shortest path length).
struct AdjacencyGraph {
  std::vector<std::string> nodes;
  std::vector<std::vector<int>> neighbours;
  Eigen::MatrixXi order;  // order(j, i) = hops from j to i, -1 if unreachable

  int size() const { return static_cast<int>(nodes.size()); }

  static AdjacencyGraph from_edges(std::vector<std::string> nodes,
                                   const std::vector<std::pair<std::string, std::string>>& edges) {
    AdjacencyGraph g;
    g.nodes = std::move(nodes);
    std::unordered_map<std::string, int> idx;
    for (int i = 0; i < g.size(); ++i) {
      if (!idx.emplace(g.nodes[i], i).second) {
        throw InputError("duplicate district '" + g.nodes[i] + "' in adjacency");
      }
    }
    g.neighbours.assign(g.nodes.size(), {});
    for (const auto& [a, b] : edges) {
      const auto ia = idx.find(a);
      const auto ib = idx.find(b);
      if (ia == idx.end() || ib == idx.end()) {
        throw InputError("adjacency edge " + a + "," + b + " names an unknown district");
      }
      if (ia->second == ib->second) continue;
      g.neighbours[ia->second].push_back(ib->second);
      g.neighbours[ib->second].push_back(ia->second);
    }
    for (auto& nb : g.neighbours) {
      std::sort(nb.begin(), nb.end());
      nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    }
    g.compute_order();
    return g;
  }

  /// Complete graph over the nodes; every pair has order 1.
  static AdjacencyGraph complete(std::vector<std::string> nodes) {
    std::vector<std::pair<std::string, std::string>> edges;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      for (std::size_t j = i + 1; j < nodes.size(); ++j) edges.emplace_back(nodes[i], nodes[j]);
    }
    return from_edges(std::move(nodes), edges);
  }

  void compute_order() {
    const int n = size();
    order = Eigen::MatrixXi::Constant(n, n, -1);
    for (int s = 0; s < n; ++s) {
      std::deque<int> queue{s};
      order(s, s) = 0;
      while (!queue.empty()) {
        const int u = queue.front();
        queue.pop_front();
        for (const int v : neighbours[u]) {
          if (order(s, v) < 0) {
            order(s, v) = order(s, u) + 1;
            queue.push_back(v);
          }
        }
      }
    }
  }

  std::vector<int> isolated() const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i) {
      if (neighbours[i].empty()) out.push_back(i);
    }
    return out;
  }

  bool connected() const { return size() <= 1 || (order.array() >= 0).all(); }

  std::vector<std::pair<int, int>> edge_list() const {
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < size(); ++i) {
      for (const int j : neighbours[i]) {
        if (i < j) out.emplace_back(i, j);
      }
    }
    return out;
  }
};

struct Covariate {
  Eigen::MatrixXd values;  // n x T, NaN for missing
  std::string unit;
};

/// District x month surveillance panel.
struct PanelDataset {
  std::vector<std::string> districts;
  std::vector<YearMonth> months;
  Eigen::MatrixXd cases;       // integer valued
  Eigen::MatrixXd population;  // yearly values broadcast to months
  std::map<std::string, Covariate> covariates;
  AdjacencyGraph adjacency;

  int n() const { return static_cast<int>(districts.size()); }
  int T() const { return static_cast<int>(months.size()); }

  YearMonth month_at(int t) const { return months.front().plus(t); }
  /// a[t]: year offset from the first panel year (t may run past the panel end).
  int year_index(int t) const { return month_at(t).year - months.front().year; }
  /// m[t]: month of year, 1..12.
  int month_of_year(int t) const { return month_at(t).month; }

  int time_index(const YearMonth& ym) const {
    const int t = months_between(months.front(), ym);
    if (t < 0 || t >= T()) throw InputError("month " + ym.to_string() + " outside the panel");
    return t;
  }

  int district_index(const std::string& id) const {
    const auto it = std::find(districts.begin(), districts.end(), id);
    if (it == districts.end()) throw InputError("unknown district '" + id + "'");
    return static_cast<int>(it - districts.begin());
  }

  /// Population for month t; months past the panel end carry the last known value forward.
  double population_at(int i, int t) const {
    return population(i, std::min(t, T() - 1));
  }

  const Covariate& covariate(const std::string& name) const {
    const auto it = covariates.find(name);
    if (it == covariates.end()) throw InputError("panel has no covariate '" + name + "'");
    return it->second;
  }

  /// Panel restricted to months [0, last_t]; nothing after last_t survives.
  PanelDataset truncated(int last_t) const {
    if (last_t < 0 || last_t >= T()) throw PreconditionError("truncation point outside panel");
    PanelDataset out;
    out.districts = districts;
    out.months.assign(months.begin(), months.begin() + last_t + 1);
    out.cases = cases.leftCols(last_t + 1);
    out.population = population.leftCols(last_t + 1);
    for (const auto& [name, cov] : covariates) {
      out.covariates[name] = Covariate{cov.values.leftCols(last_t + 1), cov.unit};
    }
    out.adjacency = adjacency;
    return out;
  }
};

struct Violation {
  std::string kind;
  std::string message;
  int district = -1;
  int month = -1;
};

/// Lists every broken panel invariant; empty means the panel is well formed.
inline std::vector<Violation> validate(const PanelDataset& p) {
  std::vector<Violation> out;
  const int n = p.n();
  const int T = p.T();
  for (int t = 1; t < T; ++t) {
    if (months_between(p.months[t - 1], p.months[t]) != 1) {
      out.push_back({"months", "month " + p.months[t].to_string() + " does not follow " +
                                   p.months[t - 1].to_string(), -1, t});
    }
  }
  auto check_dims = [&](const Eigen::MatrixXd& m, const std::string& what) {
    if (m.rows() != n || m.cols() != T) {
      out.push_back({"dimensions", what + " is " + std::to_string(m.rows()) + "x" +
                                       std::to_string(m.cols()) + ", expected " +
                                       std::to_string(n) + "x" + std::to_string(T)});
      return false;
    }
    return true;
  };
  if (check_dims(p.cases, "cases")) {
    for (int i = 0; i < n; ++i) {
      for (int t = 0; t < T; ++t) {
        const double y = p.cases(i, t);
        if (!std::isfinite(y) || y < 0 || y != std::floor(y)) {
          out.push_back({"cases", "cases(" + std::to_string(i) + "," + std::to_string(t) +
                                      ") is not a non-negative integer", i, t});
        }
      }
    }
  }
  if (check_dims(p.population, "population")) {
    for (int i = 0; i < n; ++i) {
      for (int t = 0; t < T; ++t) {
        if (!(p.population(i, t) > 0)) {
          out.push_back({"population", "population(" + std::to_string(i) + "," +
                                           std::to_string(t) + ") is not positive", i, t});
        }
      }
    }
  }
  for (const auto& [name, cov] : p.covariates) check_dims(cov.values, "covariate " + name);

  std::vector<std::string> a = p.districts, b = p.adjacency.nodes;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a != b) {
    out.push_back({"adjacency", "adjacency nodes differ from panel districts"});
    return out;
  }
  // A single-district panel has no neighbours by construction.
  const auto isolated = p.adjacency.size() > 1 ? p.adjacency.isolated() : std::vector<int>{};
  for (const int k : isolated) {
    out.push_back({"connectivity", "district '" + p.adjacency.nodes[k] + "' has no neighbours",
                   p.district_index(p.adjacency.nodes[k])});
  }
  // Disconnection among the remaining districts is reported once.
  if (p.adjacency.size() > 1) {
    std::vector<int> keep;
    for (int i = 0; i < p.adjacency.size(); ++i) {
      if (p.adjacency.neighbours[i].empty()) continue;
      keep.push_back(i);
    }
    bool split = false;
    for (const int u : keep) {
      for (const int v : keep) split = split || p.adjacency.order(u, v) < 0;
    }
    if (split) out.push_back({"connectivity", "adjacency graph is not connected"});
  }
  return out;
}

inline void require_valid(const PanelDataset& p) {
  const auto v = validate(p);
  if (!v.empty()) {
    std::string msg = "invalid panel: " + v.front().message;
    if (v.size() > 1) msg += " (+" + std::to_string(v.size() - 1) + " more)";
    throw InputError(msg);
  }
}

}  // namespace distcast
