#pragma once

#include <string>
#include <vector>

#include "distcast/panel/panel.hpp"

namespace distcast::testing {

/// Panel with `n` districts on a path graph, constant population, cases from a generator.
template <typename Gen>
PanelDataset make_panel(int n, int T, double population, Gen&& cases, YearMonth start = {2010, 1}) {
  PanelDataset p;
  std::vector<std::pair<std::string, std::string>> edges;
  for (int i = 0; i < n; ++i) {
    p.districts.push_back("D" + std::to_string(i));
    if (i > 0) edges.emplace_back(p.districts[i - 1], p.districts[i]);
  }
  for (int t = 0; t < T; ++t) p.months.push_back(start.plus(t));
  p.cases.resize(n, T);
  p.population = Eigen::MatrixXd::Constant(n, T, population);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < T; ++t) p.cases(i, t) = cases(i, t);
  }
  p.adjacency = AdjacencyGraph::from_edges(p.districts, edges);
  return p;
}

inline PanelDataset single_series(const std::vector<double>& y, double population = 100000.0) {
  return make_panel(1, static_cast<int>(y.size()), population,
                    [&](int, int t) { return y[static_cast<std::size_t>(t)]; });
}

}  // namespace distcast::testing
