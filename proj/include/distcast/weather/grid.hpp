#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "distcast/core/calendar.hpp"
#include "distcast/core/errors.hpp"
#include "distcast/weather/variogram.hpp"

namespace distcast::weather {

struct GridCell {
  int row = 0;
  int col = 0;
  Point centre;
};

/// Regular grid of cells with one value per cell per day.
struct GridField {
  std::vector<GridCell> cells;                 // ordered by (row, col)
  std::vector<Date> days;
  std::vector<std::vector<double>> values;     // values[day][cell], NaN for missing
  double cell_size = 0.0;

  bool empty() const { return cells.empty(); }
};

/// Index of the cell whose centre is closest; ties go to the lowest (row, col).
inline std::size_t nearest_cell_index(const GridField& g, const Point& p) {
  if (g.empty()) throw PreconditionError("nearest_cell on an empty grid");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < g.cells.size(); ++k) {
    const double dx = g.cells[k].centre.x - p.x, dy = g.cells[k].centre.y - p.y;
    const double d = dx * dx + dy * dy;
    const auto& c = g.cells[k];
    const auto& b = g.cells[best];
    if (d < best_d || (d == best_d && (c.row < b.row || (c.row == b.row && c.col < b.col)))) {
      best = k;
      best_d = d;
    }
  }
  return best;
}

inline double nearest_cell(const GridField& g, std::size_t day, const Point& p) {
  return g.values.at(day).at(nearest_cell_index(g, p));
}

}  // namespace distcast::weather
