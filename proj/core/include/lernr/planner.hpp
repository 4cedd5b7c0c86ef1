#pragma once

#include <vector>

#include "lernr/feature_map.hpp"
#include "lernr/geometry.hpp"

namespace lernr {

// 8-connected grid path; cost is kept as integer step counts.
struct Path {
  std::vector<Cell> waypoints;
  int cardinal_steps = 0;
  int diagonal_steps = 0;
  double length_m = 0;

  // cardinal + diagonal * sqrt(2), in cells.
  double cost() const;
};

double step_cost(int cardinal, int diagonal);

// A* over free cells with octile heuristic. Diagonal moves need both flanking
// cardinal cells free. Unknown cells are not traversable.
// Throws BoundsError for cells outside the grid, InputError when start is not
// free and NoPathError when goal is unreachable.
Path shortest_path(const OccupancyGrid& grid, Cell start, Cell goal, double resolution);

// Closest free cell by Chebyshev ring, smallest (y, x) within a ring.
// Throws SnappingError if none lies within max_radius.
Cell nearest_traversable(const OccupancyGrid& grid, Cell goal, int max_radius);

}  // namespace lernr
