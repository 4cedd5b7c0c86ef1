#include "lernr/planner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <queue>
#include <string>

#include "lernr/error.hpp"

namespace lernr {
namespace {

constexpr double kSqrt2 = 1.4142135623730951;

struct Move {
  int dx, dy;
  bool diagonal;
};

constexpr Move kMoves[8] = {{1, 0, false},  {-1, 0, false}, {0, 1, false},  {0, -1, false},
                            {1, 1, true},   {1, -1, true},  {-1, 1, true},  {-1, -1, true}};

std::string describe(Cell c) { return "(" + std::to_string(c.x) + ", " + std::to_string(c.y) + ")"; }

double octile(Cell a, Cell b) {
  const int dx = std::abs(a.x - b.x);
  const int dy = std::abs(a.y - b.y);
  return std::max(dx, dy) - std::min(dx, dy) + kSqrt2 * std::min(dx, dy);
}

}  // namespace

double step_cost(int cardinal, int diagonal) { return cardinal + diagonal * kSqrt2; }

double Path::cost() const { return step_cost(cardinal_steps, diagonal_steps); }

Path shortest_path(const OccupancyGrid& grid, Cell start, Cell goal, double resolution) {
  if (!grid.contains(start)) throw BoundsError("start " + describe(start) + " outside the grid");
  if (!grid.contains(goal)) throw BoundsError("goal " + describe(goal) + " outside the grid");
  if (!grid.is_free(start)) throw InputError("start " + describe(start) + " is not traversable");

  const int size = grid.size();
  const auto index = [size](Cell c) { return static_cast<std::size_t>(c.y) * size + c.x; };
  const std::size_t n = static_cast<std::size_t>(size) * size;

  struct Cost {
    int cardinal = 0;
    int diagonal = 0;
    double value() const { return step_cost(cardinal, diagonal); }
  };
  std::vector<Cost> g(n);
  std::vector<double> g_value(n, std::numeric_limits<double>::infinity());
  std::vector<int> parent(n, -1);
  std::vector<std::uint8_t> closed(n, 0);

  struct Entry {
    double f;
    double h;
    std::size_t index;
    bool operator>(const Entry& o) const {
      if (f != o.f) return f > o.f;
      if (h != o.h) return h > o.h;
      return index > o.index;
    }
  };
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;

  const std::size_t s = index(start);
  const std::size_t t = index(goal);
  g_value[s] = 0;
  open.push({octile(start, goal), octile(start, goal), s});
  std::size_t expanded = 0;

  while (!open.empty()) {
    const Entry top = open.top();
    open.pop();
    if (closed[top.index]) continue;
    closed[top.index] = 1;
    ++expanded;
    if (top.index == t) break;

    const Cell c{static_cast<int>(top.index % size), static_cast<int>(top.index / size)};
    for (const Move& m : kMoves) {
      const Cell nb{c.x + m.dx, c.y + m.dy};
      if (!grid.is_free(nb)) continue;
      if (m.diagonal && (!grid.is_free({c.x + m.dx, c.y}) || !grid.is_free({c.x, c.y + m.dy}))) continue;
      const std::size_t ni = index(nb);
      if (closed[ni]) continue;
      Cost cand = g[top.index];
      (m.diagonal ? cand.diagonal : cand.cardinal) += 1;
      const double value = cand.value();
      if (value < g_value[ni]) {
        g[ni] = cand;
        g_value[ni] = value;
        parent[ni] = static_cast<int>(top.index);
        const double h = octile(nb, goal);
        open.push({value + h, h, ni});
      }
    }
  }

  if (!closed[t])
    throw NoPathError("goal " + describe(goal) + " is unreachable from " + describe(start) + " (" +
                          std::to_string(expanded) + " cells explored)",
                      expanded);

  Path path;
  for (int i = static_cast<int>(t); i >= 0; i = parent[static_cast<std::size_t>(i)])
    path.waypoints.push_back({i % size, i / size});
  std::reverse(path.waypoints.begin(), path.waypoints.end());
  path.cardinal_steps = g[t].cardinal;
  path.diagonal_steps = g[t].diagonal;
  path.length_m = path.cost() * resolution;
  return path;
}

Cell nearest_traversable(const OccupancyGrid& grid, Cell goal, int max_radius) {
  if (max_radius < 0) throw InputError("snapping radius must be non-negative");
  if (!grid.contains(goal)) throw BoundsError("goal " + describe(goal) + " outside the grid");
  for (int r = 0; r <= max_radius; ++r) {
    for (int y = goal.y - r; y <= goal.y + r; ++y) {
      for (int x = goal.x - r; x <= goal.x + r; ++x) {
        if (std::max(std::abs(x - goal.x), std::abs(y - goal.y)) != r) continue;
        if (grid.is_free({x, y})) return {x, y};
      }
    }
  }
  throw SnappingError("no traversable cell within " + std::to_string(max_radius) + " cells of " + describe(goal));
}

}  // namespace lernr
