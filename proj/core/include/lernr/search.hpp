#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lernr/feature_map.hpp"
#include "lernr/planner.hpp"
#include "lernr/query.hpp"

namespace lernr {

class EmbeddingProvider;

// Splits on commas, trims whitespace and drops empty items.
std::vector<std::string> split_prompt(std::string_view prompt);

struct SearchOptions {
  int snap_radius = 10;  // cells searched for a traversable cell near the goal
};

// One sequential leg. On failure `error` is set, `goal`/`path` may be empty
// and the next leg starts from this leg's start.
struct SearchLeg {
  std::string query;
  Cell start;
  std::optional<Candidate> goal;
  std::optional<Cell> reached;  // goal snapped onto traversable space
  std::optional<Path> path;
  std::string error;

  bool ok() const { return error.empty(); }
};

// Searches each comma-separated item in order: contrast field (with the
// template's negatives and temperature), argmax goal, snapping and a shortest
// path from the current position, which then moves to the reached goal.
std::vector<SearchLeg> multi_object_search(const FeatureMap& map, std::string_view prompt, Cell start,
                                           const QuerySpec& query_template, const EmbeddingProvider& provider,
                                           const SearchOptions& options = {});

}  // namespace lernr
