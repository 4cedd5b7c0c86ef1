#include "lernr/search.hpp"

#include "lernr/error.hpp"
#include "lernr/providers.hpp"

namespace lernr {

std::vector<std::string> split_prompt(std::string_view prompt) {
  std::vector<std::string> items;
  std::size_t begin = 0;
  while (begin <= prompt.size()) {
    const std::size_t comma = prompt.find(',', begin);
    const std::size_t end = comma == std::string_view::npos ? prompt.size() : comma;
    const std::string_view item = trim(prompt.substr(begin, end - begin));
    if (!item.empty()) items.emplace_back(item);
    if (comma == std::string_view::npos) break;
    begin = comma + 1;
  }
  return items;
}

std::vector<SearchLeg> multi_object_search(const FeatureMap& map, std::string_view prompt, Cell start,
                                           const QuerySpec& query_template, const EmbeddingProvider& provider,
                                           const SearchOptions& options) {
  const std::vector<std::string> items = split_prompt(prompt);
  if (items.empty()) throw InputError("prompt has no searchable items");

  std::vector<SearchLeg> legs;
  Cell current = start;
  for (const std::string& item : items) {
    SearchLeg leg;
    leg.query = item;
    leg.start = current;
    try {
      QuerySpec spec = query_template;
      spec.positive = item;
      const SimilarityField field = contrast_field(map, spec, provider);
      leg.goal = argmax_goal(field, map.spec());
      leg.reached = nearest_traversable(map.occupancy(), leg.goal->cell, options.snap_radius);
      leg.path = shortest_path(map.occupancy(), current, *leg.reached, map.spec().resolution);
      current = *leg.reached;
    } catch (const NoGoalError& e) {
      leg.error = std::string("no goal: ") + e.what();
    } catch (const SnappingError& e) {
      leg.error = std::string("no traversable goal: ") + e.what();
    } catch (const NoPathError& e) {
      leg.error = std::string("no path: ") + e.what();
    } catch (const InputError& e) {
      leg.error = std::string("invalid leg: ") + e.what();
    }
    legs.push_back(std::move(leg));
  }
  return legs;
}

}  // namespace lernr
