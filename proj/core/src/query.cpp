#include "lernr/query.hpp"

#include <algorithm>
#include <cmath>

#include "lernr/error.hpp"
#include "lernr/providers.hpp"

namespace lernr {

void QuerySpec::validate() const {
  if (trim(positive).empty()) throw InputError("query prompt must not be empty");
  if (!(temperature > 0) || !std::isfinite(temperature)) throw InputError("temperature must be positive");
}

SimilarityField::SimilarityField(int size, FieldKind kind)
    : size_(size),
      kind_(kind),
      scores_(static_cast<std::size_t>(size) * size, kInvalid),
      valid_(static_cast<std::size_t>(size) * size, 0) {}

std::size_t SimilarityField::valid_count() const {
  return static_cast<std::size_t>(std::count(valid_.begin(), valid_.end(), std::uint8_t{1}));
}

SimilarityField similarity_field(const FeatureMap& map, const Embedding& query) {
  if (query.dim() != map.d_clip())
    throw InputError("query has dim " + std::to_string(query.dim()) + ", map language block has " +
                     std::to_string(map.d_clip()));
  SimilarityField field(map.size(), FieldKind::cosine);
  for (std::size_t i = 0; i < map.cell_count(); ++i)
    if (map.registered(i)) field.set(i, cosine(query.values(), map.clip_block(i)));
  return field;
}

SimilarityField combine_contrast(std::span<const SimilarityField> fields, double temperature) {
  if (fields.empty()) throw InputError("contrast needs at least the positive field");
  if (fields.size() == 1) return fields.front();
  SimilarityField out(fields.front().size(), FieldKind::contrast);
  std::vector<double> logits(fields.size());
  for (std::size_t i = 0; i < out.cell_count(); ++i) {
    if (!fields.front().valid(i)) continue;
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < fields.size(); ++p) {
      logits[p] = fields[p].score(i) / temperature;
      peak = std::max(peak, logits[p]);
    }
    double denom = 0;
    for (double l : logits) denom += std::exp(l - peak);
    out.set(i, std::exp(logits.front() - peak) / denom);
  }
  return out;
}

SimilarityField contrast_field(const FeatureMap& map, const QuerySpec& spec, const EmbeddingProvider& provider) {
  spec.validate();
  std::vector<SimilarityField> fields;
  fields.reserve(spec.negatives.size() + 1);
  fields.push_back(similarity_field(map, provider.embed_text(spec.positive)));
  for (const std::string& negative : spec.negatives) fields.push_back(similarity_field(map, provider.embed_text(negative)));
  return combine_contrast(fields, spec.temperature);
}

namespace {

// Row-major scan keeps the first strict maximum, i.e. the smallest (y, x).
std::optional<std::size_t> best_valid(const SimilarityField& field) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < field.cell_count(); ++i) {
    if (!field.valid(i)) continue;
    if (!best || field.score(i) > field.score(*best)) best = i;
  }
  return best;
}

Candidate make_candidate(const SimilarityField& field, std::size_t index, const GridSpec& spec) {
  const Cell cell = field.cell_at(index);
  return {cell, field.score(index), grid_to_world(cell, 0.0, spec), std::nullopt};
}

}  // namespace

Candidate argmax_goal(const SimilarityField& field, const GridSpec& spec) {
  if (field.size() != spec.size) throw InputError("field and grid sizes differ");
  const std::optional<std::size_t> best = best_valid(field);
  if (!best) throw NoGoalError("similarity field has no valid cell");
  return make_candidate(field, *best, spec);
}

std::vector<Candidate> extract_candidates(const SimilarityField& field, const GridSpec& spec, double threshold,
                                          int radius) {
  if (std::isnan(threshold)) throw InputError("threshold must not be NaN");
  if (radius < 1) throw InputError("suppression radius must be at least 1");
  if (field.size() != spec.size) throw InputError("field and grid sizes differ");

  SimilarityField work = field;
  std::vector<Candidate> out;
  while (true) {
    const std::optional<std::size_t> best = best_valid(work);
    if (!best || !(work.score(*best) > threshold)) break;
    out.push_back(make_candidate(work, *best, spec));
    const Cell c = work.cell_at(*best);
    for (int y = std::max(0, c.y - radius); y <= std::min(work.size() - 1, c.y + radius); ++y)
      for (int x = std::max(0, c.x - radius); x <= std::min(work.size() - 1, c.x + radius); ++x)
        work.invalidate(work.index({x, y}));
  }
  return out;
}

double bearing_deg(Cell from, Cell to) {
  const double dx = to.x - from.x;
  const double north = from.y - to.y;
  double deg = std::atan2(dx, north) * 180.0 / M_PI;
  if (deg < 0) deg += 360.0;
  if (deg >= 360.0) deg -= 360.0;
  return deg;
}

int select_orientation(const FeatureMap& map, Cell goal, const Embedding& query, const OrientationParams& params) {
  if (!map.spec().contains(goal)) throw BoundsError("goal cell outside the map");
  if (query.dim() != map.d_clip()) throw InputError("query dimension does not match the map");
  if (!(params.fov_deg > 0) || !(params.range_m > 0)) throw InputError("fov and range must be positive");

  struct Seen {
    double bearing;
    double score;
  };
  std::vector<Seen> seen;
  const double res = map.spec().resolution;
  const int reach = static_cast<int>(std::ceil(params.range_m / res));
  for (int y = std::max(0, goal.y - reach); y <= std::min(map.size() - 1, goal.y + reach); ++y) {
    for (int x = std::max(0, goal.x - reach); x <= std::min(map.size() - 1, goal.x + reach); ++x) {
      const Cell c{x, y};
      if (c == goal || !map.registered(c)) continue;
      if (std::hypot((x - goal.x) * res, (y - goal.y) * res) > params.range_m) continue;
      seen.push_back({bearing_deg(goal, c), cosine(query.values(), map.clip_block(c))});
    }
  }
  if (seen.empty()) throw NoOrientationError("no registered cell within range of the goal");

  // Ties within the margin go to the smallest heading.
  constexpr double kTieMargin = 1e-12;
  const double half_fov = params.fov_deg / 2.0;
  int best_heading = -1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int heading = 0; heading < 360; ++heading) {
    double sum = 0;
    std::size_t n = 0;
    for (const Seen& s : seen) {
      double diff = std::abs(s.bearing - heading);
      if (diff > 180.0) diff = 360.0 - diff;
      if (diff <= half_fov) {
        sum += s.score;
        ++n;
      }
    }
    if (n == 0) continue;
    const double score = sum / static_cast<double>(n);
    if (best_heading < 0 || score > best_score + kTieMargin) {
      best_heading = heading;
      best_score = score;
    }
  }
  if (best_heading < 0) throw NoOrientationError("every view cone is empty");
  return best_heading;
}

}  // namespace lernr
