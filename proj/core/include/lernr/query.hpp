#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lernr/embedding.hpp"
#include "lernr/feature_map.hpp"
#include "lernr/geometry.hpp"

namespace lernr {

class EmbeddingProvider;

struct QuerySpec {
  std::string positive;
  std::vector<std::string> negatives;
  double temperature = 0.07;

  void validate() const;
};

enum class FieldKind { cosine, contrast };

// Per-cell query scores. Cells without registered points are invalid: they
// hold kInvalid and are never selected.
class SimilarityField {
 public:
  static constexpr double kInvalid = -std::numeric_limits<double>::infinity();

  SimilarityField() = default;
  SimilarityField(int size, FieldKind kind);

  int size() const { return size_; }
  FieldKind kind() const { return kind_; }
  std::size_t cell_count() const { return scores_.size(); }

  bool valid(Cell c) const { return valid_[index(c)] != 0; }
  bool valid(std::size_t i) const { return valid_[i] != 0; }
  double score(Cell c) const { return scores_[index(c)]; }
  double score(std::size_t i) const { return scores_[i]; }

  void set(Cell c, double score) { set(index(c), score); }
  void set(std::size_t i, double score) {
    scores_[i] = score;
    valid_[i] = 1;
  }
  void invalidate(std::size_t i) {
    scores_[i] = kInvalid;
    valid_[i] = 0;
  }

  std::span<const double> scores() const { return scores_; }
  std::size_t valid_count() const;

  Cell cell_at(std::size_t i) const { return {static_cast<int>(i % size_), static_cast<int>(i / size_)}; }
  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.y) * size_ + c.x; }

 private:
  int size_ = 0;
  FieldKind kind_ = FieldKind::cosine;
  std::vector<double> scores_;
  std::vector<std::uint8_t> valid_;
};

struct Candidate {
  Cell cell;
  double score = 0;
  RotoTranslation world_pose;
  std::optional<int> heading_deg;
};

// cos(query, language block) for every registered cell.
SimilarityField similarity_field(const FeatureMap& map, const Embedding& query);

// Softmax over {positive} + negatives at temperature tau:
//   score = exp(s_pos / tau) / sum_i exp(s_i / tau)
// With no negatives this is the plain cosine field.
SimilarityField contrast_field(const FeatureMap& map, const QuerySpec& spec, const EmbeddingProvider& provider);

// Same combination over precomputed cosine fields (positive first).
SimilarityField combine_contrast(std::span<const SimilarityField> fields, double temperature);

// Highest valid cell; ties go to the smallest (y, x). The pose is the cell's
// world pose with zero heading. Throws NoGoalError when no cell is valid.
Candidate argmax_goal(const SimilarityField& field, const GridSpec& spec);

// Repeatedly takes the best remaining cell while its score exceeds
// `threshold`, then suppresses every cell within Chebyshev distance `radius`.
std::vector<Candidate> extract_candidates(const SimilarityField& field, const GridSpec& spec, double threshold = 0.6,
                                          int radius = 3);

struct OrientationParams {
  double fov_deg = 90.0;
  double range_m = 3.0;
};

// Heading in whole degrees, 0 = north (towards decreasing y), clockwise, so
// 90 points towards increasing x. Each heading scores the mean cosine of
// `query` over registered cells whose centre lies within range and within
// fov/2 of the heading; empty cones score -inf. Ties go to the smallest
// heading. Throws NoOrientationError when every cone is empty.
int select_orientation(const FeatureMap& map, Cell goal, const Embedding& query, const OrientationParams& params = {});

// Bearing of `to` seen from `from`, in degrees [0, 360) with the convention above.
double bearing_deg(Cell from, Cell to);

}  // namespace lernr
