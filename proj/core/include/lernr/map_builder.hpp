#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lernr/feature_map.hpp"
#include "lernr/frame.hpp"

namespace lernr {

// Closed height interval [min, max] in map-frame meters (Y is up).
struct HeightBand {
  double min = 0;
  double max = 0;

  bool contains(double y) const { return y >= min && y <= max; }
};

// Points inside the obstacle band mark their cell as an obstacle. Every
// other registered point (floor band or outside both bands) marks the cell as
// observed and traversable, so a cell with points is never left unknown.
// Obstacle wins over free, and a cell never goes back from obstacle to free.
struct OccupancyParams {
  HeightBand floor_band{-0.1, 0.1};
  HeightBand obstacle_band{0.1, 2.0};

  void validate() const;
};

enum class PointClass : std::uint8_t { floor, obstacle, other };

PointClass classify_height(double height, const OccupancyParams& params);
Occupancy merge_occupancy(Occupancy current, PointClass incoming);

struct HeightSample {
  Cell cell;
  double height;
};

void derive_occupancy(std::span<const HeightSample> samples, const OccupancyParams& params, OccupancyGrid& grid);

// How a revisited cell combines with new contributions.
enum class Aggregation {
  mean,    // running weighted mean over all points, weight 1 per point
  latest,  // the most recent frame's contribution replaces the cell vector
};

struct BuildOptions {
  OccupancyParams occupancy;
  Aggregation aggregation = Aggregation::mean;
  unsigned threads = 0;  // 0 = hardware concurrency
};

struct RegistrationStats {
  std::size_t valid_points = 0;
  std::size_t registered_points = 0;
  std::size_t dropped_points = 0;
  std::size_t touched_cells = 0;
};

struct BuildStats {
  std::size_t frames = 0;
  std::size_t valid_points = 0;
  std::size_t dropped_points = 0;
  std::size_t registered_cells = 0;
  double build_ms = 0;
};

// Projects every valid depth pixel into the map and folds the frame's
// [f_rnr | f_clip] feature into the cells it lands on. Throws InputError when
// the frame disagrees with the map dimensions.
RegistrationStats register_frame(FeatureMap& map, const PosedFrame& frame, const BuildOptions& options = {});

// Streaming builder. Frames added in a batch are binned in parallel and then
// applied in order, so the result equals a serial fold of register_frame.
class MapBuilder {
 public:
  MapBuilder(GridSpec spec, std::size_t d_rnr, std::size_t d_clip, BuildOptions options = {});

  void add(const PosedFrame& frame);
  void add_batch(std::span<const PosedFrame> frames);

  const FeatureMap& map() const { return map_; }
  FeatureMap take() { return std::move(map_); }
  BuildStats stats() const;

 private:
  FeatureMap map_;
  BuildOptions options_;
  BuildStats stats_;
};

// Fold of register_frame over `trajectory` in order. Dimensions come from the
// first frame's features. Throws InputError for an empty trajectory.
FeatureMap build_map(std::span<const PosedFrame> trajectory, const GridSpec& spec, const BuildOptions& options = {},
                     BuildStats* stats = nullptr);

// Origin that places `pose`'s position at the centre of the grid and keeps
// world axes (no rotation, height unchanged).
RotoTranslation centered_origin(const RotoTranslation& pose, const GridSpec& spec);

}  // namespace lernr
