#include "lernr/map_builder.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include "lernr/error.hpp"

namespace lernr {

void OccupancyParams::validate() const {
  if (!(floor_band.min <= floor_band.max) || !(obstacle_band.min <= obstacle_band.max))
    throw InputError("occupancy bands must be non-empty");
  if (obstacle_band.min < floor_band.max) throw InputError("obstacle band must lie above the floor band");
}

PointClass classify_height(double height, const OccupancyParams& params) {
  if (params.obstacle_band.contains(height)) return PointClass::obstacle;
  if (params.floor_band.contains(height)) return PointClass::floor;
  return PointClass::other;
}

Occupancy merge_occupancy(Occupancy current, PointClass incoming) {
  if (incoming == PointClass::obstacle || current == Occupancy::obstacle) return Occupancy::obstacle;
  return Occupancy::free;
}

void derive_occupancy(std::span<const HeightSample> samples, const OccupancyParams& params, OccupancyGrid& grid) {
  for (const HeightSample& s : samples) {
    if (!std::isfinite(s.height)) throw InputError("height sample is not finite");
    if (!grid.contains(s.cell)) throw BoundsError("height sample outside occupancy grid");
    grid.set(s.cell, merge_occupancy(grid.at(s.cell), classify_height(s.height, params)));
  }
}

namespace {

// Per-frame accumulation, independent of the map contents.
struct FrameBins {
  std::vector<std::uint32_t> cells;  // ascending cell indices
  std::vector<std::uint32_t> counts;
  std::vector<std::uint8_t> has_obstacle;
  std::vector<double> rnr_sums;  // per touched cell x d_rnr, per-pixel features only
  std::size_t valid_points = 0;
  std::size_t dropped_points = 0;
};

void check_frame(const FeatureMap& map, const PosedFrame& frame) {
  if (frame.depth.width != frame.intrinsics.width || frame.depth.height != frame.intrinsics.height)
    throw FrameError(frame.id, "depth raster does not match intrinsics");
  frame.intrinsics.validate();
  if (frame.f_clip.dim() != map.d_clip())
    throw FrameError(frame.id, "f_clip has dim " + std::to_string(frame.f_clip.dim()) + ", map expects " +
                                   std::to_string(map.d_clip()));
  if (!frame.rnr_pixels.empty()) {
    if (frame.rnr_pixels.size() != frame.depth.values.size() * map.d_rnr())
      throw FrameError(frame.id, "per-pixel visual features do not match depth size x d_rnr");
  } else if (frame.f_rnr.dim() != map.d_rnr()) {
    throw FrameError(frame.id, "f_rnr has dim " + std::to_string(frame.f_rnr.dim()) + ", map expects " +
                                   std::to_string(map.d_rnr()));
  }
}

class Binner {
 public:
  explicit Binner(const FeatureMap& map) : map_(map), slot_(map.cell_count(), -1) {}

  FrameBins bin(const PosedFrame& frame, const OccupancyParams& params) {
    const GridSpec& spec = map_.spec();
    const std::size_t d_rnr = map_.d_rnr();
    const bool per_pixel = !frame.rnr_pixels.empty();

    FrameBins bins;
    std::vector<double> sums;
    const std::vector<WorldPoint> points = backproject_depth(frame.depth, frame.intrinsics, frame.pose);
    bins.valid_points = points.size();
    for (const WorldPoint& wp : points) {
      const std::optional<Cell> cell = world_to_grid(wp.position, spec);
      if (!cell) {
        ++bins.dropped_points;
        continue;
      }
      const double height = spec.origin.apply(wp.position).y();
      const std::size_t index = spec.index(*cell);
      int& slot = slot_[index];
      if (slot < 0) {
        slot = static_cast<int>(bins.cells.size());
        bins.cells.push_back(static_cast<std::uint32_t>(index));
        bins.counts.push_back(0);
        bins.has_obstacle.push_back(0);
        if (per_pixel) sums.resize(sums.size() + d_rnr, 0.0);
      }
      const auto s = static_cast<std::size_t>(slot);
      ++bins.counts[s];
      if (classify_height(height, params) == PointClass::obstacle) bins.has_obstacle[s] = 1;
      if (per_pixel) {
        const float* f = frame.rnr_pixels.data() + static_cast<std::size_t>(wp.pixel) * d_rnr;
        double* acc = sums.data() + s * d_rnr;
        for (std::size_t k = 0; k < d_rnr; ++k) acc[k] += f[k];
      }
    }

    // Reorder by cell index so application order never depends on pixel order.
    std::vector<std::size_t> order(bins.cells.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return bins.cells[a] < bins.cells[b]; });
    FrameBins sorted;
    sorted.valid_points = bins.valid_points;
    sorted.dropped_points = bins.dropped_points;
    sorted.cells.reserve(order.size());
    for (std::size_t i : order) {
      slot_[bins.cells[i]] = -1;
      sorted.cells.push_back(bins.cells[i]);
      sorted.counts.push_back(bins.counts[i]);
      sorted.has_obstacle.push_back(bins.has_obstacle[i]);
      if (per_pixel) sorted.rnr_sums.insert(sorted.rnr_sums.end(), sums.begin() + i * d_rnr, sums.begin() + (i + 1) * d_rnr);
    }
    return sorted;
  }

 private:
  const FeatureMap& map_;
  std::vector<int> slot_;
};

RegistrationStats apply_bins(FeatureMap& map, const PosedFrame& frame, const FrameBins& bins, Aggregation mode) {
  const std::size_t d_rnr = map.d_rnr();
  const std::size_t d_clip = map.d_clip();
  const std::size_t channels = map.channels();
  const bool per_pixel = !frame.rnr_pixels.empty();
  const std::span<const float> clip = frame.f_clip.values();
  const std::span<const float> rnr = frame.f_rnr.values();

  std::span<float> cells = map.cells_data();
  std::span<float> weights = map.weights();
  std::span<std::uint32_t> counts = map.counts();
  std::span<Occupancy> occupancy = map.occupancy().cells();

  RegistrationStats stats;
  stats.valid_points = bins.valid_points;
  stats.dropped_points = bins.dropped_points;
  stats.touched_cells = bins.cells.size();

  for (std::size_t i = 0; i < bins.cells.size(); ++i) {
    const std::size_t index = bins.cells[i];
    const double n = bins.counts[i];
    const double w_old = weights[index];
    const double w_new = w_old + n;
    float* v = cells.data() + index * channels;

    if (mode == Aggregation::mean) {
      for (std::size_t k = 0; k < d_rnr; ++k) {
        const double contribution = per_pixel ? bins.rnr_sums[i * d_rnr + k] : n * static_cast<double>(rnr[k]);
        v[k] = static_cast<float>((v[k] * w_old + contribution) / w_new);
      }
      for (std::size_t k = 0; k < d_clip; ++k)
        v[d_rnr + k] = static_cast<float>((v[d_rnr + k] * w_old + n * static_cast<double>(clip[k])) / w_new);
    } else {
      for (std::size_t k = 0; k < d_rnr; ++k)
        v[k] = per_pixel ? static_cast<float>(bins.rnr_sums[i * d_rnr + k] / n) : rnr[k];
      for (std::size_t k = 0; k < d_clip; ++k) v[d_rnr + k] = clip[k];
    }

    weights[index] = static_cast<float>(w_new);
    counts[index] += bins.counts[i];
    occupancy[index] = merge_occupancy(occupancy[index], bins.has_obstacle[i] ? PointClass::obstacle : PointClass::floor);
    stats.registered_points += bins.counts[i];
  }
  map.add_dropped_points(bins.dropped_points);
  return stats;
}

}  // namespace

RegistrationStats register_frame(FeatureMap& map, const PosedFrame& frame, const BuildOptions& options) {
  options.occupancy.validate();
  check_frame(map, frame);
  Binner binner(map);
  return apply_bins(map, frame, binner.bin(frame, options.occupancy), options.aggregation);
}

MapBuilder::MapBuilder(GridSpec spec, std::size_t d_rnr, std::size_t d_clip, BuildOptions options)
    : map_(std::move(spec), d_rnr, d_clip), options_(options) {
  options_.occupancy.validate();
}

void MapBuilder::add(const PosedFrame& frame) { add_batch(std::span<const PosedFrame>(&frame, 1)); }

void MapBuilder::add_batch(std::span<const PosedFrame> frames) {
  const auto start = std::chrono::steady_clock::now();
  for (const PosedFrame& f : frames) check_frame(map_, f);

  unsigned threads = options_.threads ? options_.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(frames.size()));

  std::vector<FrameBins> bins(frames.size());
  if (threads <= 1) {
    Binner binner(map_);
    for (std::size_t i = 0; i < frames.size(); ++i) bins[i] = binner.bin(frames[i], options_.occupancy);
  } else {
    std::vector<std::jthread> workers;
    workers.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
      workers.emplace_back([&, t] {
        Binner binner(map_);
        for (std::size_t i = t; i < frames.size(); i += threads) bins[i] = binner.bin(frames[i], options_.occupancy);
      });
    }
  }

  for (std::size_t i = 0; i < frames.size(); ++i) {
    const RegistrationStats s = apply_bins(map_, frames[i], bins[i], options_.aggregation);
    stats_.valid_points += s.valid_points;
    stats_.dropped_points += s.dropped_points;
  }
  stats_.frames += frames.size();
  stats_.build_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

BuildStats MapBuilder::stats() const {
  BuildStats s = stats_;
  s.registered_cells = map_.registered_cells();
  return s;
}

FeatureMap build_map(std::span<const PosedFrame> trajectory, const GridSpec& spec, const BuildOptions& options,
                     BuildStats* stats) {
  if (trajectory.empty()) throw InputError("trajectory is empty");
  const PosedFrame& first = trajectory.front();
  const std::size_t d_rnr = first.rnr_pixels.empty() ? first.f_rnr.dim()
                                                     : first.rnr_pixels.size() / std::max<std::size_t>(1, first.depth.values.size());
  MapBuilder builder(spec, d_rnr, first.f_clip.dim(), options);
  constexpr std::size_t kBatch = 64;
  for (std::size_t i = 0; i < trajectory.size(); i += kBatch)
    builder.add_batch(trajectory.subspan(i, std::min(kBatch, trajectory.size() - i)));
  if (stats) *stats = builder.stats();
  return builder.take();
}

RotoTranslation centered_origin(const RotoTranslation& pose, const GridSpec& spec) {
  const double half = spec.size * spec.resolution / 2.0;
  const Eigen::Vector3d p = pose.translation();
  return RotoTranslation::translation_only({half - p.x(), 0.0, half - p.z()});
}

}  // namespace lernr
