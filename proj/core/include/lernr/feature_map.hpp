#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lernr/geometry.hpp"

namespace lernr {

enum class Occupancy : std::uint8_t { unknown = 0, free = 1, obstacle = 2 };

class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  explicit OccupancyGrid(int size, Occupancy fill = Occupancy::unknown)
      : size_(size), cells_(static_cast<std::size_t>(size) * size, fill) {}

  int size() const { return size_; }
  bool contains(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < size_ && c.y < size_; }
  Occupancy at(Cell c) const { return cells_[index(c)]; }
  void set(Cell c, Occupancy o) { cells_[index(c)] = o; }
  bool is_free(Cell c) const { return contains(c) && at(c) == Occupancy::free; }

  std::span<const Occupancy> cells() const { return cells_; }
  std::span<Occupancy> cells() { return cells_; }

  friend bool operator==(const OccupancyGrid&, const OccupancyGrid&) = default;

 private:
  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.y) * size_ + c.x; }

  int size_ = 0;
  std::vector<Occupancy> cells_;
};

// M x M grid of (d_rnr + d_clip)-channel cell embeddings. Each cell holds the
// weighted mean of its contributions, laid out as [visual | language].
// count == 0 <=> weight == 0 <=> all-zero vector <=> occupancy unknown.
class FeatureMap {
 public:
  FeatureMap(GridSpec spec, std::size_t d_rnr, std::size_t d_clip);

  const GridSpec& spec() const { return spec_; }
  int size() const { return spec_.size; }
  std::size_t d_rnr() const { return d_rnr_; }
  std::size_t d_clip() const { return d_clip_; }
  std::size_t channels() const { return d_rnr_ + d_clip_; }
  std::size_t cell_count() const { return static_cast<std::size_t>(spec_.size) * spec_.size; }

  std::span<const float> cell(Cell c) const { return {cells_.data() + offset(c), channels()}; }
  std::span<float> cell(Cell c) { return {cells_.data() + offset(c), channels()}; }
  std::span<const float> rnr_block(Cell c) const { return cell(c).first(d_rnr_); }
  std::span<const float> clip_block(Cell c) const { return cell(c).subspan(d_rnr_); }
  std::span<const float> clip_block(std::size_t index) const {
    return {cells_.data() + index * channels() + d_rnr_, d_clip_};
  }

  float weight(Cell c) const { return weights_[spec_.index(c)]; }
  std::uint32_t count(Cell c) const { return counts_[spec_.index(c)]; }
  Occupancy occupancy(Cell c) const { return occupancy_.at(c); }
  bool registered(Cell c) const { return count(c) > 0; }
  bool registered(std::size_t index) const { return counts_[index] > 0; }

  std::span<const float> cells_data() const { return cells_; }
  std::span<float> cells_data() { return cells_; }
  std::span<const float> weights() const { return weights_; }
  std::span<float> weights() { return weights_; }
  std::span<const std::uint32_t> counts() const { return counts_; }
  std::span<std::uint32_t> counts() { return counts_; }
  const OccupancyGrid& occupancy() const { return occupancy_; }
  OccupancyGrid& occupancy() { return occupancy_; }

  std::size_t registered_cells() const;

  // Points that fell outside the grid during registration.
  std::uint64_t dropped_points() const { return dropped_points_; }
  void add_dropped_points(std::uint64_t n) { dropped_points_ += n; }

  // Byte-for-byte equality of spec, dims and every channel.
  bool bitwise_equal(const FeatureMap& other) const;

 private:
  std::size_t offset(Cell c) const { return spec_.index(c) * channels(); }

  GridSpec spec_;
  std::size_t d_rnr_;
  std::size_t d_clip_;
  std::vector<float> cells_;
  std::vector<float> weights_;
  std::vector<std::uint32_t> counts_;
  OccupancyGrid occupancy_;
  std::uint64_t dropped_points_ = 0;
};

}  // namespace lernr
