#include "lernr/feature_map.hpp"

#include <algorithm>
#include <cstring>

#include "lernr/error.hpp"

namespace lernr {

FeatureMap::FeatureMap(GridSpec spec, std::size_t d_rnr, std::size_t d_clip)
    : spec_(std::move(spec)), d_rnr_(d_rnr), d_clip_(d_clip) {
  spec_.validate();
  if (d_rnr_ == 0 || d_clip_ == 0) throw InputError("feature map channel dimensions must be positive");
  const std::size_t n = cell_count();
  cells_.assign(n * channels(), 0.0f);
  weights_.assign(n, 0.0f);
  counts_.assign(n, 0);
  occupancy_ = OccupancyGrid(spec_.size);
}

std::size_t FeatureMap::registered_cells() const {
  return static_cast<std::size_t>(std::count_if(counts_.begin(), counts_.end(), [](std::uint32_t c) { return c > 0; }));
}

namespace {

template <class T>
bool same_bytes(const std::vector<T>& a, std::span<const T> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

}  // namespace

bool FeatureMap::bitwise_equal(const FeatureMap& other) const {
  if (spec_.size != other.spec_.size || d_rnr_ != other.d_rnr_ || d_clip_ != other.d_clip_) return false;
  if (std::memcmp(&spec_.resolution, &other.spec_.resolution, sizeof(double)) != 0) return false;
  const auto a = spec_.origin.row_major();
  const auto b = other.spec_.origin.row_major();
  if (std::memcmp(a.data(), b.data(), sizeof(a)) != 0) return false;
  return same_bytes(cells_, other.cells_data()) && same_bytes(weights_, other.weights()) &&
         same_bytes(counts_, other.counts()) && occupancy_ == other.occupancy_;
}

}  // namespace lernr
