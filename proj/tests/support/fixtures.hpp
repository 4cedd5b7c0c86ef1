#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lernr/feature_map.hpp"
#include "lernr/frame.hpp"
#include "lernr/providers.hpp"

namespace fixtures {

std::filesystem::path data_dir();

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

lernr::Embedding random_unit(std::mt19937_64& rng, std::size_t dim);
lernr::RotoTranslation random_pose(std::mt19937_64& rng, double spread = 5.0);

// Writes one registered cell directly.
void paint(lernr::FeatureMap& map, lernr::Cell cell, const lernr::Embedding& clip, const lernr::Embedding& rnr,
           float weight = 1.0f, lernr::Occupancy occupancy = lernr::Occupancy::free);

// Random contents: a `fill` share of cells registered with random vectors,
// weights, counts and occupancy; random origin.
lernr::FeatureMap random_map(std::uint64_t seed, int size, std::size_t d_rnr, std::size_t d_clip, double fill = 0.7);

lernr::OccupancyGrid random_grid(std::uint64_t seed, int size, double obstacle_share);

// Downward-looking cameras over a small grid with random depth, carrying
// random unit features. The grid must use an identity origin.
std::vector<lernr::PosedFrame> random_frames(std::uint64_t seed, int count, const lernr::GridSpec& spec,
                                             std::size_t d_rnr, std::size_t d_clip);

// Every cell registered and free with the background label; each object
// occupies a (2r+1)^2 obstacle block with its label's embedding.
lernr::FeatureMap planted_map(const lernr::SyntheticProvider& provider, int size,
                              const std::vector<std::pair<lernr::Cell, std::string>>& objects, int r = 0,
                              const std::vector<std::string>& background = {"floor", "wall"});

// A target cell whose language vector mixes the object with related words and
// a distractor cell mixing the object with the floor. Plain cosine prefers
// the distractor; floor negatives push the target ahead.
struct DistractorFixture {
  lernr::FeatureMap map;
  lernr::Cell target;
  lernr::Cell distractor;
  std::string positive;
  std::vector<std::string> negatives;
};
DistractorFixture distractor_fixture(const lernr::SyntheticProvider& provider);

// Two separated objects with the same label on a 32x32 map.
lernr::FeatureMap two_peak_map(const lernr::SyntheticProvider& provider, lernr::Cell a = {6, 8},
                               lernr::Cell b = {24, 20});

}  // namespace fixtures
