#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "lernr/error.hpp"
#include "lernr/map_builder.hpp"
#include "oracles.hpp"

using namespace lernr;

namespace {

const GridSpec kSmall{8, 0.1, RotoTranslation::identity()};

// Frames whose points stay clear of cell and band boundaries.
std::vector<PosedFrame> clean_frames(std::uint64_t& seed, int count, std::size_t d_rnr, std::size_t d_clip) {
  for (;; ++seed) {
    auto frames = fixtures::random_frames(seed, count, kSmall, d_rnr, d_clip);
    if (!oracle::register_frames(frames, kSmall, d_rnr, d_clip, {}).ambiguous) return frames;
  }
}

void expect_matches_oracle(const FeatureMap& map, const oracle::RegisteredMap& ref) {
  for (std::size_t i = 0; i < map.cell_count(); ++i) {
    const Cell c = map.spec().cell_at(i);
    ASSERT_EQ(map.count(c), ref.count[i]) << "cell " << c.x << "," << c.y;
    ASSERT_EQ(map.occupancy(c), ref.occupancy[i]) << "cell " << c.x << "," << c.y;
    double scale = 0;
    for (double v : ref.mean[i]) scale = std::max(scale, std::abs(v));
    for (std::size_t k = 0; k < map.channels(); ++k)
      ASSERT_LE(std::abs(map.cell(c)[k] - ref.mean[i][k]), 1e-5 * std::max(std::abs(ref.mean[i][k]), scale))
          << "cell " << c.x << "," << c.y << " channel " << k;
  }
  EXPECT_EQ(map.dropped_points(), ref.dropped);
}

}  // namespace

TEST(HeightClassification, Bands) {
  const OccupancyParams p;
  EXPECT_EQ(classify_height(0.0, p), PointClass::floor);
  EXPECT_EQ(classify_height(0.5, p), PointClass::obstacle);
  EXPECT_EQ(classify_height(2.5, p), PointClass::other);
  EXPECT_EQ(classify_height(-0.5, p), PointClass::other);
  OccupancyParams bad;
  bad.obstacle_band = {0.05, 1.0};
  EXPECT_THROW(bad.validate(), InputError);
}

TEST(Occupancy, ObstacleNeverReverts) {
  EXPECT_EQ(merge_occupancy(Occupancy::unknown, PointClass::floor), Occupancy::free);
  EXPECT_EQ(merge_occupancy(Occupancy::unknown, PointClass::other), Occupancy::free);
  EXPECT_EQ(merge_occupancy(Occupancy::free, PointClass::obstacle), Occupancy::obstacle);
  EXPECT_EQ(merge_occupancy(Occupancy::obstacle, PointClass::floor), Occupancy::obstacle);
  OccupancyGrid grid(4);
  const std::vector<HeightSample> samples = {{{1, 1}, 0.0}, {{1, 1}, 1.0}, {{1, 1}, 0.0}, {{2, 2}, 3.0}};
  derive_occupancy(samples, {}, grid);
  EXPECT_EQ(grid.at({1, 1}), Occupancy::obstacle);
  EXPECT_EQ(grid.at({2, 2}), Occupancy::free);
  EXPECT_EQ(grid.at({0, 0}), Occupancy::unknown);
}

TEST(Registration, MatchesBruteForceWeightedMeans) {
  std::uint64_t seed = 100;
  for (int trial = 0; trial < 40; ++trial, ++seed) {
    const int n = 1 + trial % 5;
    const auto frames = clean_frames(seed, n, 4, 12);
    const FeatureMap map = build_map(frames, kSmall);
    expect_matches_oracle(map, oracle::register_frames(frames, kSmall, 4, 12, {}));
  }
}

TEST(Registration, CountConservation) {
  std::uint64_t seed = 900;
  const auto frames = clean_frames(seed, 5, 4, 12);
  BuildStats stats;
  const FeatureMap map = build_map(frames, kSmall, {}, &stats);
  const auto counts = map.counts();
  const std::uint64_t registered = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  EXPECT_EQ(registered + map.dropped_points(), stats.valid_points);
  EXPECT_EQ(stats.frames, 5u);
  EXPECT_EQ(stats.registered_cells, map.registered_cells());
  const auto weights = map.weights();
  EXPECT_DOUBLE_EQ(std::accumulate(weights.begin(), weights.end(), 0.0), static_cast<double>(registered));
}

TEST(Registration, FrameOrderDoesNotMatter) {
  std::uint64_t seed = 300;
  auto frames = clean_frames(seed, 5, 4, 12);
  const FeatureMap a = build_map(frames, kSmall);
  std::mt19937_64 rng(seed);
  for (int k = 0; k < 5; ++k) {
    std::shuffle(frames.begin(), frames.end(), rng);
    const FeatureMap b = build_map(frames, kSmall);
    ASSERT_TRUE(a.occupancy() == b.occupancy());
    for (std::size_t i = 0; i < a.cells_data().size(); ++i) ASSERT_NEAR(a.cells_data()[i], b.cells_data()[i], 1e-5);
  }
}

TEST(Registration, ParallelBatchEqualsSerialFold) {
  std::uint64_t seed = 500;
  const auto frames = fixtures::random_frames(seed, 40, kSmall, 4, 12);
  FeatureMap serial(kSmall, 4, 12);
  for (const PosedFrame& f : frames) register_frame(serial, f);
  BuildOptions threaded;
  threaded.threads = 4;
  const FeatureMap parallel = build_map(frames, kSmall, threaded);
  EXPECT_TRUE(serial.bitwise_equal(parallel));
}

TEST(Registration, LatestModeKeepsLastFrame) {
  const GridSpec spec{4, 1.0, RotoTranslation::identity()};
  Eigen::Matrix3d down;
  down << 1, 0, 0, 0, 0, -1, 0, 1, 0;
  std::vector<PosedFrame> frames(2);
  for (int i = 0; i < 2; ++i) {
    frames[i].id = "f" + std::to_string(i);
    frames[i].intrinsics = CameraIntrinsics::from_fov(1, 1, 10.0);
    frames[i].pose = RotoTranslation::from_parts(down, {1.5, 1.0, 1.5});
    frames[i].depth = DepthImage(1, 1, 1.0f);
    frames[i].f_clip = Embedding(std::vector<float>{i == 0 ? 1.0f : 0.0f, i == 0 ? 0.0f : 1.0f});
    frames[i].f_rnr = Embedding(std::vector<float>{1.0f});
  }
  BuildOptions latest;
  latest.aggregation = Aggregation::latest;
  const FeatureMap a = build_map(frames, spec, latest);
  EXPECT_EQ(a.clip_block(Cell{1, 1})[1], 1.0f);
  EXPECT_EQ(a.count({1, 1}), 2u);
  const FeatureMap m = build_map(frames, spec);
  EXPECT_FLOAT_EQ(m.clip_block(Cell{1, 1})[0], 0.5f);
  EXPECT_EQ(m.occupancy({1, 1}), Occupancy::free);
}

TEST(Registration, RejectsMismatchedFrames) {
  std::uint64_t seed = 1;
  auto frames = fixtures::random_frames(seed, 2, kSmall, 4, 12);
  FeatureMap map(kSmall, 4, 8);
  EXPECT_THROW(register_frame(map, frames[0]), FrameError);
  frames[1].depth = DepthImage(2, 2);
  FeatureMap ok(kSmall, 4, 12);
  EXPECT_THROW(register_frame(ok, frames[1]), FrameError);
  EXPECT_THROW(build_map(std::span<const PosedFrame>{}, kSmall), InputError);
}

TEST(Registration, PointsOutsideGridAreDropped) {
  const GridSpec spec{2, 0.1, RotoTranslation::identity()};
  PosedFrame f;
  f.intrinsics = CameraIntrinsics::from_fov(1, 1, 10.0);
  f.pose = RotoTranslation::translation_only({5.0, 0.0, 5.0});
  f.depth = DepthImage(1, 1, 1.0f);
  f.f_clip = Embedding(std::vector<float>{1.0f});
  f.f_rnr = Embedding(std::vector<float>{1.0f});
  BuildStats stats;
  const FeatureMap map = build_map(std::span<const PosedFrame>(&f, 1), spec, {}, &stats);
  EXPECT_EQ(map.dropped_points(), 1u);
  EXPECT_EQ(map.registered_cells(), 0u);
  EXPECT_EQ(stats.dropped_points, 1u);
}

TEST(CenteredOrigin, PutsPoseAtGridCentre) {
  GridSpec spec{256, 0.1, RotoTranslation::identity()};
  spec.origin = centered_origin(RotoTranslation::translation_only({3.2, 1.5, -7.1}), spec);
  EXPECT_EQ(world_to_grid({3.2, 1.5, -7.1}, spec), (Cell{128, 128}));
}
