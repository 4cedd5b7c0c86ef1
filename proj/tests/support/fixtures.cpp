#include "fixtures.hpp"

#include <atomic>
#include <cmath>

#include <Eigen/Geometry>
#include <unistd.h>

namespace fixtures {

using namespace lernr;

std::filesystem::path data_dir() { return LERNR_TEST_DATA_DIR; }

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("lernr-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

Embedding random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> normal;
  std::vector<float> v(dim);
  for (float& x : v) x = static_cast<float>(normal(rng));
  return Embedding(std::move(v)).normalized();
}

RotoTranslation random_pose(std::mt19937_64& rng, double spread) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Eigen::Quaterniond q = Eigen::Quaterniond(u(rng), u(rng), u(rng), u(rng)).normalized();
  return RotoTranslation::from_parts(q.toRotationMatrix(), spread * Eigen::Vector3d(u(rng), u(rng), u(rng)));
}

void paint(FeatureMap& map, Cell cell, const Embedding& clip, const Embedding& rnr, float weight, Occupancy occupancy) {
  std::span<float> v = map.cell(cell);
  std::copy(rnr.values().begin(), rnr.values().end(), v.begin());
  std::copy(clip.values().begin(), clip.values().end(), v.begin() + static_cast<std::ptrdiff_t>(map.d_rnr()));
  const std::size_t i = map.spec().index(cell);
  map.weights()[i] = weight;
  map.counts()[i] = static_cast<std::uint32_t>(std::max(1.0f, weight));
  map.occupancy().set(cell, occupancy);
}

FeatureMap random_map(std::uint64_t seed, int size, std::size_t d_rnr, std::size_t d_clip, double fill) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GridSpec spec{size, 0.05 + 0.2 * u(rng), random_pose(rng)};
  FeatureMap map(spec, d_rnr, d_clip);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (u(rng) >= fill) continue;
      const float w = static_cast<float>(1 + std::floor(50 * u(rng)));
      paint(map, {x, y}, random_unit(rng, d_clip), random_unit(rng, d_rnr), w,
            u(rng) < 0.2 ? Occupancy::obstacle : Occupancy::free);
    }
  }
  map.add_dropped_points(static_cast<std::uint64_t>(1000 * u(rng)));
  return map;
}

OccupancyGrid random_grid(std::uint64_t seed, int size, double obstacle_share) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  OccupancyGrid grid(size, Occupancy::free);
  for (Occupancy& o : grid.cells()) o = u(rng) < obstacle_share ? Occupancy::obstacle : Occupancy::free;
  return grid;
}

std::vector<PosedFrame> random_frames(std::uint64_t seed, int count, const GridSpec& spec, std::size_t d_rnr,
                                      std::size_t d_clip) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double extent = spec.size * spec.resolution;
  // Camera z along world -Y, camera y along world +Z.
  Eigen::Matrix3d down;
  down << 1, 0, 0, 0, 0, -1, 0, 1, 0;
  std::vector<PosedFrame> frames;
  for (int i = 0; i < count; ++i) {
    PosedFrame f;
    f.id = "f" + std::to_string(i);
    f.intrinsics = CameraIntrinsics::from_fov(6, 5, 30.0 + 20.0 * u(rng));
    const Eigen::Matrix3d r = Eigen::AngleAxisd(2 * M_PI * u(rng), Eigen::Vector3d::UnitY()).toRotationMatrix() *
                              Eigen::AngleAxisd(0.2 * (u(rng) - 0.5), Eigen::Vector3d::UnitX()).toRotationMatrix() * down;
    const Eigen::Vector3d eye(extent * (0.3 + 0.4 * u(rng)), 1.0 + 0.5 * u(rng), extent * (0.3 + 0.4 * u(rng)));
    f.pose = RotoTranslation::from_parts(r, eye);
    f.depth = DepthImage(6, 5);
    for (float& d : f.depth.values) d = u(rng) < 0.1 ? 0.0f : static_cast<float>(0.5 + 1.2 * u(rng));
    f.f_clip = random_unit(rng, d_clip);
    f.f_rnr = random_unit(rng, d_rnr);
    frames.push_back(std::move(f));
  }
  return frames;
}

FeatureMap planted_map(const SyntheticProvider& provider, int size,
                       const std::vector<std::pair<Cell, std::string>>& objects, int r,
                       const std::vector<std::string>& background) {
  FeatureMap map(GridSpec{size, 0.1, RotoTranslation::identity()}, provider.rnr_dim(), provider.clip_dim());
  const Embedding bg = provider.embed_labels(background);
  const Embedding rnr = synthetic_scheme(std::vector<std::string>{"rnr/background"}, provider.rnr_dim());
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) paint(map, {x, y}, bg, rnr, 4.0f, Occupancy::free);
  for (const auto& [c, label] : objects) {
    const Embedding e = provider.embed_labels(std::vector<std::string>{label});
    for (int y = c.y - r; y <= c.y + r; ++y)
      for (int x = c.x - r; x <= c.x + r; ++x)
        if (map.spec().contains({x, y})) paint(map, {x, y}, e, rnr, 4.0f, Occupancy::obstacle);
  }
  return map;
}

DistractorFixture distractor_fixture(const SyntheticProvider& provider) {
  DistractorFixture fx{FeatureMap(GridSpec{16, 0.1, RotoTranslation::identity()}, provider.rnr_dim(), provider.clip_dim()),
                       {11, 4},
                       {3, 9},
                       "couch",
                       {"the floor inside the house"}};
  const Embedding rnr = synthetic_scheme(std::vector<std::string>{"rnr/distractor"}, provider.rnr_dim());
  const Embedding bg = provider.embed_labels(std::vector<std::string>{"floor", "wall"});
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) paint(fx.map, {x, y}, bg, rnr);
  paint(fx.map, fx.target, provider.embed_labels(std::vector<std::string>{"couch", "pillow", "cushion"}), rnr);
  paint(fx.map, fx.distractor, provider.embed_labels(std::vector<std::string>{"couch", "floor"}), rnr);
  return fx;
}

FeatureMap two_peak_map(const SyntheticProvider& provider, Cell a, Cell b) {
  return planted_map(provider, 32, {{a, "chair"}, {b, "chair"}}, 0);
}

}  // namespace fixtures
