#include "lernr/synthetic_scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include <Eigen/Geometry>

#include "lernr/error.hpp"

namespace lernr {
namespace {

constexpr std::array<const char*, 24> kVocabulary = {
    "couch",  "chair",   "bed",      "table",   "cabinet",   "television", "sink",    "toilet",
    "fridge", "oven",    "plant",    "bookshelf", "desk",    "piano",      "bathtub", "dresser",
    "mirror", "fireplace", "washer", "stool",   "wardrobe",  "nightstand", "bench",   "aquarium"};

// Portable uniform draws from mt19937_64 (the standard distributions are not
// reproducible across standard libraries).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

 private:
  std::mt19937_64 engine_;
};

bool slab(double origin, double dir, double lo, double hi, double& t0, double& t1) {
  if (dir == 0) return origin >= lo && origin <= hi;
  double a = (lo - origin) / dir;
  double b = (hi - origin) / dir;
  if (a > b) std::swap(a, b);
  t0 = std::max(t0, a);
  t1 = std::min(t1, b);
  return t0 <= t1;
}

}  // namespace

std::optional<SceneGeometry::Hit> SceneGeometry::cast(const Eigen::Vector3d& eye, const Eigen::Vector3d& dir) const {
  constexpr double kEps = 1e-9;
  double best = std::numeric_limits<double>::infinity();
  int surface = 0;

  for (std::size_t i = 0; i < objects.size(); ++i) {
    double t0 = kEps, t1 = std::numeric_limits<double>::infinity();
    const Box& b = objects[i];
    if (slab(eye.x(), dir.x(), b.min.x(), b.max.x(), t0, t1) && slab(eye.y(), dir.y(), b.min.y(), b.max.y(), t0, t1) &&
        slab(eye.z(), dir.z(), b.min.z(), b.max.z(), t0, t1) && t0 < best) {
      best = t0;
      surface = static_cast<int>(i);
    }
  }

  if (dir.y() < 0) {
    const double t = -eye.y() / dir.y();
    const Eigen::Vector3d p = eye + t * dir;
    if (t > kEps && t < best && p.x() >= room_min.x() && p.x() <= room_max.x() && p.z() >= room_min.y() &&
        p.z() <= room_max.y()) {
      best = t;
      surface = -1;
    }
  }

  // The room is convex, so the ray leaves it through exactly one wall plane.
  double exit = std::numeric_limits<double>::infinity();
  if (dir.x() > 0) exit = std::min(exit, (room_max.x() - eye.x()) / dir.x());
  if (dir.x() < 0) exit = std::min(exit, (room_min.x() - eye.x()) / dir.x());
  if (dir.z() > 0) exit = std::min(exit, (room_max.y() - eye.z()) / dir.z());
  if (dir.z() < 0) exit = std::min(exit, (room_min.y() - eye.z()) / dir.z());
  if (std::isfinite(exit) && exit > kEps && exit < best) {
    const double y = eye.y() + exit * dir.y();
    if (y >= 0 && y <= wall_height) {
      best = exit;
      surface = -2;
    }
  }

  if (!std::isfinite(best)) return std::nullopt;
  return Hit{best, surface};
}

std::string SceneGeometry::surface_label(int surface) const {
  if (surface == -1) return "floor";
  if (surface == -2) return "wall";
  return objects.at(static_cast<std::size_t>(surface)).label;
}

bool SceneGeometry::inside_object(const Eigen::Vector3d& p, double margin) const {
  for (const Box& b : objects) {
    if (p.x() >= b.min.x() - margin && p.x() <= b.max.x() + margin && p.z() >= b.min.z() - margin &&
        p.z() <= b.max.z() + margin && p.y() <= b.max.y() + margin)
      return true;
  }
  return false;
}

RotoTranslation look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitY());
  if (right.norm() < 1e-9) throw InputError("look_at direction is parallel to the up axis");
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = r;
  m.topRightCorner<3, 1>() = eye;
  return RotoTranslation::nearest(m);
}

PosedFrame render_frame(const SceneGeometry& scene, std::string id, const CameraIntrinsics& intr,
                        const RotoTranslation& pose, double max_range, double min_coverage) {
  PosedFrame frame;
  frame.id = std::move(id);
  frame.intrinsics = intr;
  frame.pose = pose;
  frame.depth = DepthImage(intr.width, intr.height);

  const Eigen::Matrix3d r = pose.rotation();
  const Eigen::Vector3d eye = pose.translation();
  std::map<int, std::size_t> coverage;
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      const Eigen::Vector3d dir = r * Eigen::Vector3d((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
      const std::optional<SceneGeometry::Hit> hit = scene.cast(eye, dir);
      if (!hit || hit->depth > max_range) continue;
      frame.depth.at(u, v) = static_cast<float>(hit->depth);
      ++coverage[hit->surface];
    }
  }

  const double pixels = static_cast<double>(intr.width) * intr.height;
  std::vector<std::pair<std::size_t, std::string>> ranked;
  for (const auto& [surface, n] : coverage) ranked.emplace_back(n, scene.surface_label(surface));
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (const auto& [n, label] : ranked)
    if (n / pixels >= min_coverage) frame.labels.push_back(label);
  if (frame.labels.empty()) frame.labels.push_back(ranked.empty() ? "nothing" : ranked.front().second);
  return frame;
}

std::vector<std::string> negative_prompts_for(std::size_t scene_index) {
  static const std::vector<std::vector<std::string>> kSets = {
      {"wc"},
      {"the floor inside the house", "the wall inside the house"},
      {"the floor inside the house"},
      {"things", "stuff", "textures", "objects"},
      {"the wall inside the house"},
  };
  return kSets[scene_index % kSets.size()];
}

SceneEpisodes SyntheticScene::episodes() const {
  SceneEpisodes out;
  out.scene_id = id;
  out.negatives = negatives;
  for (std::size_t i = 0; i < geometry.objects.size(); ++i) {
    const Box& b = geometry.objects[i];
    Episode e;
    e.id = id + "/" + std::to_string(i);
    e.scene_id = id;
    e.target_label = b.label;
    const Eigen::Vector3d c = b.center();
    e.gt_position = {c.x(), 0.0, c.z()};
    e.negatives = negatives;
    out.episodes.push_back(std::move(e));
  }
  return out;
}

SyntheticScene generate_scene(const std::string& id, const SceneOptions& options) {
  if (options.objects < 1 || options.objects > static_cast<int>(kVocabulary.size()))
    throw InputError("object count out of range");
  Rng rng(options.seed);

  SyntheticScene scene;
  scene.id = id;
  scene.grid = options.grid;
  SceneGeometry& g = scene.geometry;
  g.room_min = options.room_offset;
  g.room_max = options.room_offset + Eigen::Vector2d(options.room_size, options.room_size);

  std::vector<std::size_t> vocab(kVocabulary.size());
  for (std::size_t i = 0; i < vocab.size(); ++i) vocab[i] = i;
  for (std::size_t i = vocab.size() - 1; i > 0; --i) std::swap(vocab[i], vocab[rng.index(i + 1)]);

  constexpr double kWallMargin = 1.0;
  constexpr double kMinSeparation = 2.2;
  for (int placed = 0, attempts = 0, restarts = 0; placed < options.objects; ++attempts) {
    if (attempts > 500) {
      if (++restarts > 200) throw Error("could not place synthetic objects; room too small");
      g.objects.clear();
      placed = 0;
      attempts = 0;
    }
    const double hx = rng.uniform(0.3, 0.5);
    const double hz = rng.uniform(0.3, 0.5);
    const double height = rng.uniform(0.5, 1.1);
    const double x = rng.uniform(g.room_min.x() + kWallMargin + hx, g.room_max.x() - kWallMargin - hx);
    const double z = rng.uniform(g.room_min.y() + kWallMargin + hz, g.room_max.y() - kWallMargin - hz);
    bool clear = true;
    for (const Box& b : g.objects)
      if (std::hypot(b.center().x() - x, b.center().z() - z) < kMinSeparation) clear = false;
    if (!clear) continue;
    g.objects.push_back({kVocabulary[vocab[static_cast<std::size_t>(placed)]], {x - hx, 0.0, z - hz}, {x + hx, height, z + hz}});
    ++placed;
  }

  const CameraIntrinsics close = CameraIntrinsics::from_fov(options.image_size, options.image_size, options.close_hfov_deg);
  const CameraIntrinsics wide = CameraIntrinsics::from_fov(options.image_size, options.image_size, options.explore_hfov_deg);

  int frame_no = 0;
  const auto next_id = [&] {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_f%04d", id.c_str(), frame_no++);
    return std::string(buf);
  };

  // Close views look down onto the top of each object from just above it, so
  // the object fills the image.
  for (const Box& b : g.objects) {
    const Eigen::Vector3d top(b.center().x(), b.max.y(), b.center().z());
    const double phase = rng.uniform(0, 2 * M_PI);
    for (int k = 0; k < options.close_views; ++k) {
      const double a = phase + 2 * M_PI * k / options.close_views;
      const Eigen::Vector3d eye = top + Eigen::Vector3d(0.15 * std::cos(a), options.close_height, 0.15 * std::sin(a));
      const double range = std::min(options.max_range, options.close_height + options.close_depth_margin);
      scene.frames.push_back(render_frame(g, next_id(), close, look_at(eye, top), range, options.min_coverage));
    }
  }

  for (int k = 0, attempts = 0; k < options.explore_views && attempts < 100000; ++attempts) {
    const Eigen::Vector3d eye(rng.uniform(g.room_min.x() + 0.5, g.room_max.x() - 0.5), 1.25,
                              rng.uniform(g.room_min.y() + 0.5, g.room_max.y() - 0.5));
    if (g.inside_object(eye, 0.3)) continue;
    const double yaw = rng.uniform(0, 2 * M_PI);
    const double pitch = 20.0 * M_PI / 180.0;
    const Eigen::Vector3d target =
        eye + Eigen::Vector3d(std::sin(yaw) * std::cos(pitch), -std::sin(pitch), std::cos(yaw) * std::cos(pitch));
    scene.frames.push_back(render_frame(g, next_id(), wide, look_at(eye, target), options.max_range,
                                        options.min_coverage));
    ++k;
  }
  return scene;
}

std::vector<PosedFrame> random_walk_trajectory(const SceneGeometry& scene, int frames, int image_size,
                                               std::uint64_t seed, double hfov_deg) {
  Rng rng(seed);
  const CameraIntrinsics intr = CameraIntrinsics::from_fov(image_size, image_size, hfov_deg);
  std::vector<PosedFrame> out;
  out.reserve(static_cast<std::size_t>(frames));
  Eigen::Vector3d eye((scene.room_min.x() + scene.room_max.x()) / 2, 1.25, (scene.room_min.y() + scene.room_max.y()) / 2);
  double yaw = 0;
  for (int k = 0; k < frames; ++k) {
    yaw += rng.uniform(-0.6, 0.6);
    Eigen::Vector3d step(0.25 * std::sin(yaw), 0, 0.25 * std::cos(yaw));
    Eigen::Vector3d proposal = eye + step;
    const bool inside_room = proposal.x() > scene.room_min.x() + 0.4 && proposal.x() < scene.room_max.x() - 0.4 &&
                             proposal.z() > scene.room_min.y() + 0.4 && proposal.z() < scene.room_max.y() - 0.4;
    if (inside_room && !scene.inside_object(proposal, 0.3))
      eye = proposal;
    else
      yaw += M_PI / 2;
    const double pitch = 15.0 * M_PI / 180.0;
    const Eigen::Vector3d target =
        eye + Eigen::Vector3d(std::sin(yaw) * std::cos(pitch), -std::sin(pitch), std::cos(yaw) * std::cos(pitch));
    char buf[32];
    std::snprintf(buf, sizeof buf, "walk_%05d", k);
    out.push_back(render_frame(scene, buf, intr, look_at(eye, target)));
  }
  return out;
}

}  // namespace lernr
