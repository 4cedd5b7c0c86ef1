#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lernr/eval.hpp"
#include "lernr/frame.hpp"
#include "lernr/geometry.hpp"

namespace lernr {

// Ray-cast box world used to generate test, benchmark and demo data: a floor
// at height 0, four walls and labelled axis-aligned boxes.
struct Box {
  std::string label;
  Eigen::Vector3d min;
  Eigen::Vector3d max;

  Eigen::Vector3d center() const { return (min + max) / 2.0; }
};

struct SceneGeometry {
  Eigen::Vector2d room_min{0, 0};  // (x, z)
  Eigen::Vector2d room_max{8, 8};
  double wall_height = 2.5;
  std::vector<Box> objects;

  struct Hit {
    double depth;  // along the camera forward axis
    int surface;   // -1 floor, -2 wall, >= 0 object index
  };
  std::optional<Hit> cast(const Eigen::Vector3d& eye, const Eigen::Vector3d& dir) const;
  std::string surface_label(int surface) const;
  bool inside_object(const Eigen::Vector3d& p, double margin = 0.0) const;
};

// Camera-to-world pose looking from `eye` at `target` (camera y down).
RotoTranslation look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target);

// Renders depth (0 beyond max_range or on a miss) and labels the frame with
// every surface covering at least `min_coverage` of the image, most covered
// first.
PosedFrame render_frame(const SceneGeometry& scene, std::string id, const CameraIntrinsics& intr,
                        const RotoTranslation& pose, double max_range = 10.0, double min_coverage = 0.1);

struct SceneOptions {
  std::uint64_t seed = 1;
  int objects = 5;
  double room_size = 8.0;
  Eigen::Vector2d room_offset{2.4, 2.4};
  int image_size = 64;
  int close_views = 8;
  int explore_views = 48;
  double close_hfov_deg = 50.0;
  double close_height = 0.6;        // camera height above the object top
  double close_depth_margin = 0.6;
  double explore_hfov_deg = 90.0;
  double max_range = 10.0;
  double min_coverage = 0.1;
  GridSpec grid{128, 0.1, RotoTranslation::identity()};
};

struct SyntheticScene {
  std::string id;
  SceneGeometry geometry;
  GridSpec grid;
  std::vector<PosedFrame> frames;  // labels set, features not attached
  std::vector<std::string> negatives;

  SceneEpisodes episodes() const;
};

// A room with `objects` distinct labelled boxes, close-up views of every object
// and free exploration views. Deterministic in `options.seed`.
SyntheticScene generate_scene(const std::string& id, const SceneOptions& options);

// Free-roaming trajectory of `frames` views through `scene`.
std::vector<PosedFrame> random_walk_trajectory(const SceneGeometry& scene, int frames, int image_size,
                                               std::uint64_t seed, double hfov_deg = 90.0);

// Per-scene negative prompt sets, cycling through background descriptions.
std::vector<std::string> negative_prompts_for(std::size_t scene_index);

}  // namespace lernr
