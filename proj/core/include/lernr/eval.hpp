#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "lernr/feature_map.hpp"

namespace lernr {

class EmbeddingProvider;

struct Episode {
  std::string id;
  std::string scene_id;
  std::string target_label;
  Eigen::Vector3d gt_position = Eigen::Vector3d::Zero();
  std::vector<std::string> negatives;
  double success_radius = 1.0;
};

struct EvalResult {
  bool success = false;
  double dts = 0;  // max(distance - success_radius, 0)
  Eigen::Vector3d predicted = Eigen::Vector3d::Zero();
  double distance = 0;  // planar, in the map plane
  bool no_goal = false;
};

// Predicts the target location from the map and scores it against the ground
// truth. When the map yields no goal the result is a failure flagged
// `no_goal`, measured from the map centre.
EvalResult evaluate_episode(const FeatureMap& map, const Episode& episode, bool use_negatives,
                            const EmbeddingProvider& provider, double temperature = 0.07);

// Distance between two world points after projecting both onto the map plane.
double planar_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const GridSpec& spec);

struct SceneEpisodes {
  std::string scene_id;
  std::vector<Episode> episodes;
  std::vector<std::string> negatives;
};

// Parses [{scene_id, negatives:[...], episodes:[{id?, target_label,
// gt_position:[x,y,z], success_radius?}]}]. Scene negatives are copied onto
// every episode.
std::vector<SceneEpisodes> parse_episodes(const nlohmann::json& doc);
std::vector<SceneEpisodes> load_episodes(const std::filesystem::path& path);
nlohmann::json episodes_to_json(std::span<const SceneEpisodes> scenes);

struct ReportRow {
  std::string scene;
  bool negatives = false;
  double success = 0;   // mean of per-episode success
  double dts = 0;       // mean of per-episode DTS
  std::size_t episodes = 0;
  std::size_t no_goal = 0;
  std::string warning;  // non-empty for skipped scenes
};

struct BenchmarkReport {
  std::vector<ReportRow> rows;     // sorted by scene, negatives off before on
  std::vector<ReportRow> average;  // unweighted mean of the scene rows per mode

  std::string to_csv() const;
  std::string to_table() const;
};

enum class NegativeMode { off, on, both };

// Returns nullptr when no map exists for a scene.
using MapLookup = std::function<const FeatureMap*(const std::string& scene_id)>;

BenchmarkReport run_benchmark(std::span<const SceneEpisodes> scenes, const MapLookup& maps,
                              const EmbeddingProvider& provider, NegativeMode mode = NegativeMode::both,
                              double temperature = 0.07);

}  // namespace lernr
