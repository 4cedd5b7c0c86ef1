#include "lernr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lernr/error.hpp"
#include "lernr/query.hpp"

namespace lernr {

using nlohmann::json;

double planar_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const GridSpec& spec) {
  const Eigen::Vector3d pa = spec.origin.apply(a);
  const Eigen::Vector3d pb = spec.origin.apply(b);
  return std::hypot(pa.x() - pb.x(), pa.z() - pb.z());
}

EvalResult evaluate_episode(const FeatureMap& map, const Episode& episode, bool use_negatives,
                            const EmbeddingProvider& provider, double temperature) {
  if (!(episode.success_radius > 0)) throw InputError("success radius must be positive");
  QuerySpec spec{episode.target_label, use_negatives ? episode.negatives : std::vector<std::string>{}, temperature};
  const SimilarityField field = contrast_field(map, spec, provider);

  EvalResult result;
  try {
    result.predicted = argmax_goal(field, map.spec()).world_pose.translation();
  } catch (const NoGoalError&) {
    const double half = map.spec().size * map.spec().resolution / 2.0;
    result.no_goal = true;
    result.predicted = map.spec().origin.inverse().apply({half, 0.0, half});
  }
  result.distance = planar_distance(result.predicted, episode.gt_position, map.spec());
  result.dts = std::max(result.distance - episode.success_radius, 0.0);
  result.success = !result.no_goal && result.distance <= episode.success_radius;
  return result;
}

std::vector<SceneEpisodes> parse_episodes(const json& doc) {
  if (!doc.is_array()) throw InputError("episode file must hold a JSON array of scenes");
  std::vector<SceneEpisodes> scenes;
  for (const json& s : doc) {
    SceneEpisodes scene;
    scene.scene_id = s.at("scene_id").get<std::string>();
    scene.negatives = s.value("negatives", std::vector<std::string>{});
    std::size_t n = 0;
    for (const json& e : s.at("episodes")) {
      Episode ep;
      ep.id = e.contains("id") ? e.at("id").get<std::string>() : scene.scene_id + "/" + std::to_string(n);
      ep.scene_id = scene.scene_id;
      ep.target_label = e.at("target_label").get<std::string>();
      const auto gt = e.at("gt_position").get<std::vector<double>>();
      if (gt.size() != 3) throw InputError("gt_position needs 3 coordinates in episode " + ep.id);
      ep.gt_position = {gt[0], gt[1], gt[2]};
      ep.negatives = scene.negatives;
      ep.success_radius = e.value("success_radius", 1.0);
      scene.episodes.push_back(std::move(ep));
      ++n;
    }
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

std::vector<SceneEpisodes> load_episodes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open episode file " + path.string());
  try {
    return parse_episodes(json::parse(in));
  } catch (const json::exception& e) {
    throw InputError("malformed episode file " + path.string() + ": " + e.what());
  }
}

json episodes_to_json(std::span<const SceneEpisodes> scenes) {
  json doc = json::array();
  for (const SceneEpisodes& s : scenes) {
    json episodes = json::array();
    for (const Episode& e : s.episodes)
      episodes.push_back({{"id", e.id},
                          {"target_label", e.target_label},
                          {"gt_position", {e.gt_position.x(), e.gt_position.y(), e.gt_position.z()}},
                          {"success_radius", e.success_radius}});
    doc.push_back({{"scene_id", s.scene_id}, {"negatives", s.negatives}, {"episodes", episodes}});
  }
  return doc;
}

BenchmarkReport run_benchmark(std::span<const SceneEpisodes> scenes, const MapLookup& maps,
                              const EmbeddingProvider& provider, NegativeMode mode, double temperature) {
  std::vector<const SceneEpisodes*> ordered;
  for (const SceneEpisodes& s : scenes) ordered.push_back(&s);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const SceneEpisodes* a, const SceneEpisodes* b) { return a->scene_id < b->scene_id; });

  std::vector<bool> modes;
  if (mode != NegativeMode::on) modes.push_back(false);
  if (mode != NegativeMode::off) modes.push_back(true);

  BenchmarkReport report;
  for (const SceneEpisodes* scene : ordered) {
    const FeatureMap* map = maps(scene->scene_id);
    for (bool negatives : modes) {
      ReportRow row;
      row.scene = scene->scene_id;
      row.negatives = negatives;
      if (!map) {
        row.warning = "no map for scene";
      } else if (scene->episodes.empty()) {
        row.warning = "no episodes";
      } else {
        std::vector<const Episode*> episodes;
        for (const Episode& e : scene->episodes) episodes.push_back(&e);
        std::stable_sort(episodes.begin(), episodes.end(), [](const Episode* a, const Episode* b) { return a->id < b->id; });
        double success = 0, dts = 0;
        for (const Episode* e : episodes) {
          const EvalResult r = evaluate_episode(*map, *e, negatives, provider, temperature);
          success += r.success ? 1.0 : 0.0;
          dts += r.dts;
          row.no_goal += r.no_goal ? 1 : 0;
        }
        row.episodes = episodes.size();
        row.success = success / static_cast<double>(row.episodes);
        row.dts = dts / static_cast<double>(row.episodes);
      }
      report.rows.push_back(std::move(row));
    }
  }

  for (bool negatives : modes) {
    ReportRow avg;
    avg.scene = "Average";
    avg.negatives = negatives;
    std::size_t scenes_used = 0;
    for (const ReportRow& r : report.rows) {
      if (r.negatives != negatives || !r.warning.empty()) continue;
      avg.success += r.success;
      avg.dts += r.dts;
      avg.episodes += r.episodes;
      avg.no_goal += r.no_goal;
      ++scenes_used;
    }
    if (scenes_used > 0) {
      avg.success /= static_cast<double>(scenes_used);
      avg.dts /= static_cast<double>(scenes_used);
    } else {
      avg.warning = "no scenes evaluated";
    }
    report.average.push_back(std::move(avg));
  }
  return report;
}

namespace {

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width, std::size_t visible) {
  return s + std::string(width > visible ? width - visible : 0, ' ');
}

}  // namespace

std::string BenchmarkReport::to_csv() const {
  std::ostringstream out;
  out << "scene,negative_prompts,success,dts_m,episodes,no_goal,warning\n";
  char buf[64];
  const auto emit = [&](const ReportRow& r) {
    out << r.scene << ',' << (r.negatives ? "on" : "off") << ',';
    if (r.warning.empty()) {
      std::snprintf(buf, sizeof buf, "%.6f,%.6f", r.success, r.dts);
      out << buf;
    } else {
      out << ',';
    }
    out << ',' << r.episodes << ',' << r.no_goal << ',' << r.warning << '\n';
  };
  for (const ReportRow& r : rows) emit(r);
  for (const ReportRow& r : average) emit(r);
  return out.str();
}

std::string BenchmarkReport::to_table() const {
  // Column text is padded by visible width; the arrows and marks are
  // multi-byte UTF-8.
  constexpr std::size_t kScene = 14, kNeg = 18, kSucc = 11, kDts = 9;
  std::ostringstream out;
  const auto line = [&] {
    out << '+' << std::string(kScene + 2, '-') << '+' << std::string(kNeg + 2, '-') << '+'
        << std::string(kSucc + 2, '-') << '+' << std::string(kDts + 2, '-') << "+\n";
  };
  const auto row = [&](const std::string& scene, std::size_t scene_vis, const std::string& neg, std::size_t neg_vis,
                       const std::string& succ, std::size_t succ_vis, const std::string& dts, std::size_t dts_vis) {
    out << "| " << pad(scene, kScene, scene_vis) << " | " << pad(neg, kNeg, neg_vis) << " | "
        << pad(succ, kSucc, succ_vis) << " | " << pad(dts, kDts, dts_vis) << " |\n";
  };
  const auto data = [&](const ReportRow& r) {
    const std::string mark = r.negatives ? "✓" : "✗";
    if (r.warning.empty())
      row(r.scene, r.scene.size(), mark, 1, fixed2(r.success), 4, fixed2(r.dts), 4);
    else
      row(r.scene, r.scene.size(), mark, 1, "-", 1, "-", 1);
  };

  line();
  row("Scene", 5, "Negative Prompts", 16, "Success ↑", 9, "DTS ↓", 5);
  line();
  for (const ReportRow& r : rows) data(r);
  line();
  for (const ReportRow& r : average) data(r);
  line();
  return out.str();
}

}  // namespace lernr
