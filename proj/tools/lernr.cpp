#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <pthread.h>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lernr/affordance.hpp"
#include "lernr/error.hpp"
#include "lernr/eval.hpp"
#include "lernr/io.hpp"
#include "lernr/map_builder.hpp"
#include "lernr/planner.hpp"
#include "lernr/providers.hpp"
#include "lernr/query.hpp"
#include "lernr/service.hpp"
#include "lernr/synthetic_scene.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lernr;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitDomain = 3;

struct ProviderFlags {
  std::string kind = "synthetic";
  std::string endpoint;
  std::string features;
  std::size_t d_clip = 512;
  std::size_t d_rnr = 32;
  std::size_t cache = 4096;

  void add_to(CLI::App& app) {
    app.add_option("--provider", kind, "Embedding provider")
        ->check(CLI::IsMember({"synthetic", "file", "remote"}))
        ->capture_default_str();
    app.add_option("--endpoint", endpoint, "Remote embedding service base URL");
    app.add_option("--features", features, "JSONL feature manifest for the file provider");
    app.add_option("--d-clip", d_clip, "Language-aligned feature size")->capture_default_str();
    app.add_option("--d-rnr", d_rnr, "Visual feature size")->capture_default_str();
    app.add_option("--cache", cache, "Provider cache entries (0 disables)")->capture_default_str();
  }

  std::shared_ptr<const EmbeddingProvider> make() const {
    ProviderConfig config;
    config.kind = ProviderConfig::parse_kind(kind);
    config.endpoint = endpoint;
    config.features_manifest = features;
    config.d_clip = d_clip;
    config.d_rnr = d_rnr;
    config.cache_capacity = cache;
    return make_provider(config);
  }
};

Cell parse_cell(const std::string& text) {
  int x = 0, y = 0;
  char comma = 0;
  std::istringstream in(text);
  if (!(in >> x >> comma >> y) || comma != ',' || !in.eof()) throw InputError("expected a cell as x,y, got '" + text + "'");
  return {x, y};
}

void write_text(const fs::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << data;
  if (!out) throw Error("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void print_json(const json& doc, bool pretty) { std::cout << (pretty ? doc.dump(2) : doc.dump()) << "\n"; }

// ---- build -------------------------------------------------------------

struct BuildFlags {
  std::string manifest;
  std::string out;
  int grid_size = 256;
  double resolution = 0.1;
  std::string aggregation = "mean";
  bool lenient = false;
  unsigned threads = 0;
  ProviderFlags provider;
};

int run_build(const BuildFlags& f) {
  if (!fs::exists(f.manifest)) throw InputError("manifest not found: " + f.manifest);
  TrajectoryOptions topt;
  topt.strict = !f.lenient;
  TrajectoryReader reader(f.manifest, topt);
  std::vector<PosedFrame> frames;
  while (auto frame = reader.next()) frames.push_back(std::move(*frame));
  if (frames.empty()) throw InputError("manifest has no frames");

  const auto provider = f.provider.make();
  const auto t0 = std::chrono::steady_clock::now();
  for (PosedFrame& frame : frames) attach_features(frame, *provider);
  GridSpec spec{f.grid_size, f.resolution, RotoTranslation::identity()};
  spec.validate();
  spec.origin = centered_origin(frames.front().pose, spec);
  BuildOptions options;
  options.aggregation = f.aggregation == "latest" ? Aggregation::latest : Aggregation::mean;
  options.threads = f.threads;
  BuildStats stats;
  const FeatureMap map = build_map(frames, spec, options, &stats);
  stats.build_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  save_map_file(map, f.out);

  json out = stats_to_json(stats);
  out["skipped_frames"] = reader.skipped();
  out["out"] = f.out;
  out["size_M"] = map.size();
  out["channels"] = map.channels();
  print_json(out, false);
  return 0;
}

// ---- query / candidates ------------------------------------------------

struct QueryFlags {
  std::string map;
  std::string prompt;
  std::vector<std::string> negatives;
  double temperature = 0.07;
  double threshold = 0.6;
  int radius = 3;
  std::string heatmap_out;
  bool json_out = false;
  ProviderFlags provider;
};

int run_query(const QueryFlags& f) {
  if (!fs::exists(f.map)) throw InputError("map not found: " + f.map);
  const FeatureMap map = load_map_file(f.map);
  const auto provider = f.provider.make();
  QuerySpec spec{f.prompt, f.negatives, f.temperature};
  spec.validate();

  const SimilarityField field = contrast_field(map, spec, *provider);
  const std::vector<Candidate> candidates = extract_candidates(field, map.spec(), f.threshold, f.radius);
  if (!f.heatmap_out.empty()) {
    const HeatmapFormat fmt = fs::path(f.heatmap_out).extension() == ".csv" ? HeatmapFormat::csv : HeatmapFormat::pgm;
    write_text(f.heatmap_out, export_heatmap(field, fmt));
  }

  const std::string map_id = fs::path(f.map).stem().string();
  json out = query_response(map_id, spec, candidates);
  out["mode"] = spec.negatives.empty() ? "cosine" : "contrast";
  try {
    const Candidate goal = argmax_goal(field, map.spec());
    out["goal"] = candidate_to_json(goal, candidate_id(map_id, spec, goal.cell));
  } catch (const NoGoalError&) {
    out["goal"] = nullptr;
  }

  if (f.json_out) {
    print_json(out, false);
  } else {
    std::printf("%s mode, %zu candidate(s)\n", out["mode"].get<std::string>().c_str(), candidates.size());
    for (const Candidate& c : candidates) std::printf("  cell (%d, %d)  score %.6f\n", c.cell.x, c.cell.y, c.score);
    if (out["goal"].is_null()) std::printf("no goal: map has no registered cells\n");
  }
  return out["goal"].is_null() ? kExitDomain : 0;
}

// ---- plan --------------------------------------------------------------

struct PlanFlags {
  std::string map;
  std::string start;
  std::string goal;
  std::string candidate_json;
  int snap_radius = 10;
};

int run_plan(const PlanFlags& f) {
  if (!fs::exists(f.map)) throw InputError("map not found: " + f.map);
  if (f.goal.empty() == f.candidate_json.empty()) throw InputError("give exactly one of --goal or --candidate-json");
  const FeatureMap map = load_map_file(f.map);
  const Cell start = parse_cell(f.start);

  Cell target;
  if (!f.goal.empty()) {
    target = parse_cell(f.goal);
  } else {
    json doc = json::parse(read_text(f.candidate_json), nullptr, false);
    if (doc.is_discarded()) throw InputError("candidate file is not JSON");
    if (doc.contains("candidates")) {
      if (doc["candidates"].empty()) throw InputError("candidate file has no candidates");
      doc = doc["candidates"][0];
    }
    target = cell_from_json(doc.at("cell"));
  }

  const Cell goal = nearest_traversable(map.occupancy(), target, f.snap_radius);
  const Path path = shortest_path(map.occupancy(), start, goal, map.spec().resolution);
  print_json({{"start", cell_to_json(start)}, {"target", cell_to_json(target)}, {"goal_cell", cell_to_json(goal)},
              {"path", path_to_json(path)}},
             false);
  return 0;
}

// ---- eval --------------------------------------------------------------

struct EvalFlags {
  std::string maps_dir;
  std::string episodes;
  std::string negatives = "both";
  std::string report;
  ProviderFlags provider;
};

int run_eval(const EvalFlags& f) {
  const std::vector<SceneEpisodes> scenes = load_episodes(f.episodes);
  std::size_t total = 0;
  for (const SceneEpisodes& s : scenes) total += s.episodes.size();
  if (total == 0) throw InputError("no episodes in " + f.episodes);

  std::map<std::string, std::unique_ptr<FeatureMap>> maps;
  for (const SceneEpisodes& s : scenes) {
    const fs::path p = fs::path(f.maps_dir) / (s.scene_id + ".lermap");
    if (fs::exists(p)) maps[s.scene_id] = std::make_unique<FeatureMap>(load_map_file(p));
  }
  const auto provider = f.provider.make();
  const NegativeMode mode = f.negatives == "on" ? NegativeMode::on
                            : f.negatives == "off" ? NegativeMode::off
                                                   : NegativeMode::both;
  const BenchmarkReport report = run_benchmark(
      scenes,
      [&](const std::string& id) -> const FeatureMap* {
        const auto it = maps.find(id);
        return it == maps.end() ? nullptr : it->second.get();
      },
      *provider, mode);

  std::cout << report.to_table();
  if (!f.report.empty())
    write_text(f.report, fs::path(f.report).extension() == ".csv" ? report.to_csv() : report.to_table());
  return 0;
}

// ---- serve -------------------------------------------------------------

struct ServeFlags {
  std::string bind = "127.0.0.1:8080";
  std::string llm_endpoint;
  std::string llm_key_env = "OPENAI_API_KEY";
  std::string llm_fixture;
  std::string static_dir;
  std::vector<std::string> preload;
  int grid_size = 256;
  double resolution = 0.1;
  ProviderFlags provider;
};

int run_serve(const ServeFlags& f) {
  const auto colon = f.bind.rfind(':');
  if (colon == std::string::npos) throw InputError("--bind expects host:port");
  const std::string host = f.bind.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(f.bind.substr(colon + 1));
  } catch (const std::exception&) {
    throw InputError("--bind expects host:port");
  }

  ServiceConfig config;
  config.provider = f.provider.make();
  if (!f.llm_fixture.empty()) {
    config.chat = std::make_shared<RecordedChatClient>(RecordedChatClient::from_file(f.llm_fixture));
  } else if (!f.llm_endpoint.empty()) {
    const char* key = std::getenv(f.llm_key_env.c_str());
    config.chat = std::make_shared<HttpChatClient>(f.llm_endpoint, key ? key : "");
  }
  config.static_dir = f.static_dir;
  config.grid_size = f.grid_size;
  config.resolution = f.resolution;

  // SIGINT/SIGTERM are handled by a sigwait thread.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  Service service(std::move(config));
  for (const std::string& path : f.preload) {
    const std::string id = service.add_map(load_map_file(path));
    std::printf("loaded %s as %s\n", path.c_str(), id.c_str());
  }
  const int bound = service.bind(host, port);
  std::printf("listening on http://%s:%d\n", host.c_str(), bound);
  std::fflush(stdout);

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    service.stop();
  });
  service.listen();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  std::printf("stopped\n");
  return 0;
}

// ---- synth -------------------------------------------------------------

struct SynthFlags {
  std::string out;
  int scenes = 20;
  int objects = 5;
  std::uint64_t seed = 1;
  int image_size = 64;
  int walk = 0;
  bool build = false;
  ProviderFlags provider;
};

int run_synth(const SynthFlags& f) {
  const fs::path root = f.out;
  fs::create_directories(root);
  if (f.walk > 0) {
    SceneOptions opt;
    opt.seed = f.seed;
    const SyntheticScene scene = generate_scene("walk", opt);
    const auto frames = random_walk_trajectory(scene.geometry, f.walk, f.image_size, f.seed);
    const fs::path manifest = write_trajectory(root, frames);
    print_json({{"manifest", manifest.string()}, {"frames", frames.size()}}, false);
    return 0;
  }

  const auto provider = f.build ? f.provider.make() : nullptr;
  std::vector<SceneEpisodes> episodes;
  for (int i = 0; i < f.scenes; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "scene%02d", i);
    SceneOptions opt;
    opt.seed = f.seed * 1000003ULL + static_cast<std::uint64_t>(i);
    opt.objects = f.objects;
    opt.image_size = f.image_size;
    SyntheticScene scene = generate_scene(id, opt);
    scene.negatives = negative_prompts_for(static_cast<std::size_t>(i));
    write_trajectory(root / id, scene.frames);
    episodes.push_back(scene.episodes());
    if (provider) {
      fs::create_directories(root / "maps");
      for (PosedFrame& frame : scene.frames) attach_features(frame, *provider);
      save_map_file(build_map(scene.frames, scene.grid), root / "maps" / (std::string(id) + ".lermap"));
    }
  }
  write_text(root / "episodes.json", episodes_to_json(episodes).dump(2) + "\n");
  print_json({{"scenes", f.scenes}, {"episodes", (root / "episodes.json").string()}}, false);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Language-queryable spatial feature maps"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  BuildFlags build;
  auto* cmd_build = app.add_subcommand("build", "Build a map file from a trajectory manifest");
  cmd_build->add_option("--manifest", build.manifest, "Trajectory manifest (JSONL)")->required();
  cmd_build->add_option("--out", build.out, "Output map file")->required();
  cmd_build->add_option("--grid-size", build.grid_size, "Cells per side");
  cmd_build->add_option("--resolution", build.resolution, "Metres per cell");
  cmd_build->add_option("--aggregation", build.aggregation, "Cell aggregation")
      ->check(CLI::IsMember({"mean", "latest"}));
  cmd_build->add_flag("--lenient", build.lenient, "Skip malformed frames instead of failing");
  cmd_build->add_option("--threads", build.threads, "Worker threads (0 = all cores)");
  build.provider.add_to(*cmd_build);

  QueryFlags query;
  auto add_query = [&](const char* name, const char* help) {
    auto* cmd = app.add_subcommand(name, help);
    cmd->add_option("--map", query.map, "Map file")->required();
    cmd->add_option("--prompt", query.prompt, "Positive prompt")->required();
    cmd->add_option("--negatives", query.negatives, "Negative prompts")->expected(0, -1);
    cmd->add_option("--temperature", query.temperature, "Contrast temperature");
    cmd->add_option("--threshold", query.threshold, "Candidate score threshold");
    cmd->add_option("--radius", query.radius, "Candidate suppression radius in cells");
    cmd->add_option("--heatmap-out", query.heatmap_out, "Write the score field (.pgm or .csv)");
    cmd->add_flag("--json", query.json_out, "Print machine-readable JSON");
    query.provider.add_to(*cmd);
    return cmd;
  };
  auto* cmd_query = add_query("query", "Score every cell against a prompt and report the best cells");
  auto* cmd_candidates = add_query("candidates", "Alias of query: list thresholded, suppressed candidates");

  PlanFlags plan;
  auto* cmd_plan = app.add_subcommand("plan", "Shortest path on the map's occupancy grid");
  cmd_plan->add_option("--map", plan.map, "Map file")->required();
  cmd_plan->add_option("--start", plan.start, "Start cell x,y")->required();
  cmd_plan->add_option("--goal", plan.goal, "Goal cell x,y");
  cmd_plan->add_option("--candidate-json", plan.candidate_json, "Query output or candidate JSON");
  cmd_plan->add_option("--snap-radius", plan.snap_radius, "Cells searched for a traversable goal");

  EvalFlags eval;
  auto* cmd_eval = app.add_subcommand("eval", "Object-goal benchmark over prebuilt maps");
  cmd_eval->add_option("--maps-dir", eval.maps_dir, "Directory of <scene>.lermap files")->required();
  cmd_eval->add_option("--episodes", eval.episodes, "Episodes JSON")->required();
  cmd_eval->add_option("--negatives", eval.negatives, "Negative prompt mode")
      ->check(CLI::IsMember({"on", "off", "both"}));
  cmd_eval->add_option("--report", eval.report, "Also write the report (.csv or table)");
  eval.provider.add_to(*cmd_eval);

  ServeFlags serve;
  auto* cmd_serve = app.add_subcommand("serve", "Run the HTTP service until SIGINT/SIGTERM");
  cmd_serve->add_option("--bind", serve.bind, "host:port (port 0 picks a free port)");
  cmd_serve->add_option("--llm-endpoint", serve.llm_endpoint, "Chat-completions URL");
  cmd_serve->add_option("--llm-key-env", serve.llm_key_env, "Environment variable holding the API key");
  cmd_serve->add_option("--llm-fixture", serve.llm_fixture, "Recorded chat responses (JSON)");
  cmd_serve->add_option("--static-dir", serve.static_dir, "Directory served at /");
  cmd_serve->add_option("--preload", serve.preload, "Map files registered at startup");
  cmd_serve->add_option("--grid-size", serve.grid_size, "Cells per side for manifest builds");
  cmd_serve->add_option("--resolution", serve.resolution, "Metres per cell for manifest builds");
  serve.provider.add_to(*cmd_serve);

  SynthFlags synth;
  auto* cmd_synth = app.add_subcommand("synth", "Generate synthetic scenes, episodes and maps");
  cmd_synth->add_option("--out", synth.out, "Output directory")->required();
  cmd_synth->add_option("--scenes", synth.scenes, "Scene count");
  cmd_synth->add_option("--objects", synth.objects, "Objects per scene");
  cmd_synth->add_option("--seed", synth.seed, "Generator seed");
  cmd_synth->add_option("--image-size", synth.image_size, "Square depth image size");
  cmd_synth->add_option("--walk", synth.walk, "Write one random-walk trajectory of N frames instead");
  cmd_synth->add_flag("--build", synth.build, "Also build maps/<scene>.lermap");
  synth.provider.add_to(*cmd_synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*cmd_build) return run_build(build);
    if (*cmd_query || *cmd_candidates) return run_query(query);
    if (*cmd_plan) return run_plan(plan);
    if (*cmd_eval) return run_eval(eval);
    if (*cmd_serve) return run_serve(serve);
    if (*cmd_synth) return run_synth(synth);
  } catch (const InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const BoundsError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const NoPathError& e) {
    std::fprintf(stderr, "no path: %s (%zu cells expanded)\n", e.what(), e.expanded_cells());
    return kExitDomain;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDomain;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
