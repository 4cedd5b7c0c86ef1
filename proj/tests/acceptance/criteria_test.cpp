#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <thread>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fixtures.hpp"
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
#include "oracles.hpp"

// After the Eigen users: resolv.h defines a _res macro.
#include <httplib.h>

using namespace lernr;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void note(const char* key, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", value);
  testing::Test::RecordProperty(key, buf);
}

std::vector<std::optional<double>> as_optional(const SimilarityField& f) {
  std::vector<std::optional<double>> out(f.cell_count());
  for (std::size_t i = 0; i < f.cell_count(); ++i)
    if (f.valid(i)) out[i] = f.score(i);
  return out;
}

void expect_candidates_match(const SimilarityField& f, const GridSpec& spec) {
  const auto got = extract_candidates(f, spec, 0.6, 3);
  const auto ref = oracle::candidates(as_optional(f), spec.size, 0.6, 3);
  ASSERT_EQ(got.size(), ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    ASSERT_EQ(got[i].cell, ref[i].cell);
    ASSERT_EQ(got[i].score, ref[i].score);
  }
}

// Cells mix the query with noise in random proportions so cosines cover the
// whole range, including the region above the threshold.
FeatureMap mixed_map(std::uint64_t seed, const Embedding& q, std::size_t d_rnr) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const GridSpec spec{16, 0.1, RotoTranslation::identity()};
  FeatureMap map(spec, d_rnr, q.dim());
  for (std::size_t i = 0; i < map.cell_count(); ++i) {
    if (u(rng) < 0.2) continue;
    const Embedding noise = fixtures::random_unit(rng, q.dim());
    const double a = u(rng) * 2 - 0.5;
    std::vector<float> v(q.dim());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = static_cast<float>(a * q.values()[k] + (1 - std::abs(a)) * noise.values()[k]);
    fixtures::paint(map, spec.cell_at(i), Embedding(v), fixtures::random_unit(rng, d_rnr),
                    static_cast<float>(1 + u(rng) * 5));
  }
  return map;
}

}  // namespace

TEST(Acceptance, Geometry) {
  RecordProperty("criterion", "geometry suite");
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> cell(0, 255);
  std::uniform_real_distribution<double> angle(-M_PI, M_PI);
  std::uniform_real_distribution<double> res(0.02, 0.5);
  for (int i = 0; i < 1000; ++i) {
    const GridSpec spec{256, res(rng), fixtures::random_pose(rng, 50.0)};
    const Cell c{cell(rng), cell(rng)};
    const double a = angle(rng);
    const RotoTranslation world = grid_to_world(c, a, spec);
    ASSERT_EQ(world_to_grid(world.translation(), spec), c) << "trial " << i;

    const GridSpec aligned{256, spec.resolution, compose_rotation_2d(c, a, spec)};
    ASSERT_LE((grid_to_world(c, a, aligned).matrix() - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff(), 1e-9);
  }

  std::uniform_real_distribution<double> depth(0.2, 10.0);
  double worst = 0;
  for (int i = 0; i < 50; ++i) {
    const CameraIntrinsics intr = CameraIntrinsics::from_fov(64, 48, 40.0 + i);
    const RotoTranslation pose = fixtures::random_pose(rng, 20.0);
    DepthImage d(64, 48);
    for (float& v : d.values) v = static_cast<float>(depth(rng));
    const RotoTranslation inv = pose.inverse();
    for (const WorldPoint& p : backproject_depth(d, intr, pose)) {
      const Eigen::Vector3d cam = inv.apply(p.position);
      const double u = intr.fx * cam.x() / cam.z() + intr.cx;
      const double v = intr.fy * cam.y() / cam.z() + intr.cy;
      worst = std::max({worst, std::abs(u - p.pixel % 64), std::abs(v - p.pixel / 64)});
    }
  }
  EXPECT_LE(worst, 0.5);
  const double elapsed = seconds_since(t0);
  note("seconds", elapsed);
  EXPECT_LT(elapsed, 5.0);
}

TEST(Acceptance, RegistrationOracle) {
  RecordProperty("criterion", "registration oracle");
  const GridSpec spec{8, 0.1, RotoTranslation::identity()};
  std::uint64_t seed = 1;
  int trials = 0;
  for (; trials < 30; ++seed) {
    const int n = 1 + trials % 5;
    auto frames = fixtures::random_frames(seed, n, spec, 32, 512);
    const oracle::RegisteredMap ref = oracle::register_frames(frames, spec, 32, 512, {});
    if (ref.ambiguous) continue;
    ++trials;

    BuildStats stats;
    const FeatureMap map = build_map(frames, spec, {}, &stats);
    std::uint64_t registered = 0;
    for (std::size_t i = 0; i < map.cell_count(); ++i) {
      const Cell c = spec.cell_at(i);
      ASSERT_EQ(map.count(c), ref.count[i]);
      ASSERT_EQ(map.occupancy(c), ref.occupancy[i]);
      ASSERT_NEAR(map.weight(c), ref.weight[i], 1e-5 * std::max(1.0, ref.weight[i]));
      registered += map.count(c);
      double scale = 0;
      for (double v : ref.mean[i]) scale = std::max(scale, std::abs(v));
      for (std::size_t k = 0; k < map.channels(); ++k)
        ASSERT_LE(std::abs(map.cell(c)[k] - ref.mean[i][k]), 1e-5 * std::max(std::abs(ref.mean[i][k]), scale));
    }
    ASSERT_EQ(map.dropped_points(), ref.dropped);
    ASSERT_EQ(registered + map.dropped_points(), stats.valid_points);

    std::mt19937_64 rng(seed);
    std::shuffle(frames.begin(), frames.end(), rng);
    const FeatureMap shuffled = build_map(frames, spec);
    ASSERT_TRUE(shuffled.occupancy() == map.occupancy());
    for (std::size_t i = 0; i < map.cells_data().size(); ++i)
      ASSERT_LE(std::abs(shuffled.cells_data()[i] - map.cells_data()[i]), 1e-5 * std::max(1.0f, std::abs(map.cells_data()[i])));
  }
}

TEST(Acceptance, QueryOracles) {
  RecordProperty("criterion", "query oracles");
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t kept = 0;
  for (int t = 0; t < 200; ++t) {
    const Embedding q = fixtures::random_unit(rng, 512);
    const FeatureMap map = mixed_map(7000 + t, q, 32);
    const SimilarityField f = similarity_field(map, q);
    const auto ref = oracle::similarity(map, q.values());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      ASSERT_EQ(f.valid(i), ref[i].has_value());
      if (ref[i]) ASSERT_EQ(f.score(i), *ref[i]);
    }
    expect_candidates_match(f, map.spec());
    kept += extract_candidates(f, map.spec(), 0.6, 3).size();

    SimilarityField coarse(16, FieldKind::cosine);
    for (std::size_t i = 0; i < coarse.cell_count(); ++i)
      if (u(rng) > 0.2) coarse.set(i, std::round(u(rng) * 40) / 40);
    expect_candidates_match(coarse, map.spec());
  }
  EXPECT_GT(kept, 200u);

  for (int t = 0; t < 100; ++t) {
    FeatureMap map = fixtures::random_map(8000 + t, 16, 32, 512);
    const Embedding q = fixtures::random_unit(rng, 512);
    const Cell before = argmax_goal(similarity_field(map, q), map.spec()).cell;
    for (std::size_t i = 0; i < map.cell_count(); ++i) {
      const Cell c = map.spec().cell_at(i);
      if (!map.registered(c)) continue;
      const float s = static_cast<float>(0.05 + u(rng) * 20);
      for (float& v : map.cell(c).subspan(map.d_rnr())) v *= s;
    }
    ASSERT_EQ(argmax_goal(similarity_field(map, q), map.spec()).cell, before) << "map " << t;
  }
}

TEST(Acceptance, NegativePromptEffect) {
  RecordProperty("criterion", "negative-prompt effect");
  const SyntheticProvider p;
  const fixtures::DistractorFixture fx = fixtures::distractor_fixture(p);
  const SimilarityField cos = contrast_field(fx.map, {fx.positive, {}, 0.07}, p);
  const SimilarityField con = contrast_field(fx.map, {fx.positive, fx.negatives, 0.07}, p);
  const double cos_margin = cos.score(fx.target) - cos.score(fx.distractor);
  const double con_margin = con.score(fx.target) - con.score(fx.distractor);
  note("cosine_margin", cos_margin);
  note("contrast_margin", con_margin);
  EXPECT_GT(con_margin, cos_margin);
  EXPECT_EQ(argmax_goal(con, fx.map.spec()).cell, fx.target);

  const SimilarityField again = contrast_field(fx.map, {fx.positive, fx.negatives, 0.07}, p);
  for (std::size_t i = 0; i < con.cell_count(); ++i) ASSERT_EQ(again.score(i), con.score(i));
}

TEST(Acceptance, Planner) {
  RecordProperty("criterion", "planner vs dijkstra");
  std::mt19937_64 rng(4242);
  std::uniform_int_distribution<int> u(0, 63);
  int reachable = 0;
  for (int t = 0; t < 50; ++t) {
    const OccupancyGrid g = fixtures::random_grid(60000 + t, 64, 0.3);
    Cell s, e;
    do s = {u(rng), u(rng)};
    while (!g.is_free(s));
    do e = {u(rng), u(rng)};
    while (!g.is_free(e));
    const auto ref = oracle::dijkstra(g, s, e);
    if (!ref) {
      EXPECT_THROW(shortest_path(g, s, e, 0.1), NoPathError);
      continue;
    }
    ++reachable;
    const Path p = shortest_path(g, s, e, 0.1);
    ASSERT_EQ(p.cardinal_steps, ref->first) << "grid " << t;
    ASSERT_EQ(p.diagonal_steps, ref->second) << "grid " << t;
    ASSERT_EQ(oracle::path_violation(g, p.waypoints, s, e), "") << "grid " << t;
    ASSERT_NEAR(p.length_m, 0.1 * (ref->first + std::sqrt(2.0) * ref->second), 1e-9);
  }
  note("reachable", reachable);
  EXPECT_GE(reachable, 25);
}

TEST(Acceptance, SyntheticBenchmark) {
  RecordProperty("criterion", "synthetic benchmark");
  const auto t0 = Clock::now();
  const SyntheticProvider provider;
  std::vector<SceneEpisodes> scenes;
  std::map<std::string, FeatureMap> maps;
  for (int i = 0; i < 20; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "scene%02d", i);
    SceneOptions opt;
    opt.seed = 1000003ULL + static_cast<std::uint64_t>(i);
    opt.objects = 5;
    SyntheticScene scene = generate_scene(id, opt);
    scene.negatives = negative_prompts_for(static_cast<std::size_t>(i));
    for (PosedFrame& f : scene.frames) attach_features(f, provider);
    maps.emplace(id, build_map(scene.frames, scene.grid));
    scenes.push_back(scene.episodes());
    ASSERT_EQ(scenes.back().episodes.size(), 5u);
  }
  const BenchmarkReport report = run_benchmark(
      scenes,
      [&](const std::string& id) -> const FeatureMap* {
        const auto it = maps.find(id);
        return it == maps.end() ? nullptr : &it->second;
      },
      provider, NegativeMode::both);
  std::printf("%s", report.to_table().c_str());

  ASSERT_EQ(report.rows.size(), 40u);
  ASSERT_EQ(report.average.size(), 2u);
  for (const ReportRow& avg : report.average) {
    EXPECT_EQ(avg.success, 1.0) << (avg.negatives ? "with" : "without") << " negatives";
    EXPECT_LE(avg.dts, 0.1);
  }
  const std::string table = report.to_table();
  const std::string header = table.substr(table.find("| Scene"), table.find('\n', table.find("| Scene")) - table.find("| Scene"));
  std::size_t pos = 0;
  for (const char* col : {"Scene", "Negative Prompts", "Success ↑", "DTS ↓"}) {
    const std::size_t at = header.find(col, pos);
    ASSERT_NE(at, std::string::npos) << col;
    pos = at;
  }
  const double elapsed = seconds_since(t0);
  note("seconds", elapsed);
  EXPECT_LT(elapsed, 60.0);
}

TEST(Acceptance, BuildPerformance) {
  RecordProperty("criterion", "build performance");
  SceneOptions opt;
  opt.seed = 7;
  const SyntheticScene scene = generate_scene("perf", opt);
  std::vector<PosedFrame> frames = random_walk_trajectory(scene.geometry, 1000, 128, 7);
  ASSERT_EQ(frames.size(), 1000u);
  ASSERT_EQ(frames[0].depth.width, 128);

  const SyntheticProvider provider;
  const auto t0 = Clock::now();
  for (PosedFrame& f : frames) attach_features(f, provider);
  GridSpec spec{256, 0.1, RotoTranslation::identity()};
  spec.origin = centered_origin(frames.front().pose, spec);
  BuildStats stats;
  const FeatureMap map = build_map(frames, spec, {}, &stats);
  const double elapsed = seconds_since(t0);
  note("seconds", elapsed);
  note("hardware_threads", std::thread::hardware_concurrency());
  std::printf("built 1000 frames (%llu points) into %dx%dx%zu in %.2f s\n",
              static_cast<unsigned long long>(stats.valid_points), map.size(), map.size(), map.channels(), elapsed);
  EXPECT_EQ(map.size(), 256);
  EXPECT_EQ(map.channels(), 544u);
  EXPECT_GT(map.registered_cells(), 1000u);
  EXPECT_LE(elapsed, 60.0);
}

TEST(Acceptance, AffordanceFixtures) {
  RecordProperty("criterion", "affordance fixtures");
  const RecordedChatClient client = RecordedChatClient::from_file(fixtures::data_dir() / "affordance_recorded.json");
  const std::vector<std::pair<std::string, std::vector<std::string>>> cases = {
      {"Find me a drink to wake me up", {"kitchen", "dining room", "living room", "office"}},
      {"Where can I wash my hands", {"bathroom", "kitchen", "utility room"}},
      {"Where can I watch the tv?", {"living room", "bedroom", "basement", "media room"}}};
  for (const auto& [query, expected] : cases) {
    AffordanceRequest r;
    r.query = query;
    EXPECT_EQ(resolve_affordance(r, client).targets, expected) << query;
  }
}

TEST(Acceptance, Persistence) {
  RecordProperty("criterion", "persistence");
  std::mt19937_64 rng(31);
  for (int t = 0; t < 50; ++t) {
    const FeatureMap map = fixtures::random_map(31000 + t, 8 + t % 9, 32, 512);
    const std::string bytes = map_to_bytes(map);
    const FeatureMap back = map_from_bytes(bytes);
    ASSERT_TRUE(back.bitwise_equal(map)) << "map " << t;
    ASSERT_EQ(map_to_bytes(back), bytes);

    const std::size_t cut = std::uniform_int_distribution<std::size_t>(0, bytes.size() - 1)(rng);
    try {
      map_from_bytes(std::string_view(bytes).substr(0, cut));
      FAIL() << "truncation to " << cut << " bytes went unnoticed";
    } catch (const FormatError& e) {
      ASSERT_EQ(e.offset(), cut);
    }
  }
}

TEST(Acceptance, ServiceConformance) {
  RecordProperty("criterion", "service conformance");
  ServiceConfig cfg;
  const auto provider = std::make_shared<const SyntheticProvider>();
  cfg.provider = provider;
  Service svc(cfg);
  const int port = svc.bind("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  std::thread server([&] { svc.listen(); });

  const FeatureMap golden = fixtures::two_peak_map(*provider);
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(60, 0);
  const auto up = cli.Post("/maps", map_to_bytes(golden), "application/octet-stream");
  ASSERT_TRUE(up);
  ASSERT_EQ(up->status, 200);
  const std::string id = nlohmann::json::parse(up->body)["map_id"];

  const std::vector<QuerySpec> queries = {
      {"chair", {}, 0.07}, {"chair", {"floor", "wall"}, 0.07}, {"chair", {"the floor inside the house"}, 0.5}, {"table", {}, 0.07}};
  for (const QuerySpec& q : queries) {
    const SimilarityField field = contrast_field(golden, q, *provider);
    const std::string expected = query_response(id, q, extract_candidates(field, golden.spec(), 0.6, 3)).dump();
    const nlohmann::json request{{"positive", q.positive}, {"negatives", q.negatives}, {"temperature", q.temperature}};
    const auto res = cli.Post("/maps/" + id + "/query", request.dump(), "application/json");
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200);
    EXPECT_EQ(res->body, expected) << q.positive;
    const auto heat = cli.Get("/maps/" + id + "/heatmap?fmt=csv");
    ASSERT_TRUE(heat);
    EXPECT_EQ(heat->body, export_heatmap(field, HeatmapFormat::csv));
  }

  const QuerySpec q{"chair", {"floor"}, 0.07};
  const std::string expected =
      query_response(id, q, extract_candidates(contrast_field(golden, q, *provider), golden.spec(), 0.6, 3)).dump();
  const std::string request = R"({"positive": "chair", "negatives": ["floor"]})";
  std::vector<std::string> bodies(16);
  std::vector<std::thread> clients;
  for (int i = 0; i < 16; ++i)
    clients.emplace_back([&, i] {
      httplib::Client c("127.0.0.1", port);
      c.set_read_timeout(60, 0);
      if (const auto res = c.Post("/maps/" + id + "/query", request, "application/json"); res && res->status == 200)
        bodies[i] = res->body;
    });
  for (auto& t : clients) t.join();
  for (const std::string& b : bodies) EXPECT_EQ(b, expected);

  svc.stop();
  server.join();
}
