#include "lernr/service.hpp"

#include <chrono>

#include <httplib.h>

#include "lernr/error.hpp"
#include "lernr/frame.hpp"
#include "lernr/io.hpp"

namespace lernr {

using nlohmann::json;

namespace {

Response json_response(int status, const json& body) { return {status, body.dump(), "application/json"}; }

Response error_response(int status, const std::string& message, json extra = json::object()) {
  extra["error"] = message;
  return json_response(status, extra);
}

json parse_body(std::string_view body) {
  json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw InputError("request body must be a JSON object");
  return doc;
}

std::vector<std::string> string_list(const json& doc, const char* key) {
  std::vector<std::string> out;
  if (!doc.contains(key) || doc[key].is_null()) return out;
  if (!doc[key].is_array()) throw InputError(std::string(key) + " must be an array of strings");
  for (const json& item : doc[key]) {
    if (!item.is_string()) throw InputError(std::string(key) + " must be an array of strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

std::string required_string(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc[key].is_string()) throw InputError(std::string("missing string field ") + key);
  return doc[key].get<std::string>();
}

QuerySpec query_spec_from(const json& doc, const char* positive_key) {
  QuerySpec spec;
  spec.positive = required_string(doc, positive_key);
  spec.negatives = string_list(doc, "negatives");
  if (doc.contains("temperature")) spec.temperature = doc.at("temperature").get<double>();
  spec.validate();
  return spec;
}

// Runs `fn`, mapping lernr and JSON failures onto status codes.
template <class Fn>
Response guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const ProviderError& e) {
    return error_response(422, e.what());
  } catch (const LookupError& e) {
    return error_response(422, e.what());
  } catch (const InputError& e) {
    return error_response(400, e.what());
  } catch (const BoundsError& e) {
    return error_response(400, e.what());
  } catch (const json::exception& e) {
    return error_response(400, e.what());
  } catch (const Error& e) {
    return error_response(422, e.what());
  }
}

}  // namespace

json cell_to_json(Cell c) { return {{"x", c.x}, {"y", c.y}}; }

Cell cell_from_json(const json& j) {
  if (!j.is_object() || !j.contains("x") || !j.contains("y") || !j["x"].is_number_integer() ||
      !j["y"].is_number_integer())
    throw InputError("cell must be {\"x\": int, \"y\": int}");
  return {j["x"].get<int>(), j["y"].get<int>()};
}

json path_to_json(const Path& path) {
  json waypoints = json::array();
  for (Cell c : path.waypoints) waypoints.push_back(cell_to_json(c));
  return {{"waypoints", waypoints},
          {"length_m", path.length_m},
          {"cardinal_steps", path.cardinal_steps},
          {"diagonal_steps", path.diagonal_steps}};
}

json candidate_to_json(const Candidate& c, const std::string& id) {
  const auto pose = c.world_pose.row_major();
  json out = {{"id", id}, {"cell", cell_to_json(c.cell)}, {"score", c.score}, {"world_pose", pose}};
  if (c.heading_deg) out["heading_deg"] = *c.heading_deg;
  return out;
}

json leg_to_json(const SearchLeg& leg) {
  json out = {{"query", leg.query}, {"start", cell_to_json(leg.start)}, {"ok", leg.ok()}};
  out["goal"] = leg.goal ? json{{"cell", cell_to_json(leg.goal->cell)},
                                {"score", leg.goal->score},
                                {"world_pose", leg.goal->world_pose.row_major()}}
                         : json(nullptr);
  out["reached"] = leg.reached ? cell_to_json(*leg.reached) : json(nullptr);
  out["path"] = leg.path ? path_to_json(*leg.path) : json(nullptr);
  out["error"] = leg.ok() ? json(nullptr) : json(leg.error);
  return out;
}

json stats_to_json(const BuildStats& stats) {
  return {{"frames", stats.frames},
          {"registered_cells", stats.registered_cells},
          {"dropped_points", stats.dropped_points},
          {"valid_points", stats.valid_points},
          {"build_ms", stats.build_ms}};
}

std::string candidate_id(const std::string& map_id, const QuerySpec& query, Cell cell) {
  std::string key = map_id;
  key += '\x1f';
  key += query.positive;
  for (const std::string& n : query.negatives) {
    key += '\x1f';
    key += n;
  }
  char tail[96];
  std::snprintf(tail, sizeof tail, "\x1f%.17g\x1f%d,%d", query.temperature, cell.x, cell.y);
  key += tail;
  return to_hex(fnv1a64(key));
}

json query_response(const std::string& map_id, const QuerySpec& query, const std::vector<Candidate>& candidates) {
  json list = json::array();
  for (const Candidate& c : candidates) list.push_back(candidate_to_json(c, candidate_id(map_id, query, c.cell)));
  return {{"heatmap_ref", "/maps/" + map_id + "/heatmap"}, {"candidates", list}};
}

struct Service::Session {
  std::string id;
  std::shared_ptr<const FeatureMap> map;
  BuildStats stats;

  // Most recent query; replaced atomically under `mutex`.
  mutable std::mutex mutex;
  std::shared_ptr<const SimilarityField> field;
  QuerySpec last_query;
  std::vector<Candidate> candidates;
  std::vector<std::string> candidate_ids;
  std::optional<Cell> agent_cell;
};

Service::Service(ServiceConfig config) : config_(std::move(config)) {
  if (!config_.provider) throw InputError("service needs an embedding provider");
}

Service::~Service() { stop(); }

std::string Service::add_map(FeatureMap map, const BuildStats& stats) {
  auto s = std::make_shared<Session>();
  s->map = std::make_shared<const FeatureMap>(std::move(map));
  s->stats = stats;
  s->stats.registered_cells = s->map->registered_cells();
  s->stats.dropped_points = s->map->dropped_points();
  std::unique_lock lock(registry_mutex_);
  s->id = "map-" + std::to_string(next_id_++);
  sessions_[s->id] = s;
  return s->id;
}

std::shared_ptr<Service::Session> Service::session(const std::string& map_id) const {
  std::shared_lock lock(registry_mutex_);
  const auto it = sessions_.find(map_id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::shared_ptr<const FeatureMap> Service::map(const std::string& map_id) const {
  const auto s = session(map_id);
  return s ? s->map : nullptr;
}

Response Service::health() const {
  std::shared_lock lock(registry_mutex_);
  return json_response(200, {{"status", "ok"}, {"maps", sessions_.size()}});
}

Response Service::create_map(std::string_view body, std::string_view content_type) {
  if (content_type.starts_with("application/octet-stream")) {
    try {
      const auto t0 = std::chrono::steady_clock::now();
      FeatureMap map = map_from_bytes(body);
      BuildStats stats;
      stats.build_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      const std::size_t m = static_cast<std::size_t>(map.size());
      const std::size_t c = map.channels();
      const std::string id = add_map(std::move(map), stats);
      const auto s = session(id);
      return json_response(200, {{"map_id", id}, {"stats", stats_to_json(s->stats)}, {"size_M", m}, {"channels", c}});
    } catch (const FormatError& e) {
      return error_response(400, e.what());
    }
  }

  return guarded([&]() -> Response {
    const json doc = parse_body(body);
    const std::filesystem::path manifest = required_string(doc, "manifest_path");
    GridSpec spec;
    spec.size = doc.value("grid_size", config_.grid_size);
    spec.resolution = doc.value("resolution", config_.resolution);
    spec.validate();
    TrajectoryOptions options;
    options.strict = doc.value("strict", true);

    std::vector<PosedFrame> frames;
    try {
      frames = load_trajectory(manifest, options);
    } catch (const FrameError& e) {
      return error_response(422, e.what());
    }
    if (frames.empty()) return error_response(400, "manifest has no frames");

    try {
      const auto t0 = std::chrono::steady_clock::now();
      for (PosedFrame& f : frames) attach_features(f, *config_.provider);
      spec.origin = centered_origin(frames.front().pose, spec);
      BuildStats stats;
      FeatureMap map = build_map(frames, spec, config_.build, &stats);
      stats.build_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      const std::size_t m = static_cast<std::size_t>(map.size());
      const std::size_t c = map.channels();
      const std::string id = add_map(std::move(map), stats);
      return json_response(200, {{"map_id", id}, {"stats", stats_to_json(stats)}, {"size_M", m}, {"channels", c}});
    } catch (const Error& e) {
      return error_response(422, e.what());
    }
  });
}

Response Service::map_info(const std::string& map_id) const {
  const auto s = session(map_id);
  if (!s) return error_response(404, "unknown map " + map_id);
  const FeatureMap& m = *s->map;
  return json_response(200, {{"map_id", map_id},
                             {"size_M", m.size()},
                             {"resolution", m.spec().resolution},
                             {"d_rnr", m.d_rnr()},
                             {"d_clip", m.d_clip()},
                             {"channels", m.channels()},
                             {"origin", m.spec().origin.row_major()},
                             {"stats", stats_to_json(s->stats)}});
}

Response Service::query(const std::string& map_id, std::string_view body) {
  const auto s = session(map_id);
  if (!s) return error_response(404, "unknown map " + map_id);
  return guarded([&]() -> Response {
    const json doc = parse_body(body);
    const QuerySpec spec = query_spec_from(doc, "positive");
    const double threshold = doc.value("threshold", config_.threshold);
    const int radius = doc.value("radius", config_.radius);
    if (radius < 0) throw InputError("radius must be >= 0");

    auto field = std::make_shared<const SimilarityField>(contrast_field(*s->map, spec, *config_.provider));
    std::vector<Candidate> candidates = extract_candidates(*field, s->map->spec(), threshold, radius);
    json out = query_response(map_id, spec, candidates);

    std::vector<std::string> ids;
    for (const json& c : out["candidates"]) ids.push_back(c["id"].get<std::string>());
    std::lock_guard lock(s->mutex);
    s->field = std::move(field);
    s->last_query = spec;
    s->candidates = std::move(candidates);
    s->candidate_ids = std::move(ids);
    return json_response(200, out);
  });
}

Response Service::heatmap(const std::string& map_id, std::string_view format) const {
  const auto s = session(map_id);
  if (!s) return error_response(404, "unknown map " + map_id);
  std::shared_ptr<const SimilarityField> field;
  {
    std::lock_guard lock(s->mutex);
    field = s->field;
  }
  if (!field) return error_response(404, "no query has been run on " + map_id);
  try {
    const HeatmapFormat fmt = parse_heatmap_format(format.empty() ? "pgm" : format);
    return {200, export_heatmap(*field, fmt), fmt == HeatmapFormat::pgm ? "image/x-portable-graymap" : "text/csv"};
  } catch (const InputError& e) {
    return error_response(400, e.what());
  }
}

Response Service::select(const std::string& map_id, std::string_view body) {
  const auto s = session(map_id);
  if (!s) return error_response(404, "unknown map " + map_id);
  return guarded([&]() -> Response {
    const json doc = parse_body(body);
    const std::string id = required_string(doc, "candidate_id");
    const Cell start = cell_from_json(doc.at("start_cell"));

    Candidate chosen;
    QuerySpec query;
    {
      std::lock_guard lock(s->mutex);
      const auto it = std::find(s->candidate_ids.begin(), s->candidate_ids.end(), id);
      if (it == s->candidate_ids.end()) return error_response(409, "candidate " + id + " is not from the latest query");
      chosen = s->candidates[static_cast<std::size_t>(it - s->candidate_ids.begin())];
      query = s->last_query;
    }

    const FeatureMap& m = *s->map;
    if (!m.spec().contains(start)) throw BoundsError("start cell outside the map");
    Cell goal;
    Path path;
    try {
      goal = nearest_traversable(m.occupancy(), chosen.cell, config_.search.snap_radius);
      path = shortest_path(m.occupancy(), start, goal, m.spec().resolution);
    } catch (const SnappingError& e) {
      return error_response(422, e.what());
    } catch (const NoPathError& e) {
      return error_response(422, e.what(), {{"expanded_cells", e.expanded_cells()}});
    } catch (const InputError& e) {
      return error_response(422, e.what());
    }

    json heading = nullptr;
    try {
      heading = select_orientation(m, chosen.cell, config_.provider->embed_text(query.positive), config_.orientation);
    } catch (const NoOrientationError&) {
    }
    {
      std::lock_guard lock(s->mutex);
      s->agent_cell = goal;
    }
    return json_response(200, {{"candidate_id", id},
                                {"candidate_cell", cell_to_json(chosen.cell)},
                                {"goal_cell", cell_to_json(goal)},
                                {"heading_deg", heading},
                                {"path", path_to_json(path)}});
  });
}

Response Service::multi_query(const std::string& map_id, std::string_view body) {
  const auto s = session(map_id);
  if (!s) return error_response(404, "unknown map " + map_id);
  return guarded([&]() -> Response {
    const json doc = parse_body(body);
    const QuerySpec spec = query_spec_from(doc, "prompt");
    const Cell start = cell_from_json(doc.at("start_cell"));
    if (!s->map->spec().contains(start)) throw BoundsError("start cell outside the map");
    const std::vector<SearchLeg> legs =
        multi_object_search(*s->map, spec.positive, start, spec, *config_.provider, config_.search);
    json out = json::array();
    for (const SearchLeg& leg : legs) out.push_back(leg_to_json(leg));
    return json_response(200, {{"legs", out}});
  });
}

Response Service::affordance(std::string_view body) {
  return guarded([&]() -> Response {
    const json doc = parse_body(body);
    AffordanceRequest request;
    request.query = required_string(doc, "query");
    if (trim(request.query).empty()) throw InputError("query is blank");
    if (doc.contains("model")) request.model = doc["model"].get<std::string>();
    const std::string map_id = required_string(doc, "map_id");
    const auto s = session(map_id);
    if (!s) return error_response(404, "unknown map " + map_id);
    const Cell start = cell_from_json(doc.at("start_cell"));
    if (!s->map->spec().contains(start)) throw BoundsError("start cell outside the map");
    if (!config_.chat) return error_response(503, "no chat-completion endpoint configured");

    QuerySpec tmpl;
    tmpl.positive = "placeholder";
    tmpl.negatives = string_list(doc, "negatives");
    try {
      const AffordanceSearchResult r =
          affordance_search(*s->map, request, *config_.chat, start, tmpl, *config_.provider, config_.search);
      json legs = json::array();
      for (const SearchLeg& leg : r.legs) legs.push_back(leg_to_json(leg));
      return json_response(200, {{"targets", r.resolution.targets},
                                 {"raw_response", r.resolution.raw_response},
                                 {"legs", legs}});
    } catch (const ParseError& e) {
      return error_response(422, e.what(), {{"raw_response", e.raw_response()}});
    } catch (const ClientError& e) {
      return error_response(502, e.what(), {{"upstream_status", e.status()}});
    }
  });
}

void Service::install_routes() {
  httplib::Server& srv = *server_;
  const auto reply = [](httplib::Response& res, const Response& r) { res.set_content(r.body, r.content_type); res.status = r.status; };

  srv.Get("/health", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, health()); });
  srv.Post("/maps", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, create_map(req.body, req.get_header_value("Content-Type")));
  });
  srv.Get(R"(/maps/([^/]+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, map_info(req.matches[1]));
  });
  srv.Post(R"(/maps/([^/]+)/query)", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, query(req.matches[1], req.body));
  });
  srv.Get(R"(/maps/([^/]+)/heatmap)", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, heatmap(req.matches[1], req.get_param_value("fmt")));
  });
  srv.Post(R"(/maps/([^/]+)/select)", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, select(req.matches[1], req.body));
  });
  srv.Post(R"(/maps/([^/]+)/multi_query)", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, multi_query(req.matches[1], req.body));
  });
  srv.Post("/affordance", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, affordance(req.body));
  });
  if (!config_.static_dir.empty() && !srv.set_mount_point("/", config_.static_dir.string()))
    throw InputError("static directory does not exist: " + config_.static_dir.string());
}

int Service::bind(const std::string& host, int port) {
  if (server_) throw Error("service is already bound");
  server_ = std::make_unique<httplib::Server>();
  server_->new_task_queue = [] { return new httplib::ThreadPool(16); };
  install_routes();
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("could not bind " + host + ":" + std::to_string(port));
  return bound;
}

void Service::listen() {
  if (!server_) throw Error("bind() before listen()");
  server_->listen_after_bind();
}

void Service::stop() {
  if (server_) server_->stop();
}

}  // namespace lernr
