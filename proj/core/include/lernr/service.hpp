#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lernr/affordance.hpp"
#include "lernr/feature_map.hpp"
#include "lernr/map_builder.hpp"
#include "lernr/planner.hpp"
#include "lernr/providers.hpp"
#include "lernr/query.hpp"
#include "lernr/search.hpp"

namespace httplib {
class Server;
}

namespace lernr {

// JSON shapes shared by the service and the CLI. Cells are {"x", "y"}, poses
// 16-element row-major arrays. Objects serialize with sorted keys, so equal
// values always produce equal bytes.
nlohmann::json cell_to_json(Cell c);
Cell cell_from_json(const nlohmann::json& j);
nlohmann::json path_to_json(const Path& path);
nlohmann::json candidate_to_json(const Candidate& c, const std::string& id);
nlohmann::json leg_to_json(const SearchLeg& leg);
nlohmann::json stats_to_json(const BuildStats& stats);

// Content hash of (map id, query, cell); a new query invalidates old ids.
std::string candidate_id(const std::string& map_id, const QuerySpec& query, Cell cell);

// Body of POST /maps/{id}/query for already computed candidates.
nlohmann::json query_response(const std::string& map_id, const QuerySpec& query,
                              const std::vector<Candidate>& candidates);

struct ServiceConfig {
  std::shared_ptr<const EmbeddingProvider> provider;
  std::shared_ptr<const ChatClient> chat;  // null: /affordance answers 503
  BuildOptions build;
  int grid_size = 256;
  double resolution = 0.1;
  double threshold = 0.6;
  int radius = 3;
  SearchOptions search;
  OrientationParams orientation;
  std::filesystem::path static_dir;  // served at / when set
};

struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // In-process registration; returns the new map id.
  std::string add_map(FeatureMap map, const BuildStats& stats = {});
  std::shared_ptr<const FeatureMap> map(const std::string& map_id) const;

  // Endpoint handlers. The HTTP routes are thin wrappers over these.
  Response health() const;
  Response create_map(std::string_view body, std::string_view content_type);
  Response map_info(const std::string& map_id) const;
  Response query(const std::string& map_id, std::string_view body);
  Response heatmap(const std::string& map_id, std::string_view format) const;
  Response select(const std::string& map_id, std::string_view body);
  Response multi_query(const std::string& map_id, std::string_view body);
  Response affordance(std::string_view body);

  // Binds (port 0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  // Serves until stop(); call after bind().
  void listen();
  void stop();

 private:
  struct Session;

  std::shared_ptr<Session> session(const std::string& map_id) const;
  void install_routes();

  ServiceConfig config_;
  mutable std::shared_mutex registry_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace lernr
