#include "lernr/affordance.hpp"

#include <fstream>

#include <httplib.h>

#include "lernr/embedding.hpp"
#include "lernr/error.hpp"

namespace lernr {

using nlohmann::json;

namespace {

constexpr std::string_view kSystemPrompt =
    "You help a mobile robot that searches an indoor environment. The user will describe a need or an activity "
    "instead of naming a place or an object. Reply with the indoor locations or objects where the robot should look "
    "to satisfy the request, most likely first. Answer only with a comma-separated list of short descriptions, with "
    "no numbering, no explanation and no other text.";

json assistant_reply(const std::string& content) {
  return json{{"choices", json::array({json{{"index", 0},
                                            {"message", json{{"role", "assistant"}, {"content", content}}},
                                            {"finish_reason", "stop"}}})}};
}

}  // namespace

std::string_view default_system_prompt() { return kSystemPrompt; }

std::string request_hash(const json& request) { return to_hex(fnv1a64(request.dump())); }

json build_chat_request(const AffordanceRequest& request, std::string_view system_prompt) {
  if (trim(request.query).empty()) throw InputError("affordance query must not be empty");
  if (request.max_targets == 0) throw InputError("max_targets must be positive");
  return json{{"model", request.model},
              {"temperature", request.temperature},
              {"messages", json::array({json{{"role", "system"}, {"content", std::string(system_prompt)}},
                                        json{{"role", "user"}, {"content", std::string(trim(request.query))}}})}};
}

std::vector<std::string> parse_targets(std::string_view content, std::size_t max_targets) {
  std::vector<std::string> targets = split_prompt(content);
  if (targets.size() > max_targets) targets.resize(max_targets);
  return targets;
}

AffordanceResult resolve_affordance(const AffordanceRequest& request, const ChatClient& client,
                                    std::string_view system_prompt) {
  const json reply = client.complete(build_chat_request(request, system_prompt));
  AffordanceResult result;
  result.raw_response = reply.dump();
  std::string content;
  try {
    content = reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("chat response has no assistant content: ") + e.what(), result.raw_response);
  }
  result.targets = parse_targets(content, request.max_targets);
  if (result.targets.empty()) throw ParseError("assistant content lists no targets", result.raw_response);
  return result;
}

AffordanceSearchResult affordance_search(const FeatureMap& map, const AffordanceRequest& request,
                                         const ChatClient& client, Cell start, const QuerySpec& query_template,
                                         const EmbeddingProvider& provider, const SearchOptions& options,
                                         std::string_view system_prompt) {
  AffordanceSearchResult out;
  out.resolution = resolve_affordance(request, client, system_prompt);
  std::string joined;
  for (const std::string& t : out.resolution.targets) {
    if (!joined.empty()) joined += ", ";
    joined += t;
  }
  out.legs = multi_object_search(map, joined, start, query_template, provider, options);
  return out;
}

// ---------------------------------------------------------------- clients

HttpChatClient::HttpChatClient(std::string url, std::string api_key) : api_key_(std::move(api_key)) {
  const std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw InputError("chat endpoint must be an absolute URL: " + url);
  const std::size_t path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/v1/chat/completions" : url.substr(path_start);
}

json HttpChatClient::complete(const json& request) const {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(10);
  client.set_read_timeout(60);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  const httplib::Result res = client.Post(path_, headers, request.dump(), "application/json");
  if (!res) throw ClientError("chat endpoint transport error: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw ClientError("chat endpoint returned HTTP " + std::to_string(res->status), res->status);
  try {
    return json::parse(res->body);
  } catch (const json::exception&) {
    throw ParseError("chat endpoint returned malformed JSON", res->body);
  }
}

RecordedChatClient::RecordedChatClient(const json& fixture) {
  if (!fixture.is_array()) throw InputError("chat fixture must be a JSON array");
  for (const json& entry : fixture) {
    std::string hash = entry.contains("request_hash") ? entry.at("request_hash").get<std::string>()
                                                      : request_hash(entry.at("request"));
    responses_.insert_or_assign(std::move(hash), entry.at("response"));
  }
}

RecordedChatClient RecordedChatClient::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open chat fixture " + path.string());
  try {
    return RecordedChatClient(json::parse(in));
  } catch (const json::exception& e) {
    throw InputError("malformed chat fixture " + path.string() + ": " + e.what());
  }
}

json RecordedChatClient::complete(const json& request) const {
  const std::string hash = request_hash(request);
  const auto it = responses_.find(hash);
  if (it == responses_.end()) throw ClientError("no recorded response for request " + hash, 404);
  return it->second;
}

json ScriptedChatClient::complete(const json& request) const {
  {
    std::lock_guard lock(mutex_);
    last_request_ = request;
  }
  return assistant_reply(content_);
}

json ScriptedChatClient::last_request() const {
  std::lock_guard lock(mutex_);
  return last_request_;
}

}  // namespace lernr
