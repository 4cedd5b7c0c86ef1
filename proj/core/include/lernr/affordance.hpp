#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lernr/search.hpp"

namespace lernr {

struct AffordanceRequest {
  std::string query;
  std::string model = "gpt-3.5-turbo";
  std::size_t max_targets = 8;
  double temperature = 0.0;
};

struct AffordanceResult {
  std::vector<std::string> targets;
  std::string raw_response;
};

// A chat-completion endpoint. `request` is {model, messages:[{role, content}],
// ...}; the reply is the full response object, whose assistant content lives
// at choices[0].message.content.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual nlohmann::json complete(const nlohmann::json& request) const = 0;
};

// Live HTTP client. `url` is the full completions URL, e.g.
// https://api.openai.com/v1/chat/completions.
class HttpChatClient final : public ChatClient {
 public:
  explicit HttpChatClient(std::string url, std::string api_key = {});
  nlohmann::json complete(const nlohmann::json& request) const override;

 private:
  std::string scheme_host_port_;
  std::string path_;
  std::string api_key_;
};

// Replays recorded responses. The fixture is a JSON array of
//   {"request_hash": "<16 hex digits>", "request": {...}, "response": {...}}
// where request_hash = request_hash(request) and "request" is kept for audit.
class RecordedChatClient final : public ChatClient {
 public:
  explicit RecordedChatClient(const nlohmann::json& fixture);
  static RecordedChatClient from_file(const std::filesystem::path& path);

  nlohmann::json complete(const nlohmann::json& request) const override;
  std::size_t size() const { return responses_.size(); }

 private:
  std::map<std::string, nlohmann::json> responses_;
};

// Answers every request with the same assistant content.
class ScriptedChatClient final : public ChatClient {
 public:
  explicit ScriptedChatClient(std::string content) : content_(std::move(content)) {}
  nlohmann::json complete(const nlohmann::json& request) const override;

  nlohmann::json last_request() const;

 private:
  std::string content_;
  mutable std::mutex mutex_;
  mutable nlohmann::json last_request_;
};

// FNV-1a of the compact JSON dump (keys sorted), as 16 hex digits.
std::string request_hash(const nlohmann::json& request);

// Reconstructed system prompt (also shipped as data/affordance_system_prompt.txt).
std::string_view default_system_prompt();

nlohmann::json build_chat_request(const AffordanceRequest& request, std::string_view system_prompt);

// Comma split, trim, drop empties, keep order, keep at most max_targets.
std::vector<std::string> parse_targets(std::string_view content, std::size_t max_targets);

// Throws ClientError on transport/status failure and ParseError (carrying the
// raw response) when no target can be read from the reply.
AffordanceResult resolve_affordance(const AffordanceRequest& request, const ChatClient& client,
                                    std::string_view system_prompt = default_system_prompt());

struct AffordanceSearchResult {
  AffordanceResult resolution;
  std::vector<SearchLeg> legs;
};

AffordanceSearchResult affordance_search(const FeatureMap& map, const AffordanceRequest& request,
                                         const ChatClient& client, Cell start, const QuerySpec& query_template,
                                         const EmbeddingProvider& provider, const SearchOptions& options = {},
                                         std::string_view system_prompt = default_system_prompt());

}  // namespace lernr
