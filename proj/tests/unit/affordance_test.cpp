#include <fstream>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "lernr/affordance.hpp"
#include "lernr/error.hpp"

// After the Eigen users: resolv.h defines a _res macro.
#include <httplib.h>

using namespace lernr;
using nlohmann::json;

namespace {

RecordedChatClient recorded_client() {
  return RecordedChatClient::from_file(fixtures::data_dir() / "affordance_recorded.json");
}

}  // namespace

TEST(Affordance, SystemPromptMatchesDataFile) {
  std::ifstream in(std::string(LERNR_SOURCE_DIR) + "/core/data/affordance_system_prompt.txt");
  std::stringstream s;
  s << in.rdbuf();
  std::string text = s.str();
  while (!text.empty() && text.back() == '\n') text.pop_back();
  EXPECT_EQ(text, default_system_prompt());
}

TEST(Affordance, RequestShape) {
  AffordanceRequest r;
  r.query = "  Where can I nap? ";
  const json req = build_chat_request(r, "SYSTEM");
  EXPECT_EQ(req["model"], "gpt-3.5-turbo");
  EXPECT_EQ(req["temperature"], 0.0);
  ASSERT_EQ(req["messages"].size(), 2u);
  EXPECT_EQ(req["messages"][0]["role"], "system");
  EXPECT_EQ(req["messages"][0]["content"], "SYSTEM");
  EXPECT_EQ(req["messages"][1]["content"], "Where can I nap?");
  r.query = " ";
  EXPECT_THROW(build_chat_request(r, "SYSTEM"), InputError);
}

TEST(Affordance, RecordedExamples) {
  const RecordedChatClient client = recorded_client();
  EXPECT_EQ(client.size(), 3u);
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

TEST(Affordance, UnrecordedRequestIsClientError) {
  const RecordedChatClient client = recorded_client();
  AffordanceRequest r;
  r.query = "Where is the cat?";
  try {
    resolve_affordance(r, client);
    FAIL();
  } catch (const ClientError& e) {
    EXPECT_EQ(e.status(), 404);
  }
}

TEST(Affordance, ParsingRules) {
  EXPECT_EQ(parse_targets(" kitchen ,, office ,", 8), (std::vector<std::string>{"kitchen", "office"}));
  EXPECT_EQ(parse_targets("a, b, c, d", 2), (std::vector<std::string>{"a", "b"}));
  AffordanceRequest r;
  r.query = "anything";
  const ScriptedChatClient empty(" , ");
  try {
    resolve_affordance(r, empty);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(e.raw_response().find("\"content\""), std::string::npos);
  }
}

TEST(Affordance, MalformedReplyIsParseError) {
  struct Broken final : ChatClient {
    json complete(const json&) const override { return json{{"choices", json::array()}}; }
  };
  AffordanceRequest r;
  r.query = "anything";
  EXPECT_THROW(resolve_affordance(r, Broken{}), ParseError);
}

TEST(Affordance, ScriptedClientRecordsRequest) {
  const ScriptedChatClient client("bedroom");
  AffordanceRequest r;
  r.query = "Where can I sleep";
  r.model = "some-model";
  EXPECT_EQ(resolve_affordance(r, client, "S").targets, std::vector<std::string>{"bedroom"});
  EXPECT_EQ(client.last_request()["model"], "some-model");
}

TEST(Affordance, HttpClientTalksChatCompletions) {
  httplib::Server server;
  std::string auth;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    const json body = json::parse(req.body);
    if (body["messages"][1]["content"] == "fail") return void(res.status = 500);
    res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "kitchen, pantry"}}}}}}}.dump(),
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const HttpChatClient client("http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions", "k-123");
  AffordanceRequest r;
  r.query = "I am hungry";
  EXPECT_EQ(resolve_affordance(r, client).targets, (std::vector<std::string>{"kitchen", "pantry"}));
  EXPECT_EQ(auth, "Bearer k-123");
  r.query = "fail";
  try {
    resolve_affordance(r, client);
    ADD_FAILURE() << "expected ClientError";
  } catch (const ClientError& e) {
    EXPECT_EQ(e.status(), 500);
  }
  server.stop();
  t.join();
}

TEST(AffordanceSearch, OneLegPerTarget) {
  const SyntheticProvider p;
  const FeatureMap map = fixtures::planted_map(
      p, 30, {{{5, 5}, "kitchen"}, {{24, 6}, "dining room"}, {{14, 24}, "living room"}, {{25, 25}, "office"}}, 1);
  AffordanceRequest r;
  r.query = "Find me a drink to wake me up";
  const AffordanceSearchResult out = affordance_search(map, r, recorded_client(), {15, 15}, {"x", {}, 0.07}, p);
  ASSERT_EQ(out.resolution.targets.size(), 4u);
  ASSERT_EQ(out.legs.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(out.legs[k].query, out.resolution.targets[k]);
    EXPECT_TRUE(out.legs[k].ok()) << out.legs[k].error;
  }
}
