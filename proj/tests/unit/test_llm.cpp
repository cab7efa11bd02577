#include <gtest/gtest.h>

#include "cmg/llm.hpp"
#include "cmg/planner.hpp"
#include "mock_llm.hpp"

using namespace cmg;
using nlohmann::json;
using fixtures::MockLlmServer;
using fixtures::ScriptedReply;

namespace {

LlmConfig fast_config(const MockLlmServer& server) {
  LlmConfig c;
  c.endpoint = server.endpoint();
  c.api_key = "test-key";
  c.timeout_s = 2.0;
  c.max_retries = 2;
  c.backoff_s = 0.01;
  return c;
}

const json kParams = {{"n", 4}, {"s", 2.0}, {"sigma", 0.4}, {"alpha", 0.3}};
const std::map<std::string, std::string> kVars = {{"scene", "a public square"}, {"n", "4"}};

}  // namespace

TEST(Llm, HappyPath) {
  MockLlmServer server({fixtures::ok(kParams)});
  PlannerLLMClient client(fast_config(server));
  const auto r = client.request("derive_params", kVars);
  EXPECT_EQ(r.retries, 0);
  EXPECT_EQ(r.value, kParams);
  ASSERT_EQ(server.requests(), 1u);
  const json sent = json::parse(server.bodies()[0]);
  EXPECT_EQ(sent["model"], "gpt-4");
  EXPECT_NE(sent["messages"][1]["content"].get<std::string>().find("a public square"), std::string::npos);
}

TEST(Llm, MalformedTwiceThenValid) {
  MockLlmServer server({{200, "{not json", 0}, {200, fixtures::chat_reply("oops"), 0}, fixtures::ok(kParams)});
  PlannerLLMClient client(fast_config(server));
  const auto r = client.request("derive_params", kVars);
  EXPECT_EQ(r.retries, 2);
  EXPECT_EQ(r.value, kParams);
  EXPECT_EQ(server.requests(), 3u);
}

TEST(Llm, SchemaViolationAfterRetries) {
  json bad = kParams;
  bad["sigma"] = 3.0;
  MockLlmServer server({fixtures::ok(bad)});
  PlannerLLMClient client(fast_config(server));
  try {
    client.request("derive_params", kVars);
    FAIL() << "expected LlmError";
  } catch (const LlmError& e) {
    EXPECT_EQ(e.kind, LlmErrorKind::SchemaViolation);
    EXPECT_EQ(e.attempts, 3);
    EXPECT_NE(e.raw_response.find("sigma"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("$.sigma"), std::string::npos);
  }
  EXPECT_EQ(server.requests(), 3u);
}

TEST(Llm, NonSuccessStatus) {
  MockLlmServer server({{503, "busy", 0}});
  PlannerLLMClient client(fast_config(server));
  try {
    client.request("derive_params", kVars);
    FAIL() << "expected LlmError";
  } catch (const LlmError& e) {
    EXPECT_EQ(e.kind, LlmErrorKind::HttpStatus);
    EXPECT_EQ(e.http_status, 503);
    EXPECT_EQ(e.raw_response, "busy");
  }
}

TEST(Llm, Timeout) {
  MockLlmServer server({{200, fixtures::chat_reply(kParams), 1500}});
  LlmConfig c = fast_config(server);
  c.timeout_s = 0.3;
  c.max_retries = 0;
  PlannerLLMClient client(c);
  try {
    client.request("derive_params", kVars);
    FAIL() << "expected LlmError";
  } catch (const LlmError& e) {
    EXPECT_EQ(e.kind, LlmErrorKind::Timeout);
    EXPECT_EQ(e.attempts, 1);
  }
}

TEST(Llm, OfflineAndUnconfigured) {
  LlmConfig c;
  PlannerLLMClient none(c);
  try {
    none.request("derive_params", kVars);
    FAIL() << "expected LlmError";
  } catch (const LlmError& e) {
    EXPECT_EQ(e.kind, LlmErrorKind::NotConfigured);
  }
  c.endpoint = "http://127.0.0.1:9/x";
  c.offline = true;
  EXPECT_FALSE(c.configured());
}

TEST(Llm, TemplatesRenderAndReject) {
  EXPECT_EQ(render_template("a {{x}} b {{y}}", {{"x", "1"}, {"y", "2"}}), "a 1 b 2");
  EXPECT_THROW(render_template("{{missing}}", {}), ValidationError);
  for (const char* id : {"derive_params", "motion_plans", "interpret_event"}) EXPECT_FALSE(prompt_template(id).empty());
  EXPECT_THROW(prompt_template("nope"), ValidationError);
}

TEST(Llm, ReplySchemaPaths) {
  try {
    validate_llm_reply("motion_plans", json{{"groups", {{{"activity", "chat"}, {"text", "x"}, {"formation", "blob"}}}}});
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.path, "$.groups[0].formation");
  }
  try {
    validate_llm_reply("interpret_event", json{{"pattern", "Queuing"}, {"agents", {1, -2}}});
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.path, "$.agents[1]");
  }
  EXPECT_NO_THROW(validate_llm_reply("interpret_event", json{{"pattern", "encircling"}}));
}

TEST(Llm, PlannerFallsBackWhenEndpointFails) {
  MockLlmServer server({{500, "down", 0}});
  PlannerLLMClient client(fast_config(server));
  const Skeleton skel = Skeleton::humanml22();
  const auto plan = plan_scene("a public square", CrowdParams{4, 2.0, 0.5, 0.3}, Backend::Llm, 1, skel, PlannerConfig{},
                               &client);
  EXPECT_EQ(plan.provenance, "fallback");
  EXPECT_NE(plan.provenance_note.find("fallback"), std::string::npos);
  plan.validate(skel.joints());
  // Same plan as the deterministic planner.
  const auto det = plan_scene("a public square", CrowdParams{4, 2.0, 0.5, 0.3}, Backend::Fallback, 1, skel, PlannerConfig{});
  ASSERT_EQ(plan.n(), det.n());
  for (int i = 0; i < plan.n(); ++i) EXPECT_EQ(agent_path(plan, i), agent_path(det, i));
}

TEST(Llm, PlannerUsesValidCandidate) {
  const json groups = {{"groups",
                        {{{"activity", "chat"}, {"text", "a person chats with a friend"}, {"formation", "cluster"}},
                         {{"activity", "walk"}, {"text", "a person strolls"}, {"formation", "line"}}}}};
  MockLlmServer server({fixtures::ok(groups)});
  PlannerLLMClient client(fast_config(server));
  const Skeleton skel = Skeleton::humanml22();
  const auto plan = plan_scene("a public square", CrowdParams{4, 2.0, 0.5, 0.3}, Backend::Llm, 1, skel, PlannerConfig{},
                               &client);
  EXPECT_EQ(plan.provenance, "llm");
  EXPECT_EQ(plan.groups[0].activity_text, "a person chats with a friend");
  EXPECT_EQ(server.requests(), 3u);
}

TEST(Llm, DeriveParamsFallsBack) {
  MockLlmServer server({{200, "garbage", 0}});
  PlannerLLMClient client(fast_config(server));
  std::string note;
  const auto p = derive_params("a public square", 5, Backend::Llm, &client, &note);
  EXPECT_EQ(p.n, 5);
  EXPECT_FALSE(note.empty());
  EXPECT_EQ(p.s, derive_params("a public square", 5, Backend::Fallback).s);
}
