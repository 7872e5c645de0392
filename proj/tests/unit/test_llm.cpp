#include <atomic>
#include <cstdlib>

#include "doctest.h"
#include "topicflip/llm.hpp"

using namespace topicflip;

namespace {

Topic toy_topic() {
  Topic t;
  t.id = "t1";
  t.title = "Is widgetry beneficial ?";
  t.queries = {{"q0", "is widgetry good for cities ?"}, {"q1", "does widgetry affect workers ?"}};
  t.target_stance = StanceLabel::Con;
  return t;
}

}  // namespace

TEST_CASE("mock complete is referentially transparent") {
  MockLlmClient a(42), b(42), c(43);
  ChatExchange ex;
  ex.task = LlmTask::Complete;
  ex.params = {{"prompt", "hello"}};
  CHECK(a.complete(ex).text == b.complete(ex).text);
  CHECK(a.complete(ex).text == a.complete(ex).text);
  CHECK(a.complete(ex).text != c.complete(ex).text);  // seed is part of the function
}

TEST_CASE("classify_opinion mock rule: lexicon hit counting") {
  MockLlmClient mock(1);
  Topic t = toy_topic();
  // 3 PRO hits vs 1 CON hit
  CHECK(classify_opinion(mock, t,
                         "the benefits are helpful and promising despite one concern about "
                         "concerns") == 2);
  // zero hits either way
  CHECK(classify_opinion(mock, t, "the report describes the topic in plain terms") == 1);
  // equal nonzero hits
  CHECK(classify_opinion(mock, t, "benefits exist but concerns remain") == 1);
  // strictly more CON
  CHECK(classify_opinion(mock, t, "critics warn of harmful drawbacks") == 0);
  CHECK_THROWS_AS(classify_opinion(mock, t, ""), InvalidArgument);
}

TEST_CASE("paraphrase_query mock rule: synonym substitution, order preserved") {
  MockLlmClient mock(2);
  Query q{"q7", "is widgetry good for people ?"};
  Query p = paraphrase_query(mock, q);
  CHECK(p.text == "is widgetry beneficial for citizens ?");
  CHECK(p.id != q.id);

  Query none{"q8", "widgetry affects cities ?"};
  Query p2 = paraphrase_query(mock, none);
  CHECK(p2.text == "widgetry affects cities ?");
  CHECK(p2.id != none.id);

  // determinism under a fixed seed
  CHECK(paraphrase_query(mock, q).text == p.text);
}

TEST_CASE("remote client retries transient failures then succeeds") {
  auto counter = std::make_shared<std::atomic<int>>(0);
  HttpTransport flaky = [counter](const std::string&, const std::string&,
                                  const std::vector<std::pair<std::string, std::string>>&,
                                  double) -> HttpResponse {
    int n = ++*counter;
    if (n <= 2) return {500, "busy", true, ""};
    return {200,
            R"({"choices":[{"message":{"content":"fine"}}],"usage":{"prompt_tokens":5,"completion_tokens":1}})",
            true, ""};
  };
  LlmEndpointConfig cfg;
  cfg.max_retries = 3;
  cfg.backoff_ms = 0;
  RemoteLlmClient client(cfg, flaky);
  ChatExchange ex;
  ex.task = LlmTask::Complete;
  ex.params = {{"prompt", "ping"}};
  ChatResult r = client.complete(ex);
  CHECK(r.text == "fine");
  CHECK(*counter == 3);
  CHECK(r.prompt_tokens == 5);
}

TEST_CASE("remote client surfaces exhausted retries with attempt count") {
  HttpTransport dead = [](const std::string&, const std::string&,
                          const std::vector<std::pair<std::string, std::string>>&,
                          double) -> HttpResponse {
    return {0, "", false, "connection refused"};
  };
  LlmEndpointConfig cfg;
  cfg.max_retries = 2;
  cfg.backoff_ms = 0;
  RemoteLlmClient client(cfg, dead);
  ChatExchange ex;
  ex.task = LlmTask::Complete;
  ex.params = {{"prompt", "ping"}};
  try {
    client.complete(ex);
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(e.attempts() == 3);  // initial try + 2 retries
  }
}

TEST_CASE("credential header comes from the configured environment variable") {
  std::vector<std::pair<std::string, std::string>> seen;
  HttpTransport capture = [&seen](const std::string&, const std::string&,
                                  const std::vector<std::pair<std::string, std::string>>& headers,
                                  double) -> HttpResponse {
    seen = headers;
    return {200, R"({"choices":[{"message":{"content":"ok"}}]})", true, ""};
  };
  ::setenv("TOPICFLIP_TEST_KEY", "sk-secret", 1);
  LlmEndpointConfig cfg;
  cfg.credential_env = "TOPICFLIP_TEST_KEY";
  cfg.backoff_ms = 0;
  RemoteLlmClient client(cfg, capture);
  ChatExchange ex;
  ex.task = LlmTask::Complete;
  ex.params = {{"prompt", "x"}};
  client.complete(ex);
  bool found = false;
  for (const auto& [k, v] : seen) {
    if (k == "Authorization") {
      CHECK(v == "Bearer sk-secret");
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("prompt templates render slots and stay versioned per task") {
  auto msgs = render_prompt(LlmTask::ParaphraseQuery, {{"query_text", "is tea healthy ?"}});
  REQUIRE(msgs.size() == 2);
  CHECK(msgs[1].content.find("is tea healthy ?") != std::string::npos);
  CHECK(msgs[1].content.find("Rewrite the following query") != std::string::npos);

  auto rag = render_prompt(LlmTask::RagAnswer, {{"query_text", "why ?"},
                                                {"documents", {"doc one text", "doc two text"}}});
  CHECK(rag[1].content.find("Document 1: doc one text") != std::string::npos);
  CHECK(rag[1].content.find("only the retrieved documents") != std::string::npos);
}

TEST_CASE("mock rag answer follows majority stance and quotes doc words") {
  MockLlmClient mock(3);
  ChatExchange ex;
  ex.task = LlmTask::RagAnswer;
  ex.params = {{"query_text", "is widgetry good ?"},
               {"title", "widgetry"},
               {"documents",
                {"critics warn widgetry is harmful and risky for budgets",
                 "critics say widgetry brings drawbacks to schedules",
                 "reports describe widgetry and markets"}}};
  std::string answer = mock.complete(ex).text;
  CHECK(answer.find("critical") != std::string::npos);

  Topic t = toy_topic();
  CHECK(classify_opinion(mock, t, answer) == 0);

  // grounding: quoted words come from the retrieved documents
  std::string docs_joined =
      "critics warn widgetry is harmful and risky for budgets critics say widgetry brings "
      "drawbacks to schedules reports describe widgetry and markets";
  size_t pos = 0;
  while ((pos = answer.find('"', pos)) != std::string::npos) {
    size_t end = answer.find('"', pos + 1);
    if (end == std::string::npos) break;
    std::string quoted = answer.substr(pos + 1, end - pos - 1);
    CHECK(docs_joined.find(quoted) != std::string::npos);
    pos = end + 1;
  }

  // mixed stances (1 pro, 1 con, 1 neutral) -> neutral -> score 1
  ChatExchange mixed = ex;
  mixed.params["documents"] = {"advocates find widgetry helpful and beneficial",
                               "critics warn widgetry is harmful",
                               "reports describe widgetry"};
  std::string mixed_answer = mock.complete(mixed).text;
  CHECK(classify_opinion(mock, t, mixed_answer) == 1);
}

TEST_CASE("call counters track per-task usage") {
  MockLlmClient mock(4);
  ChatExchange ex;
  ex.task = LlmTask::RewriteQuery;
  ex.params = {{"history", nlohmann::json::array()}, {"query_text", "q"}};
  CHECK(mock.calls_for(LlmTask::RewriteQuery) == 0);
  mock.complete(ex);
  mock.complete(ex);
  CHECK(mock.calls_for(LlmTask::RewriteQuery) == 2);
  CHECK(mock.calls_for(LlmTask::RagAnswer) == 0);
}
