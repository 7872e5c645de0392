#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "topicflip/corpus.hpp"

#include "json.hpp"

namespace topicflip {

/// Every generative capability the lab needs goes through one of these
/// task kinds; prompt templates and mock rules are keyed by them.
enum class LlmTask {
  Complete,
  ExtractNodes,
  DocNodes,
  AdversarialEdit,
  ClassifyOpinion,
  ParaphraseQuery,
  RewriteQuery,
  RagAnswer,
};

std::string to_string(LlmTask task);

struct ChatMessage {
  std::string role;
  std::string content;
};

/// A request: typed task + structured parameters, rendered into role-tagged
/// messages for the remote path. The mock consumes the parameters directly.
struct ChatExchange {
  LlmTask task = LlmTask::Complete;
  nlohmann::json params;
  std::vector<ChatMessage> messages;
};

struct ChatResult {
  std::string text;
  int prompt_tokens = 0;
  int completion_tokens = 0;
  double latency_ms = 0.0;
};

/// Renders the versioned prompt template for a task with its named slots
/// filled from `params`.
std::vector<ChatMessage> render_prompt(LlmTask task, const nlohmann::json& params);
/// The raw template text (named slots in braces), for documentation and
/// trace output.
std::string prompt_template(LlmTask task);

struct LlmEndpointConfig {
  std::string base_url = "http://127.0.0.1:8080";
  std::string model = "default";
  double timeout_seconds = 30.0;
  int max_retries = 3;
  int max_in_flight = 4;
  double temperature = 1.0;
  std::string credential_env = "TOPICFLIP_API_KEY";
  double backoff_ms = 200.0;  // doubles per retry; 0 in tests
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual ChatResult complete(const ChatExchange& exchange) = 0;
  virtual bool is_mock() const = 0;

  /// Request/response transcripts appended as JSONL when set; credentials
  /// never appear in the trace.
  void set_trace_path(const std::string& path) { trace_path_ = path; }
  size_t calls_for(LlmTask task) const;

 protected:
  void record_call(const ChatExchange& exchange, const ChatResult& result);

 private:
  std::string trace_path_;
  std::map<LlmTask, size_t> call_counts_;
};

/// Fixture word sets shared by the mock backend, the toy-corpus generator,
/// and the tests that audit them.
struct MockLexicons {
  std::vector<std::string> pro;
  std::vector<std::string> con;
  std::vector<std::string> stopwords;
  std::map<std::string, std::string> synonyms;
  std::string con_template_prefix;  // "critics argue that"
  std::string con_template_suffix;  // "raises serious concerns ."
  std::string pro_template_prefix;  // "advocates note that"
  std::string pro_template_suffix;  // "offers clear benefits ."
  /// Every fixed word the mock can emit, for vocabulary construction.
  std::vector<std::string> all_words() const;
};

const MockLexicons& mock_lexicons();

/// Deterministic in-process stand-in for the generative endpoint: same
/// seed + same request bytes -> byte-identical response.
class MockLlmClient final : public LlmClient {
 public:
  explicit MockLlmClient(uint64_t seed);
  ChatResult complete(const ChatExchange& exchange) override;
  bool is_mock() const override { return true; }
  uint64_t seed() const { return seed_; }

 private:
  std::string respond(const ChatExchange& exchange) const;
  uint64_t seed_;
};

/// Minimal HTTP response surface for the chat-completion wire protocol.
struct HttpResponse {
  int status = 0;
  std::string body;
  bool transport_ok = true;
  std::string error;
};

using HttpTransport =
    std::function<HttpResponse(const std::string& url, const std::string& body,
                               const std::vector<std::pair<std::string, std::string>>& headers,
                               double timeout_seconds)>;

/// Default transport backed by cpp-httplib.
HttpTransport make_httplib_transport();

/// Chat-completion client for any endpoint speaking the de facto
/// message-role JSON schema. Retries with exponential backoff.
class RemoteLlmClient final : public LlmClient {
 public:
  explicit RemoteLlmClient(LlmEndpointConfig config, HttpTransport transport = nullptr);
  ~RemoteLlmClient() override;
  ChatResult complete(const ChatExchange& exchange) override;
  bool is_mock() const override { return false; }

 private:
  LlmEndpointConfig config_;
  HttpTransport transport_;
  std::unique_ptr<class Semaphore> in_flight_;
};

/// Opinion score on the CON=0 / NEUTRAL=1 / PRO=2 scale. Mock rule:
/// strictly more PRO-lexicon hits -> 2, strictly more CON hits -> 0,
/// else 1. Unparseable remote responses get one structured re-prompt.
int classify_opinion(LlmClient& client, const Topic& topic, const std::string& answer_text);

/// Meaning-preserving rewrite of a query; the mock substitutes every
/// synonym-table content word and keeps word order.
Query paraphrase_query(LlmClient& client, const Query& query);

}  // namespace topicflip
