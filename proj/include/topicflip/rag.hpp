#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topicflip/corpus.hpp"
#include "topicflip/llm.hpp"
#include "topicflip/retrieval.hpp"

namespace topicflip {

struct RagConfig {
  int k = 3;
  double temperature = 1.0;
  bool rewrite_enabled = false;
  /// When true, retrieval scores the original query even if rewriting ran.
  bool retrieve_with_original = false;
  std::string retriever_name = "contriever";
  uint64_t seed = 0;
};

struct RagAnswer {
  std::string query_id;
  std::string rewritten_query;
  std::vector<std::string> retrieved_ids;
  std::string answer_text;
  int opinion_score = 1;
  bool rewrite_fallback = false;
};

/// History-aware rewrite; the mock path is the identity rewrite and any
/// endpoint failure falls back to the identity with the flag set.
Query rewrite_query(LlmClient& client, const std::vector<ChatMessage>& history, const Query& q,
                    bool* fallback_flag = nullptr);

/// rewrite -> retrieve top-K -> grounded generation -> opinion score.
RagAnswer rag_answer(const RagConfig& cfg, const Corpus& corpus, const IRetriever& retriever,
                     LlmClient& client, const Topic& topic, const Query& query);

/// Convenience overload wiring a plain scorer through ScorerRetriever.
RagAnswer rag_answer(const RagConfig& cfg, const Corpus& corpus, const TokenizedCorpus& tokenized,
                     const IScorer& scorer, LlmClient& client, const Vocabulary& vocab,
                     const Topic& topic, const Query& query);

/// One answer per query, in input order.
std::vector<RagAnswer> run_topic(const RagConfig& cfg, const Corpus& corpus,
                                 const IRetriever& retriever, LlmClient& client,
                                 const Topic& topic);

nlohmann::json rag_answer_to_json(const RagAnswer& a);
RagAnswer rag_answer_from_json(const nlohmann::json& j);

}  // namespace topicflip
