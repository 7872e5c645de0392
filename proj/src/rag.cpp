#include "topicflip/rag.hpp"

namespace topicflip {

using nlohmann::json;

Query rewrite_query(LlmClient& client, const std::vector<ChatMessage>& history, const Query& q,
                    bool* fallback_flag) {
  if (fallback_flag) *fallback_flag = false;
  ChatExchange ex;
  ex.task = LlmTask::RewriteQuery;
  json hist = json::array();
  for (const auto& m : history) hist.push_back(m.role + ": " + m.content);
  ex.params = {{"history", hist}, {"query_text", q.text}};
  try {
    ChatResult r = client.complete(ex);
    if (r.text.empty()) throw TransportError("empty rewrite", 1);
    return Query{q.id, r.text};
  } catch (const TransportError&) {
    if (fallback_flag) *fallback_flag = true;
    return q;  // identity fallback keeps the pipeline alive
  }
}

RagAnswer rag_answer(const RagConfig& cfg, const Corpus& corpus, const IRetriever& retriever,
                     LlmClient& client, const Topic& topic, const Query& query) {
  if (corpus.empty()) throw InvalidArgument("rag_answer: empty corpus");
  if (cfg.k < 1) throw InvalidArgument("rag_answer: K must be >= 1");

  RagAnswer answer;
  answer.query_id = query.id;

  Query effective = query;
  if (cfg.rewrite_enabled) {
    bool fallback = false;
    effective = rewrite_query(client, {}, query, &fallback);
    answer.rewrite_fallback = fallback;
  }
  answer.rewritten_query = effective.text;

  const Query& retrieval_query = cfg.retrieve_with_original ? query : effective;
  RankedList top = retriever.topk(retrieval_query, static_cast<size_t>(cfg.k));
  json docs = json::array();
  for (const auto& e : top.entries) {
    answer.retrieved_ids.push_back(e.doc_id);
    docs.push_back(corpus.doc(e.doc_id).text);
  }

  ChatExchange gen;
  gen.task = LlmTask::RagAnswer;
  gen.params = {{"query_text", effective.text}, {"title", topic.title}, {"documents", docs}};
  ChatResult r = client.complete(gen);
  if (r.text.empty()) throw TransportError("generator returned empty answer", 1);
  answer.answer_text = r.text;
  answer.opinion_score = classify_opinion(client, topic, answer.answer_text);
  return answer;
}

RagAnswer rag_answer(const RagConfig& cfg, const Corpus& corpus, const TokenizedCorpus& tokenized,
                     const IScorer& scorer, LlmClient& client, const Vocabulary& vocab,
                     const Topic& topic, const Query& query) {
  ScorerRetriever retriever(scorer, tokenized, vocab);
  return rag_answer(cfg, corpus, retriever, client, topic, query);
}

std::vector<RagAnswer> run_topic(const RagConfig& cfg, const Corpus& corpus,
                                 const IRetriever& retriever, LlmClient& client,
                                 const Topic& topic) {
  if (topic.queries.empty()) throw InvalidArgument("run_topic: topic has no queries");
  std::vector<RagAnswer> answers;
  std::vector<std::string> errors;
  for (const auto& q : topic.queries) {
    try {
      answers.push_back(rag_answer(cfg, corpus, retriever, client, topic, q));
    } catch (const std::exception& e) {
      errors.push_back(q.id + ": " + e.what());
    }
  }
  if (answers.empty() && !errors.empty()) {
    std::string all;
    for (const auto& e : errors) all += (all.empty() ? "" : "; ") + e;
    throw Error("run_topic: every query failed: " + all);
  }
  return answers;
}

json rag_answer_to_json(const RagAnswer& a) {
  return json{{"query_id", a.query_id},
              {"rewritten_query", a.rewritten_query},
              {"retrieved_ids", a.retrieved_ids},
              {"answer_text", a.answer_text},
              {"opinion_score", a.opinion_score},
              {"rewrite_fallback", a.rewrite_fallback}};
}

RagAnswer rag_answer_from_json(const json& j) {
  RagAnswer a;
  a.query_id = j.at("query_id").get<std::string>();
  a.rewritten_query = j.at("rewritten_query").get<std::string>();
  a.retrieved_ids = j.at("retrieved_ids").get<std::vector<std::string>>();
  a.answer_text = j.at("answer_text").get<std::string>();
  a.opinion_score = j.at("opinion_score").get<int>();
  a.rewrite_fallback = j.at("rewrite_fallback").get<bool>();
  return a;
}

}  // namespace topicflip
