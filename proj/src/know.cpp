#include "topicflip/know.hpp"

#include <algorithm>
#include <set>

#include "topicflip/rand.hpp"
#include "topicflip/retrieval.hpp"

namespace topicflip {

using nlohmann::json;

namespace {

std::vector<NodeInfo> parse_node_array(const std::string& text) {
  json j = json::parse(text);  // throws json::exception on failure
  if (!j.is_array()) throw ParseError("node response is not a JSON array");
  std::vector<NodeInfo> nodes;
  for (const auto& item : j) {
    NodeInfo n;
    n.phrase = item.at("phrase").get<std::string>();
    n.rationale = item.value("rationale", "");
    if (n.phrase.empty()) throw ParseError("node with empty phrase");
    nodes.push_back(std::move(n));
  }
  return nodes;
}

std::vector<NodeInfo> complete_node_list(LlmClient& client, ChatExchange ex,
                                         const std::string& what) {
  ChatResult r = client.complete(ex);
  try {
    return parse_node_array(r.text);
  } catch (const std::exception&) {
    // One structured re-prompt, then give up.
    ChatExchange retry = ex;
    retry.messages = render_prompt(ex.task, ex.params);
    retry.messages.push_back(
        {"user", "Your previous response could not be parsed. Reply with a JSON array of "
                 "objects with keys \"phrase\" and \"rationale\", and nothing else."});
    ChatResult r2 = client.complete(retry);
    try {
      return parse_node_array(r2.text);
    } catch (const std::exception& e) {
      throw ParseError("unparseable " + what + " response after re-prompt: " + e.what());
    }
  }
}

}  // namespace

NodeList extract_key_nodes(LlmClient& client, const Topic& topic, int k_nodes) {
  if (topic.queries.empty()) throw InvalidArgument("extract_key_nodes: topic has no queries");
  if (k_nodes < 1) throw InvalidArgument("extract_key_nodes: k_nodes must be >= 1");
  ChatExchange ex;
  ex.task = LlmTask::ExtractNodes;
  json queries = json::array();
  for (const auto& q : topic.queries) queries.push_back(q.text);
  ex.params = {{"title", topic.title}, {"queries", queries}, {"k_nodes", k_nodes}};
  auto nodes = complete_node_list(client, ex, "key-node");
  if (static_cast<int>(nodes.size()) != k_nodes)
    throw ParseError("expected " + std::to_string(k_nodes) + " nodes, got " +
                     std::to_string(nodes.size()));
  return NodeList{topic.id, std::move(nodes)};
}

DocNodeList doc_specific_nodes(LlmClient& client, const Document& doc, const NodeList& nodes) {
  if (nodes.nodes.empty()) throw InvalidArgument("doc_specific_nodes: empty node list");
  ChatExchange ex;
  ex.task = LlmTask::DocNodes;
  json phrases = json::array();
  for (const auto& n : nodes.nodes) phrases.push_back(n.phrase);
  ex.params = {{"doc_text", doc.text}, {"nodes", phrases}};
  auto missing = complete_node_list(client, ex, "doc-node");
  std::set<std::string> known;
  for (const auto& n : nodes.nodes) known.insert(n.phrase);
  for (const auto& m : missing) {
    if (!known.count(m.phrase))
      throw IntegrityError("doc-specific node '" + m.phrase + "' is not in the topic node list");
  }
  return DocNodeList{doc.id, std::move(missing)};
}

std::string adversarial_edit(LlmClient& client, const std::string& doc_text,
                             const DocNodeList& missing, StanceLabel stance, int t,
                             uint64_t sample_seed) {
  if (doc_text.empty()) throw InvalidArgument("adversarial_edit: empty document");
  if (t < 1) throw InvalidArgument("adversarial_edit: t must be >= 1");
  ChatExchange ex;
  ex.task = LlmTask::AdversarialEdit;
  json phrases = json::array();
  for (const auto& n : missing.missing_nodes) phrases.push_back(n.phrase);
  ex.params = {{"doc_text", doc_text},
               {"missing", phrases},
               {"stance", to_string(stance)},
               {"t", t},
               {"sample_seed", sample_seed}};
  ChatResult r = client.complete(ex);
  if (r.text.empty()) throw TransportError("edit returned empty document", 1);
  return r.text;
}

EditCandidate filter_candidate(const std::string& candidate_text, const Document& original,
                               const KnowAttackConfig& cfg, const EmbeddingTable& emb,
                               const Vocabulary& vocab) {
  if (original.text.empty()) throw InvalidArgument("filter_candidate: empty original document");
  EditCandidate c;
  c.text = candidate_text;
  TokenSeq cand = vocab.encode(candidate_text);
  TokenSeq orig = vocab.encode(original.text);
  c.edit_ratio_value = edit_ratio(cand, orig);
  c.semantic_distance_value = semantic_distance(cand, orig, emb);
  c.passed_filter =
      c.edit_ratio_value <= cfg.epsilon && c.semantic_distance_value <= cfg.lambda_dist();
  return c;
}

int update_augment_factor(int t, const std::vector<EditCandidate>& iteration_candidates,
                          const KnowAttackConfig& cfg) {
  bool any_passed = false;
  bool passed_below_partial = false;
  double rho = cfg.partial_edit_threshold();
  for (const auto& c : iteration_candidates) {
    if (!c.passed_filter) continue;
    any_passed = true;
    if (c.edit_ratio_value < rho) passed_below_partial = true;
  }
  int next;
  if (!any_passed) {
    next = t - cfg.delta;
  } else if (passed_below_partial) {
    next = t + cfg.delta;
  } else {
    next = t;
  }
  return std::clamp(next, cfg.t_min, cfg.t_max);
}

KnowAttackResult run_know_attack(LlmClient& client, const SurrogateRanker& reward,
                                 const Document& doc_tar, const Topic& topic, StanceLabel stance,
                                 const KnowAttackConfig& cfg, const Vocabulary& vocab,
                                 const EmbeddingTable& emb) {
  if (topic.queries.empty()) throw InvalidArgument("run_know_attack: topic has no queries");
  if (cfg.iterations < 1 || cfg.samples < 1)
    throw InvalidArgument("run_know_attack: N and I must be >= 1");
  if (cfg.t_initial < cfg.t_min || cfg.t_initial > cfg.t_max)
    throw InvalidArgument("run_know_attack: t0 outside configured range");

  KnowAttackResult result;
  result.nodes = extract_key_nodes(client, topic, cfg.k_nodes);
  result.missing = doc_specific_nodes(client, doc_tar, result.nodes);

  auto query_tokens = tokenize_queries(topic.queries, vocab);
  int t = cfg.fixed_t.value_or(cfg.t_initial);
  bool have_best = false;
  double best_rel = 0.0;
  std::string best_text;

  for (int n = 1; n <= cfg.iterations; ++n) {
    result.t_trajectory.push_back(t);
    std::vector<EditCandidate> iteration_candidates;
    for (int i = 1; i <= cfg.samples; ++i) {
      uint64_t sample_seed =
          derive_seed(cfg.seed, "know-edit", static_cast<uint64_t>(n) * 1000 + i);
      std::string text =
          adversarial_edit(client, doc_tar.text, result.missing, stance, t, sample_seed);

      KnowAuditRecord rec;
      rec.iteration = n;
      rec.sample = i;
      rec.t_used = t;
      rec.text = text;

      bool polarity_ok = true;
      if (cfg.polarity_control) {
        int score = classify_opinion(client, topic, text);
        polarity_ok = !((stance == StanceLabel::Con && score == stance_score(StanceLabel::Pro)) ||
                        (stance == StanceLabel::Pro && score == stance_score(StanceLabel::Con)));
      }
      rec.polarity_ok = polarity_ok;
      if (!polarity_ok) {
        // Discarded before filtering; does not join the iteration pool.
        result.audit.push_back(std::move(rec));
        continue;
      }
      EditCandidate cand = filter_candidate(text, doc_tar, cfg, emb, vocab);
      cand.iteration = n;
      cand.sample = i;
      cand.t_used = t;
      rec.edit_ratio_value = cand.edit_ratio_value;
      rec.semantic_distance_value = cand.semantic_distance_value;
      rec.passed = cand.passed_filter;
      if (cand.passed_filter) {
        double rel = avg_relevance(reward, query_tokens, vocab.encode(text));
        rec.avg_relevance = rel;
        if (!have_best || rel > best_rel) {  // ties keep the earliest (n, i)
          have_best = true;
          best_rel = rel;
          best_text = text;
        }
      }
      result.audit.push_back(std::move(rec));
      iteration_candidates.push_back(std::move(cand));
    }
    if (!cfg.fixed_t.has_value()) {
      t = update_augment_factor(t, iteration_candidates, cfg);
    }
  }

  result.doc_know = doc_tar;
  if (have_best) {
    result.doc_know.text = best_text;
    result.status = KnowStatus::Success;
    result.achieved_avg_relevance = best_rel;
  } else {
    result.status = KnowStatus::NoCandidate;
  }
  return result;
}

}  // namespace topicflip
