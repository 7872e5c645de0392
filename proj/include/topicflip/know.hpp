#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "topicflip/corpus.hpp"
#include "topicflip/llm.hpp"
#include "topicflip/surrogate.hpp"
#include "topicflip/text.hpp"

namespace topicflip {

struct NodeInfo {
  std::string phrase;
  std::string rationale;
};

struct NodeList {
  std::string topic_id;
  std::vector<NodeInfo> nodes;
};

struct DocNodeList {
  std::string doc_id;
  std::vector<NodeInfo> missing_nodes;
};

struct KnowAttackConfig {
  double epsilon = 0.2;  // max edit ratio
  double lambda = 0.85;  // min semantic similarity
  int iterations = 5;    // N
  int samples = 3;       // I repeated sampling runs per iteration
  int delta = 1;
  int t_initial = 2;
  int t_min = 1;
  int t_max = 5;
  int k_nodes = 10;
  uint64_t seed = 0;
  bool polarity_control = true;
  std::optional<int> fixed_t;  // ablation: disable the update rule

  double lambda_dist() const { return 1.0 - lambda; }
  double partial_edit_threshold() const { return 0.75 * epsilon; }  // rho
};

/// One filtered candidate. passed_filter holds exactly when both the edit
/// ratio and the semantic distance are within their thresholds.
struct EditCandidate {
  std::string text;
  double edit_ratio_value = 0.0;
  double semantic_distance_value = 0.0;
  bool passed_filter = false;
  int iteration = 0;  // n, 1-based
  int sample = 0;     // i, 1-based
  int t_used = 0;
};

/// Full audit trail entry; replaying these reproduces the final selection.
struct KnowAuditRecord {
  int iteration = 0;
  int sample = 0;
  int t_used = 0;
  double edit_ratio_value = 0.0;
  double semantic_distance_value = 0.0;
  bool polarity_ok = true;
  bool passed = false;
  double avg_relevance = 0.0;  // surrogate reward; filled for passing candidates
  std::string text;
};

enum class KnowStatus { Success, NoCandidate };

struct KnowAttackResult {
  Document doc_know;
  KnowStatus status = KnowStatus::NoCandidate;
  NodeList nodes;
  DocNodeList missing;
  std::vector<KnowAuditRecord> audit;
  std::vector<int> t_trajectory;  // t_1..t_N as used
  double achieved_avg_relevance = 0.0;
};

/// Phase 1a: the K most salient information nodes for the topic's query
/// set. Parse failures get one structured re-prompt before erroring.
NodeList extract_key_nodes(LlmClient& client, const Topic& topic, int k_nodes);

/// Phase 1b: which nodes the document underemphasizes or lacks.
DocNodeList doc_specific_nodes(LlmClient& client, const Document& doc, const NodeList& nodes);

/// Phase 2: one multi-granular edit of the document with intensity t and
/// a stance constraint; t in [1, t_max].
std::string adversarial_edit(LlmClient& client, const std::string& doc_text,
                             const DocNodeList& missing, StanceLabel stance, int t,
                             uint64_t sample_seed);

/// Phase 3 filter: edit ratio vs epsilon, semantic distance vs 1 - lambda.
EditCandidate filter_candidate(const std::string& candidate_text, const Document& original,
                               const KnowAttackConfig& cfg, const EmbeddingTable& emb,
                               const Vocabulary& vocab);

/// Augmentation-factor update: all candidates failed -> t - delta; some
/// passing candidate edited less than rho = 0.75 epsilon -> t + delta;
/// otherwise unchanged. Clamped to [t_min, t_max].
int update_augment_factor(int t, const std::vector<EditCandidate>& iteration_candidates,
                          const KnowAttackConfig& cfg);

/// The full stage-1 loop: N iterations of I sampled edits, polarity gate,
/// filter, t update, and final argmax of surrogate relevance over the
/// passing pool. An empty pool returns the original document unchanged
/// with NoCandidate status.
KnowAttackResult run_know_attack(LlmClient& client, const SurrogateRanker& reward,
                                 const Document& doc_tar, const Topic& topic, StanceLabel stance,
                                 const KnowAttackConfig& cfg, const Vocabulary& vocab,
                                 const EmbeddingTable& emb);

}  // namespace topicflip
