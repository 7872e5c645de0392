#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "topicflip/corpus.hpp"
#include "topicflip/rag.hpp"
#include "topicflip/retrieval.hpp"
#include "topicflip/text.hpp"

#include "json.hpp"

namespace topicflip {

/// Pre/post-attack full rankings for one topic's queries, the targeted doc
/// ids, and the stance of every ranked doc.
struct QueryRankingPair {
  std::string query_id;
  RankedList before;
  RankedList after;
};

struct RankingSnapshot {
  std::string topic_id;
  std::vector<QueryRankingPair> queries;
  std::vector<std::string> target_ids;
  std::map<std::string, StanceLabel> stances;

  void validate() const;  // throws IntegrityError
  nlohmann::json to_json() const;
  static RankingSnapshot from_json(const nlohmann::json& j);
};

struct RankingMetrics {
  double rasr_rank = 0.0;  // % of (target, query) pairs with strictly improved rank
  double rasr_topk = 0.0;  // % of queries whose target-stance top-k share strictly grew
  double brank = 0.0;      // mean rank improvement over (target, query) pairs
  double topk_v = 0.0;     // mean change of target-stance top-k proportion, x100
  std::optional<double> top50_pct;   // threshold entries; only when |D| >= 500
  std::optional<double> top500_pct;
};

RankingMetrics compute_ranking_metrics(const RankingSnapshot& snap, size_t k,
                                       StanceLabel target_stance);

struct StanceMetrics {
  double asv = 0.0;
  double asv_clean = 0.0;
  double delta_asv = 0.0;  // always asv - asv_clean
};

StanceMetrics compute_stance_metrics(const std::vector<RagAnswer>& attacked,
                                     const std::vector<RagAnswer>& clean_run1,
                                     const std::vector<RagAnswer>& clean_run2);

struct MetricsReport {
  std::string topic_id;
  std::string method;
  std::string stance;
  std::string defense = "none";
  RankingMetrics ranking;
  StanceMetrics stance_shift;
  std::string config_hash;
  uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  static std::string csv_header();
  std::string csv_row() const;
};

struct PplFilterResult {
  Corpus retained;
  std::vector<std::string> removed_ids;
  /// Mean/stddev of per-token log-perplexity keyed by provenance class.
  std::map<std::string, std::pair<double, double>> distribution;
};

/// Drops documents whose per-token log-perplexity exceeds the threshold.
PplFilterResult ppl_filter(const NGramLM& lm, const Corpus& corpus, const Vocabulary& vocab,
                           double threshold);

/// Mean scorer output over `copies` masked variants of the document; each
/// token is replaced by MASK with probability mask_rate.
double masked_score(const IScorer& scorer, const TokenSeq& doc, const TokenSeq& query,
                    double mask_rate, int copies, uint64_t seed);

/// IScorer adaptor that scores through masked_score; the per-pair seed is
/// derived from the base seed and both texts so rankings are reproducible.
class MaskedScorer final : public IScorer {
 public:
  MaskedScorer(const IScorer& base, double mask_rate, int copies, uint64_t seed);
  double score(const TokenSeq& query, const TokenSeq& doc) const override;
  const std::string& name() const override { return name_; }

 private:
  const IScorer* base_;
  double mask_rate_;
  int copies_;
  uint64_t seed_;
  std::string name_;
};

}  // namespace topicflip
