#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topicflip/corpus.hpp"
#include "topicflip/surrogate.hpp"
#include "topicflip/text.hpp"

namespace topicflip {

struct TriggerConfig {
  int trigger_length = 10;
  int beam_size = 3;
  int pool_topk = 10;  // k' gradient-ranked candidates per position
  double lr = 0.005;
  int batch = 32;  // query gradients fused per optimizer step
  int max_soft_steps = 30;
  int outer_rounds = 5;
  double convergence_tol = 1e-4;
  uint64_t seed = 0;
};

/// Per-position discretization candidates, each list ordered by descending
/// first-order gain then ascending token id.
struct CandidatePool {
  std::vector<std::vector<int32_t>> per_position;
};

struct Trigger {
  TokenSeq tokens;
  double achieved_avg_relevance = 0.0;
};

/// Best-so-far objective per outer round, for convergence assertions.
struct TriggerTrace {
  std::vector<double> round_best;
  std::vector<double> soft_objectives;
};

/// Word enhancement: per position, the top-k' vocabulary tokens by
/// first-order gain <grad_p, e_w - soft_p>, unioned with every content
/// token that occurs in at least two queries. Special tokens excluded.
CandidatePool build_candidate_pool(const std::vector<TokenSeq>& queries, const Vocabulary& vocab,
                                   const std::vector<double>& grad, const EmbeddingTable& emb,
                                   const SoftTrigger& soft, int pool_topk);

/// Content tokens shared by at least `min_queries` of the query set.
std::vector<int32_t> shared_query_keywords(const std::vector<TokenSeq>& queries,
                                           const Vocabulary& vocab, size_t min_queries = 2);

/// Adam ascent on the mean soft relevance over the query set; keeps the
/// best iterate and stops early once the relative gain stays below the
/// tolerance for five consecutive steps.
SoftTrigger optimize_soft_trigger(const SurrogateRanker& ranker, const TokenSeq& doc,
                                  const std::vector<TokenSeq>& queries, const TriggerConfig& cfg,
                                  SoftTrigger init, std::vector<double>* objective_log = nullptr);

/// Left-to-right beam search over the pool; partial sequences are scored
/// with the remaining positions filled by the current soft vectors, and
/// always in concatenation with `doc` jointly across queries. Ties break
/// toward the lexicographically smaller token sequence.
Trigger beam_discretize(const SurrogateRanker& ranker, const TokenSeq& doc,
                        const std::vector<TokenSeq>& queries, const SoftTrigger& soft,
                        const CandidatePool& pool, const TriggerConfig& cfg);

/// Alternates soft optimization and beam discretization, re-seeding the
/// soft trigger from the discrete tokens each round; returns the best
/// discrete trigger seen across rounds.
Trigger generate_trigger(const SurrogateRanker& ranker, const TokenSeq& doc,
                         const std::vector<TokenSeq>& queries, const TriggerConfig& cfg,
                         const Vocabulary& vocab, TriggerTrace* trace = nullptr);

/// Query-prepend baseline: a uniformly seeded choice from the topic's
/// queries, prepended to the document text.
std::string poisonedrag_baseline(const Document& doc_tar, const std::vector<Query>& queries,
                                 uint64_t seed);

/// Standalone adversarial paragraph optimized without document context.
Trigger collision_baseline(const SurrogateRanker& ranker, const std::vector<TokenSeq>& queries,
                           const TriggerConfig& cfg, const Vocabulary& vocab,
                           TriggerTrace* trace = nullptr);

/// Pairwise-objective variant: beam score is the mean over queries of
/// s(q, doc + prefix) - s(q, anchor_q), minus fluency_weight times the
/// prefix log-perplexity. One anchor per query.
Trigger pat_baseline(const SurrogateRanker& ranker, const TokenSeq& doc_tar,
                     const std::vector<TokenSeq>& queries, const std::vector<TokenSeq>& anchors,
                     const NGramLM& lm, double fluency_weight, const TriggerConfig& cfg,
                     const Vocabulary& vocab, TriggerTrace* trace = nullptr);

}  // namespace topicflip
