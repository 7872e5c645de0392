#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topicflip/corpus.hpp"
#include "topicflip/retrieval.hpp"
#include "topicflip/text.hpp"

namespace topicflip {

/// Continuous relaxation of a trigger: m free vectors in embedding space.
struct SoftTrigger {
  int length = 0;
  int dim = 0;
  std::vector<double> vecs;  // row-major length x dim

  std::span<const double> row(int p) const { return {vecs.data() + static_cast<size_t>(p) * dim, static_cast<size_t>(dim)}; }
  std::span<double> row(int p) { return {vecs.data() + static_cast<size_t>(p) * dim, static_cast<size_t>(dim)}; }
};

/// Adam accumulators; ascent direction (we maximize relevance).
struct AdamState {
  size_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
};

/// One Adam ascent step with bias correction; params updated in place.
void adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grad,
               double lr);

struct PairwiseTrainStats {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  size_t pairs = 0;
};

/// Late-interaction relevance model: per-query-token max over document
/// tokens of the projected-embedding dot product, averaged over query
/// tokens and scaled. Differentiable w.r.t. appended soft-trigger vectors.
class SurrogateRanker final : public IScorer {
 public:
  SurrogateRanker() = default;
  /// Projection = identity + seeded Gaussian noise (sigma), scale = 1.
  SurrogateRanker(const EmbeddingTable& emb, uint64_t seed, double noise_sigma = 0.01);

  double score(const TokenSeq& query, const TokenSeq& doc) const override;
  const std::string& name() const override { return name_; }

  /// Score with the doc's token vectors extended by the soft vectors.
  double score_soft(const TokenSeq& query, const TokenSeq& doc, const SoftTrigger& soft) const;

  /// Gradient of (1/|Q|) sum_q score_soft w.r.t. the soft vectors
  /// (row-major m x D). Ties at the max go to the lowest doc position.
  std::vector<double> grad_soft(const std::vector<TokenSeq>& queries, const TokenSeq& doc,
                                const SoftTrigger& soft) const;

  /// Checkpoint: dimension header, then row-major projection and the scale,
  /// decimal text; loading reproduces scores on the same platform.
  void save(const std::string& path) const;
  static SurrogateRanker load(const std::string& path, const EmbeddingTable& emb);

  int dim() const { return dim_; }
  double scale() const { return scale_; }
  const std::vector<double>& projection() const { return proj_; }
  const EmbeddingTable& embeddings() const { return *emb_; }

  std::vector<double> project(std::span<const double> v) const;

  friend SurrogateRanker train_pairwise(const SurrogateRanker& ranker, const Corpus& corpus,
                                        const std::vector<Topic>& topics, const Vocabulary& vocab,
                                        int epochs, double margin, double lr, uint64_t seed,
                                        PairwiseTrainStats* stats);

 private:
  std::string name_ = "surrogate-nrm";
  const EmbeddingTable* emb_ = nullptr;
  int dim_ = 0;
  std::vector<double> proj_;  // row-major D x D
  double scale_ = 1.0;
};

/// Hinge-loss training on (query, on-topic doc, off-topic doc) pairs;
/// projection-only updates. Each topic needs at least one on-topic and one
/// off-topic document.
SurrogateRanker train_pairwise(const SurrogateRanker& ranker, const Corpus& corpus,
                               const std::vector<Topic>& topics, const Vocabulary& vocab,
                               int epochs, double margin = 0.1, double lr = 0.01,
                               uint64_t seed = 0, PairwiseTrainStats* stats = nullptr);

}  // namespace topicflip
