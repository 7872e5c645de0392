#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "topicflip/corpus.hpp"
#include "topicflip/text.hpp"

namespace topicflip {

/// Relevance scorer interface shared by the dense retrievers and the
/// surrogate ranking model, so target selection, reranking, and metric
/// plumbing can take either.
class IScorer {
 public:
  virtual ~IScorer() = default;
  virtual double score(const TokenSeq& query, const TokenSeq& doc) const = 0;
  virtual const std::string& name() const = 0;
};

enum class Pooling { Mean, IdfWeightedMean };

/// Dense bi-encoder: pooled token embeddings, dot-product relevance.
class DenseScorer final : public IScorer {
 public:
  DenseScorer(std::string name, const EmbeddingTable& emb, Pooling pooling);
  /// idf weights computed from document frequencies over the corpus;
  /// tokens absent from it get the maximum weight.
  static DenseScorer idf_weighted(std::string name, const EmbeddingTable& emb,
                                  const TokenizedCorpus& corpus);

  double score(const TokenSeq& query, const TokenSeq& doc) const override;
  const std::string& name() const override { return name_; }
  Pooling pooling() const { return pooling_; }
  const EmbeddingTable& embeddings() const { return *emb_; }

  std::vector<double> pooled(const TokenSeq& seq) const;

 private:
  std::string name_;
  const EmbeddingTable* emb_;
  Pooling pooling_;
  std::unordered_map<int32_t, double> idf_;
  double default_idf_ = 1.0;
};

struct RankedEntry {
  std::string doc_id;
  double score;
};

/// Scores non-increasing; ties broken by ascending doc id.
struct RankedList {
  std::string query_id;
  std::vector<RankedEntry> entries;
  bool truncated_warning = false;

  /// 1-based rank of a doc id, or entries.size()+1 when absent.
  size_t rank_of(const std::string& doc_id) const;
};

RankedList full_ranking(const IScorer& scorer, const Query& query, const TokenizedCorpus& corpus,
                        const Vocabulary& vocab);
RankedList retrieve_topk(const IScorer& scorer, const Query& query, const TokenizedCorpus& corpus,
                         const Vocabulary& vocab, size_t k);
/// Rescores only the docs present in `initial` with `scorer2` and returns
/// the top-k of that rescored set. k beyond |initial| truncates with a
/// warning flag.
RankedList rerank(const RankedList& initial, const IScorer& scorer2, const Query& query,
                  const TokenizedCorpus& corpus, const Vocabulary& vocab, size_t k);

/// Arithmetic mean of per-query scores for one document.
double avg_relevance(const IScorer& scorer, const std::vector<TokenSeq>& queries,
                     const TokenSeq& doc);

std::vector<TokenSeq> tokenize_queries(const std::vector<Query>& queries, const Vocabulary& vocab);

/// Retrieval pipeline handle used by the RAG loop and the snapshotting code,
/// so defenses can swap in masked scoring or a rerank stage.
class IRetriever {
 public:
  virtual ~IRetriever() = default;
  virtual RankedList topk(const Query& query, size_t k) const = 0;
  virtual RankedList full(const Query& query) const = 0;
};

class ScorerRetriever final : public IRetriever {
 public:
  ScorerRetriever(const IScorer& scorer, const TokenizedCorpus& corpus, const Vocabulary& vocab)
      : scorer_(&scorer), corpus_(&corpus), vocab_(&vocab) {}
  RankedList topk(const Query& query, size_t k) const override;
  RankedList full(const Query& query) const override;

 private:
  const IScorer* scorer_;
  const TokenizedCorpus* corpus_;
  const Vocabulary* vocab_;
};

/// Two-stage pipeline: top-`pool` by the first scorer, reordered by the
/// second. The full ranking keeps the first scorer's order past the pool
/// and carries positional pseudo-scores, since the two scorers' scales are
/// not comparable.
class RerankRetriever final : public IRetriever {
 public:
  RerankRetriever(const IScorer& first, const IScorer& second, const TokenizedCorpus& corpus,
                  const Vocabulary& vocab, size_t pool)
      : first_(&first), second_(&second), corpus_(&corpus), vocab_(&vocab), pool_(pool) {}
  RankedList topk(const Query& query, size_t k) const override;
  RankedList full(const Query& query) const override;

 private:
  const IScorer* first_;
  const IScorer* second_;
  const TokenizedCorpus* corpus_;
  const Vocabulary* vocab_;
  size_t pool_;
};

}  // namespace topicflip
