#include "topicflip/retrieval.hpp"

#include <algorithm>
#include <cmath>

namespace topicflip {

DenseScorer::DenseScorer(std::string name, const EmbeddingTable& emb, Pooling pooling)
    : name_(std::move(name)), emb_(&emb), pooling_(pooling) {}

DenseScorer DenseScorer::idf_weighted(std::string name, const EmbeddingTable& emb,
                                      const TokenizedCorpus& corpus) {
  DenseScorer s(std::move(name), emb, Pooling::IdfWeightedMean);
  std::unordered_map<int32_t, size_t> df;
  for (const auto& d : corpus.docs()) {
    std::vector<int32_t> uniq(d.tokens.ids.begin(), d.tokens.ids.end());
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (int32_t id : uniq) df[id]++;
  }
  double n = static_cast<double>(corpus.size());
  s.default_idf_ = std::log((1.0 + n) / 1.0) + 1.0;
  for (const auto& [id, count] : df)
    s.idf_[id] = std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0;
  return s;
}

std::vector<double> DenseScorer::pooled(const TokenSeq& seq) const {
  std::vector<double> m(emb_->dim(), 0.0);
  double wsum = 0.0;
  for (int32_t id : seq.ids) {
    double w = 1.0;
    if (pooling_ == Pooling::IdfWeightedMean) {
      auto it = idf_.find(id);
      w = it == idf_.end() ? default_idf_ : it->second;
    }
    auto v = emb_->vec(id);
    for (int d = 0; d < emb_->dim(); ++d) m[d] += w * v[d];
    wsum += w;
  }
  if (wsum > 0.0)
    for (auto& x : m) x /= wsum;
  return m;
}

double DenseScorer::score(const TokenSeq& query, const TokenSeq& doc) const {
  if (query.empty() || doc.empty()) throw InvalidArgument("DenseScorer: empty input sequence");
  auto q = pooled(query);
  auto d = pooled(doc);
  double dot = 0.0;
  for (size_t i = 0; i < q.size(); ++i) dot += q[i] * d[i];
  return dot;
}

size_t RankedList::rank_of(const std::string& doc_id) const {
  for (size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].doc_id == doc_id) return i + 1;
  }
  return entries.size() + 1;
}

RankedList full_ranking(const IScorer& scorer, const Query& query, const TokenizedCorpus& corpus,
                        const Vocabulary& vocab) {
  if (corpus.size() == 0) throw InvalidArgument("full_ranking: empty corpus");
  RankedList out;
  out.query_id = query.id;
  TokenSeq q = vocab.encode(query.text);
  out.entries.reserve(corpus.size());
  for (const auto& d : corpus.docs()) out.entries.push_back({d.id, scorer.score(q, d.tokens)});
  std::stable_sort(out.entries.begin(), out.entries.end(),
                   [](const RankedEntry& a, const RankedEntry& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.doc_id < b.doc_id;
                   });
  return out;
}

RankedList retrieve_topk(const IScorer& scorer, const Query& query, const TokenizedCorpus& corpus,
                         const Vocabulary& vocab, size_t k) {
  if (k == 0) throw InvalidArgument("retrieve_topk: k must be >= 1");
  RankedList full = full_ranking(scorer, query, corpus, vocab);
  if (full.entries.size() > k) full.entries.resize(k);
  return full;
}

RankedList rerank(const RankedList& initial, const IScorer& scorer2, const Query& query,
                  const TokenizedCorpus& corpus, const Vocabulary& vocab, size_t k) {
  if (initial.entries.empty()) throw InvalidArgument("rerank: empty initial ranking");
  if (k == 0) throw InvalidArgument("rerank: k must be >= 1");
  RankedList out;
  out.query_id = initial.query_id;
  TokenSeq q = vocab.encode(query.text);
  out.entries.reserve(initial.entries.size());
  for (const auto& e : initial.entries)
    out.entries.push_back({e.doc_id, scorer2.score(q, corpus.doc(e.doc_id).tokens)});
  std::stable_sort(out.entries.begin(), out.entries.end(),
                   [](const RankedEntry& a, const RankedEntry& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.doc_id < b.doc_id;
                   });
  if (k > out.entries.size()) {
    out.truncated_warning = true;
  } else {
    out.entries.resize(k);
  }
  return out;
}

double avg_relevance(const IScorer& scorer, const std::vector<TokenSeq>& queries,
                     const TokenSeq& doc) {
  if (queries.empty()) throw InvalidArgument("avg_relevance: empty query list");
  double sum = 0.0;
  for (const auto& q : queries) sum += scorer.score(q, doc);
  return sum / static_cast<double>(queries.size());
}

std::vector<TokenSeq> tokenize_queries(const std::vector<Query>& queries,
                                       const Vocabulary& vocab) {
  std::vector<TokenSeq> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(vocab.encode(q.text));
  return out;
}

RankedList ScorerRetriever::topk(const Query& query, size_t k) const {
  return retrieve_topk(*scorer_, query, *corpus_, *vocab_, k);
}

RankedList ScorerRetriever::full(const Query& query) const {
  return full_ranking(*scorer_, query, *corpus_, *vocab_);
}

RankedList RerankRetriever::topk(const Query& query, size_t k) const {
  RankedList initial = retrieve_topk(*first_, query, *corpus_, *vocab_, pool_);
  return rerank(initial, *second_, query, *corpus_, *vocab_, k);
}

RankedList RerankRetriever::full(const Query& query) const {
  RankedList base = full_ranking(*first_, query, *corpus_, *vocab_);
  size_t head = std::min(pool_, base.entries.size());
  RankedList initial;
  initial.query_id = base.query_id;
  initial.entries.assign(base.entries.begin(), base.entries.begin() + head);
  RankedList reranked = rerank(initial, *second_, query, *corpus_, *vocab_, head);
  RankedList out;
  out.query_id = base.query_id;
  out.entries.reserve(base.entries.size());
  for (const auto& e : reranked.entries) out.entries.push_back(e);
  for (size_t i = head; i < base.entries.size(); ++i) out.entries.push_back(base.entries[i]);
  for (size_t i = 0; i < out.entries.size(); ++i)
    out.entries[i].score = -static_cast<double>(i);
  return out;
}

}  // namespace topicflip
