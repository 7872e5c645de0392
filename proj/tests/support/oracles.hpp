#pragma once

// Independent reference implementations used only by tests. These stay
// deliberately naive (full DP matrices, plain loops) so they share no code
// path with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "topicflip/corpus.hpp"
#include "topicflip/evaluation.hpp"
#include "topicflip/retrieval.hpp"
#include "topicflip/surrogate.hpp"
#include "topicflip/text.hpp"

namespace oracle {

inline size_t levenshtein(const std::vector<int32_t>& a, const std::vector<int32_t>& b) {
  std::vector<std::vector<size_t>> d(a.size() + 1, std::vector<size_t>(b.size() + 1, 0));
  for (size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost});
    }
  }
  return d[a.size()][b.size()];
}

inline double mean_cosine_distance(const topicflip::TokenSeq& a, const topicflip::TokenSeq& b,
                                   const topicflip::EmbeddingTable& emb) {
  auto mean = [&](const topicflip::TokenSeq& s) {
    std::vector<double> m(emb.dim(), 0.0);
    for (int32_t id : s.ids) {
      auto v = emb.vec(id);
      for (int d = 0; d < emb.dim(); ++d) m[d] += v[d];
    }
    for (auto& x : m) x /= double(s.ids.size());
    return m;
  };
  auto ma = mean(a), mb = mean(b);
  double dot = 0, na = 0, nb = 0;
  for (int d = 0; d < emb.dim(); ++d) {
    dot += ma[d] * mb[d];
    na += ma[d] * ma[d];
    nb += mb[d] * mb[d];
  }
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Brute-force ranking: score every doc, sort by (score desc, id asc).
inline std::vector<std::pair<std::string, double>> brute_force_ranking(
    const topicflip::IScorer& scorer, const topicflip::TokenSeq& query,
    const topicflip::TokenizedCorpus& corpus) {
  std::vector<std::pair<std::string, double>> scored;
  for (const auto& d : corpus.docs()) scored.emplace_back(d.id, scorer.score(query, d.tokens));
  std::sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;
  });
  return scored;
}

/// Central finite differences of the mean soft score.
inline std::vector<double> fd_grad_soft(const topicflip::SurrogateRanker& ranker,
                                        const std::vector<topicflip::TokenSeq>& queries,
                                        const topicflip::TokenSeq& doc,
                                        topicflip::SoftTrigger soft, double h = 1e-4) {
  auto objective = [&](const topicflip::SoftTrigger& s) {
    double total = 0.0;
    for (const auto& q : queries) total += ranker.score_soft(q, doc, s);
    return total / double(queries.size());
  };
  std::vector<double> grad(soft.vecs.size());
  for (size_t i = 0; i < soft.vecs.size(); ++i) {
    double saved = soft.vecs[i];
    soft.vecs[i] = saved + h;
    double up = objective(soft);
    soft.vecs[i] = saved - h;
    double down = objective(soft);
    soft.vecs[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

/// Naive re-implementation of the ranking metrics with plain loops.
struct NaiveRankingMetrics {
  double rasr_rank, rasr_topk, brank, topk_v;
};

inline NaiveRankingMetrics naive_ranking_metrics(const topicflip::RankingSnapshot& snap, size_t k,
                                                 topicflip::StanceLabel target) {
  auto rank_of = [](const topicflip::RankedList& r, const std::string& id) {
    for (size_t i = 0; i < r.entries.size(); ++i)
      if (r.entries[i].doc_id == id) return i + 1;
    return r.entries.size() + 1;
  };
  auto prop = [&](const topicflip::RankedList& r) {
    size_t top = std::min(k, r.entries.size());
    size_t hits = 0;
    for (size_t i = 0; i < top; ++i) {
      auto it = snap.stances.find(r.entries[i].doc_id);
      if (it != snap.stances.end() && it->second == target) ++hits;
    }
    return double(hits) / double(top);
  };
  double pairs = 0, improved = 0, brank = 0, vsum = 0, qimp = 0;
  for (const auto& q : snap.queries) {
    for (const auto& t : snap.target_ids) {
      double before = double(rank_of(q.before, t));
      double after = double(rank_of(q.after, t));
      pairs += 1;
      if (after < before) improved += 1;
      brank += before - after;
    }
    double pb = prop(q.before), pa = prop(q.after);
    vsum += pa - pb;
    if (pa > pb) qimp += 1;
  }
  double nq = double(snap.queries.size());
  return {100.0 * improved / pairs, 100.0 * qimp / nq, brank / pairs, 100.0 * vsum / nq};
}

}  // namespace oracle
