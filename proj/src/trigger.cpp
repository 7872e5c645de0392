#include "topicflip/trigger.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>

#include "topicflip/llm.hpp"
#include "topicflip/rand.hpp"

namespace topicflip {

namespace {

bool is_punct_token(const std::string& t) {
  return t.size() == 1 && !std::isalnum(static_cast<unsigned char>(t[0]));
}

bool is_content_token(int32_t id, const Vocabulary& vocab) {
  if (Vocabulary::is_special(id)) return false;
  const std::string& tok = vocab.token_of(id);
  if (is_punct_token(tok)) return false;
  const auto& stop = mock_lexicons().stopwords;
  return std::find(stop.begin(), stop.end(), tok) == stop.end();
}

}  // namespace

std::vector<int32_t> shared_query_keywords(const std::vector<TokenSeq>& queries,
                                           const Vocabulary& vocab, size_t min_queries) {
  std::map<int32_t, size_t> query_hits;
  for (const auto& q : queries) {
    std::set<int32_t> uniq(q.ids.begin(), q.ids.end());
    for (int32_t id : uniq) {
      if (is_content_token(id, vocab)) query_hits[id]++;
    }
  }
  std::vector<int32_t> out;
  for (const auto& [id, hits] : query_hits) {
    if (hits >= min_queries) out.push_back(id);
  }
  return out;  // ascending token id
}

CandidatePool build_candidate_pool(const std::vector<TokenSeq>& queries, const Vocabulary& vocab,
                                   const std::vector<double>& grad, const EmbeddingTable& emb,
                                   const SoftTrigger& soft, int pool_topk) {
  if (pool_topk < 1) throw InvalidArgument("build_candidate_pool: k' must be >= 1");
  if (grad.size() != static_cast<size_t>(soft.length) * soft.dim)
    throw InvalidArgument("build_candidate_pool: gradient shape mismatch");
  auto keywords = shared_query_keywords(queries, vocab);

  CandidatePool pool;
  pool.per_position.resize(soft.length);
  const int dim = soft.dim;
  for (int p = 0; p < soft.length; ++p) {
    const double* g = grad.data() + static_cast<size_t>(p) * dim;
    auto soft_p = soft.row(p);
    auto gain_of = [&](int32_t id) {
      auto e = emb.vec(id);
      double gain = 0.0;
      for (int d = 0; d < dim; ++d) gain += g[d] * (e[d] - soft_p[d]);
      return gain;
    };
    std::vector<std::pair<double, int32_t>> gains;
    gains.reserve(vocab.size());
    for (size_t id = 0; id < vocab.size(); ++id) {
      if (Vocabulary::is_special(static_cast<int32_t>(id))) continue;
      gains.emplace_back(gain_of(static_cast<int32_t>(id)), static_cast<int32_t>(id));
    }
    auto by_gain = [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    };
    size_t keep = std::min<size_t>(static_cast<size_t>(pool_topk), gains.size());
    std::partial_sort(gains.begin(), gains.begin() + keep, gains.end(), by_gain);
    std::set<int32_t> chosen;
    std::vector<std::pair<double, int32_t>> merged;
    for (size_t i = 0; i < keep; ++i) {
      merged.push_back(gains[i]);
      chosen.insert(gains[i].second);
    }
    for (int32_t id : keywords) {
      if (chosen.insert(id).second) merged.emplace_back(gain_of(id), id);
    }
    std::sort(merged.begin(), merged.end(), by_gain);
    auto& slot = pool.per_position[p];
    slot.reserve(merged.size());
    for (const auto& [gain, id] : merged) slot.push_back(id);
  }
  return pool;
}

SoftTrigger optimize_soft_trigger(const SurrogateRanker& ranker, const TokenSeq& doc,
                                  const std::vector<TokenSeq>& queries, const TriggerConfig& cfg,
                                  SoftTrigger init, std::vector<double>* objective_log) {
  if (queries.empty()) throw InvalidArgument("optimize_soft_trigger: empty query set");
  auto objective = [&](const SoftTrigger& s) {
    double total = 0.0;
    for (const auto& q : queries) total += ranker.score_soft(q, doc, s);
    return total / static_cast<double>(queries.size());
  };

  SoftTrigger best = init;
  double best_obj = objective(best);
  if (objective_log) objective_log->push_back(best_obj);
  if (cfg.max_soft_steps <= 0 || init.length == 0) return best;

  SoftTrigger current = init;
  AdamState adam;
  int below_tol = 0;
  size_t batch_cursor = 0;
  const size_t nq = queries.size();
  for (int step = 0; step < cfg.max_soft_steps; ++step) {
    std::vector<double> grad;
    if (nq <= static_cast<size_t>(cfg.batch)) {
      grad = ranker.grad_soft(queries, doc, current);
    } else {
      // Rotate a deterministic window of `batch` queries per step.
      std::vector<TokenSeq> window;
      window.reserve(cfg.batch);
      for (int i = 0; i < cfg.batch; ++i)
        window.push_back(queries[(batch_cursor + i) % nq]);
      batch_cursor = (batch_cursor + cfg.batch) % nq;
      grad = ranker.grad_soft(window, doc, current);
    }
    adam_step(adam, current.vecs, grad, cfg.lr);
    double obj = objective(current);
    if (objective_log) objective_log->push_back(obj);
    double gain = (obj - best_obj) / std::max(std::abs(best_obj), 1e-12);
    if (obj > best_obj) {
      best = current;
      best_obj = obj;
    }
    if (gain < cfg.convergence_tol) {
      if (++below_tol >= 5) break;
    } else {
      below_tol = 0;
    }
  }
  return best;
}

namespace {

struct BeamItem {
  std::vector<int32_t> ids;
  double score;
};

/// Scoring cache for one (ranker, doc, queries) context. Per query token
/// the max over the fixed document tokens is precomputed, so a candidate
/// costs only the dots against its own trigger positions. Token ids hit a
/// projected-vocabulary table. Results are bit-identical to score_soft:
/// max over a union is the max of the partial maxima, and the per-token
/// sums run in the same order.
class BeamScorer {
 public:
  BeamScorer(const SurrogateRanker& ranker, const TokenSeq& doc,
             const std::vector<TokenSeq>& queries)
      : ranker_(ranker), dim_(ranker.dim()), nq_(queries.size()) {
    const EmbeddingTable& emb = ranker.embeddings();
    proj_vocab_.resize(emb.rows() * static_cast<size_t>(dim_));
    for (size_t id = 0; id < emb.rows(); ++id) {
      auto p = ranker.project(emb.vec(static_cast<int32_t>(id)));
      std::copy(p.begin(), p.end(), proj_vocab_.begin() + id * dim_);
    }
    qproj_.resize(nq_);
    doc_max_.resize(nq_);
    qlen_.resize(nq_);
    for (size_t qi = 0; qi < nq_; ++qi) {
      const auto& q = queries[qi];
      if (q.empty()) throw InvalidArgument("beam scorer: empty query");
      qlen_[qi] = q.ids.size();
      auto& qp = qproj_[qi];
      qp.resize(q.ids.size() * static_cast<size_t>(dim_));
      for (size_t i = 0; i < q.ids.size(); ++i) {
        auto p = ranker.project(emb.vec(q.ids[i]));
        std::copy(p.begin(), p.end(), qp.begin() + i * dim_);
      }
      auto& dm = doc_max_[qi];
      dm.assign(q.ids.size(), -std::numeric_limits<double>::infinity());
      for (size_t i = 0; i < q.ids.size(); ++i) {
        const double* qv = qp.data() + i * dim_;
        for (int32_t id : doc.ids) {
          const double* dv = proj_vocab_.data() + static_cast<size_t>(id) * dim_;
          double dot = 0.0;
          for (int k = 0; k < dim_; ++k) dot += qv[k] * dv[k];
          if (dot > dm[i]) dm[i] = dot;
        }
      }
    }
  }

  /// Projects the free soft vectors once per round.
  void set_soft(const SoftTrigger& soft) {
    soft_len_ = static_cast<size_t>(soft.length);
    soft_proj_.resize(soft_len_ * static_cast<size_t>(dim_));
    for (int p = 0; p < soft.length; ++p) {
      auto pr = ranker_.project(soft.row(p));
      std::copy(pr.begin(), pr.end(), soft_proj_.begin() + static_cast<size_t>(p) * dim_);
    }
  }

  /// Mean relevance of doc + prefix tokens + remaining soft positions.
  double mean_relevance(const std::vector<int32_t>& prefix) const {
    double total = 0.0;
    for (size_t qi = 0; qi < nq_; ++qi) {
      double qsum = 0.0;
      for (size_t i = 0; i < qlen_[qi]; ++i) {
        const double* qv = qproj_[qi].data() + i * dim_;
        double best = doc_max_[qi][i];
        for (int32_t id : prefix) {
          const double* dv = proj_vocab_.data() + static_cast<size_t>(id) * dim_;
          double dot = 0.0;
          for (int k = 0; k < dim_; ++k) dot += qv[k] * dv[k];
          if (dot > best) best = dot;
        }
        for (size_t p = prefix.size(); p < soft_len_; ++p) {
          const double* sv = soft_proj_.data() + p * dim_;
          double dot = 0.0;
          for (int k = 0; k < dim_; ++k) dot += qv[k] * sv[k];
          if (dot > best) best = dot;
        }
        qsum += best;
      }
      total += qsum * ranker_.scale() / static_cast<double>(qlen_[qi]);
    }
    return total / static_cast<double>(nq_);
  }

 private:
  const SurrogateRanker& ranker_;
  int dim_;
  size_t nq_;
  std::vector<double> proj_vocab_;
  std::vector<std::vector<double>> qproj_;
  std::vector<std::vector<double>> doc_max_;
  std::vector<size_t> qlen_;
  std::vector<double> soft_proj_;
  size_t soft_len_ = 0;
};

Trigger beam_discretize_impl(const SurrogateRanker& ranker, const TokenSeq& doc,
                             const std::vector<TokenSeq>& queries, const SoftTrigger& soft,
                             const CandidatePool& pool, const TriggerConfig& cfg,
                             BeamScorer& scorer,
                             const std::function<double(const std::vector<int32_t>&)>& adjust) {
  if (queries.empty()) throw InvalidArgument("beam_discretize: empty query set");
  if (static_cast<int>(pool.per_position.size()) != soft.length)
    throw InvalidArgument("beam_discretize: pool does not cover every position");
  for (const auto& slot : pool.per_position) {
    if (slot.empty()) throw InvalidArgument("beam_discretize: empty candidate pool position");
  }
  scorer.set_soft(soft);
  auto objective = [&](const std::vector<int32_t>& prefix) {
    double obj = scorer.mean_relevance(prefix);
    if (adjust) obj += adjust(prefix);
    return obj;
  };
  auto better = [](const BeamItem& a, const BeamItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.ids < b.ids;
  };
  std::vector<BeamItem> beam{{{}, 0.0}};
  for (int p = 0; p < soft.length; ++p) {
    std::vector<BeamItem> expanded;
    expanded.reserve(beam.size() * pool.per_position[p].size());
    for (const auto& item : beam) {
      for (int32_t cand : pool.per_position[p]) {
        BeamItem next;
        next.ids = item.ids;
        next.ids.push_back(cand);
        next.score = objective(next.ids);
        expanded.push_back(std::move(next));
      }
    }
    std::sort(expanded.begin(), expanded.end(), better);
    size_t keep = std::min<size_t>(static_cast<size_t>(cfg.beam_size), expanded.size());
    expanded.resize(keep);
    beam = std::move(expanded);
  }
  Trigger out;
  out.tokens.ids = beam.front().ids;
  // Achieved value is always the relevance itself, even when the search
  // objective carried extra terms.
  out.achieved_avg_relevance = scorer.mean_relevance(out.tokens.ids);
  return out;
}

SoftTrigger soft_from_tokens(const std::vector<int32_t>& ids, const EmbeddingTable& emb) {
  SoftTrigger s;
  s.dim = emb.dim();
  s.length = static_cast<int>(ids.size());
  s.vecs.reserve(ids.size() * static_cast<size_t>(emb.dim()));
  for (int32_t id : ids) {
    auto v = emb.vec(id);
    s.vecs.insert(s.vecs.end(), v.begin(), v.end());
  }
  return s;
}

/// Initial soft trigger: embeddings of the strongest cross-query content
/// tokens, padded with seeded unit vectors. Starting on real query tokens
/// keeps the max-pooling assignments active from step one.
SoftTrigger initial_soft(const std::vector<TokenSeq>& queries, const Vocabulary& vocab,
                         const EmbeddingTable& emb, int length, uint64_t seed) {
  std::map<int32_t, std::pair<size_t, size_t>> stats;  // id -> (#queries, total tf)
  for (const auto& q : queries) {
    std::set<int32_t> uniq;
    for (int32_t id : q.ids) {
      if (!is_content_token(id, vocab)) continue;
      stats[id].second++;
      uniq.insert(id);
    }
    for (int32_t id : uniq) stats[id].first++;
  }
  std::vector<std::pair<std::pair<size_t, size_t>, int32_t>> ranked;
  for (const auto& [id, s] : stats) ranked.push_back({s, id});
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first.first != b.first.first) return a.first.first > b.first.first;
    if (a.first.second != b.first.second) return a.first.second > b.first.second;
    return a.second < b.second;
  });
  std::vector<int32_t> ids;
  for (const auto& r : ranked) {
    if (static_cast<int>(ids.size()) >= length) break;
    ids.push_back(r.second);
  }
  SoftTrigger s = soft_from_tokens(ids, emb);
  if (static_cast<int>(ids.size()) < length) {
    std::mt19937_64 rng(derive_seed(seed, "soft-init-pad"));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int p = static_cast<int>(ids.size()); p < length; ++p) {
      std::vector<double> v(emb.dim());
      double norm2 = 0.0;
      for (auto& x : v) {
        x = gauss(rng);
        norm2 += x * x;
      }
      double inv = 1.0 / std::sqrt(std::max(norm2, 1e-300));
      for (auto& x : v) s.vecs.push_back(x * inv);
    }
    s.length = length;
  }
  return s;
}

Trigger search_trigger(const SurrogateRanker& ranker, const TokenSeq& doc,
                       const std::vector<TokenSeq>& queries, const TriggerConfig& cfg,
                       const Vocabulary& vocab,
                       const std::function<double(const std::vector<int32_t>&)>& adjust,
                       TriggerTrace* trace) {
  if (queries.empty()) throw InvalidArgument("trigger search: empty query set");
  if (cfg.trigger_length < 1 || cfg.beam_size < 1 || cfg.pool_topk < 1 || cfg.outer_rounds < 1)
    throw InvalidArgument("trigger search: config fields must be positive");
  const EmbeddingTable& emb = ranker.embeddings();
  SoftTrigger soft = initial_soft(queries, vocab, emb, cfg.trigger_length, cfg.seed);

  Trigger best;
  double best_key = -std::numeric_limits<double>::infinity();
  bool have_best = false;
  BeamScorer scorer(ranker, doc, queries);
  for (int round = 0; round < cfg.outer_rounds; ++round) {
    soft = optimize_soft_trigger(ranker, doc, queries, cfg, soft,
                                 trace ? &trace->soft_objectives : nullptr);
    auto grad = ranker.grad_soft(queries, doc, soft);
    CandidatePool pool = build_candidate_pool(queries, vocab, grad, emb, soft, cfg.pool_topk);
    Trigger trig = beam_discretize_impl(ranker, doc, queries, soft, pool, cfg, scorer, adjust);
    // Selection across rounds uses the same objective the beam used.
    double key = trig.achieved_avg_relevance + (adjust ? adjust(trig.tokens.ids) : 0.0);
    bool improved = !have_best || key > best_key;
    if (improved) {
      best = trig;
      best_key = key;
      have_best = true;
    }
    if (trace) trace->round_best.push_back(best.achieved_avg_relevance);
    if (!improved) break;  // converged: no best-so-far improvement this round
    soft = soft_from_tokens(trig.tokens.ids, emb);
  }
  best.tokens.source_text = vocab.decode(best.tokens.ids);
  return best;
}

}  // namespace

Trigger beam_discretize(const SurrogateRanker& ranker, const TokenSeq& doc,
                        const std::vector<TokenSeq>& queries, const SoftTrigger& soft,
                        const CandidatePool& pool, const TriggerConfig& cfg) {
  BeamScorer scorer(ranker, doc, queries);
  return beam_discretize_impl(ranker, doc, queries, soft, pool, cfg, scorer, nullptr);
}

Trigger generate_trigger(const SurrogateRanker& ranker, const TokenSeq& doc,
                         const std::vector<TokenSeq>& queries, const TriggerConfig& cfg,
                         const Vocabulary& vocab, TriggerTrace* trace) {
  return search_trigger(ranker, doc, queries, cfg, vocab, nullptr, trace);
}

std::string poisonedrag_baseline(const Document& doc_tar, const std::vector<Query>& queries,
                                 uint64_t seed) {
  if (queries.empty()) throw InvalidArgument("poisonedrag_baseline: empty query set");
  std::mt19937_64 rng(derive_seed(seed, "poisonedrag"));
  std::uniform_int_distribution<size_t> pick(0, queries.size() - 1);
  return queries[pick(rng)].text + " " + doc_tar.text;
}

Trigger collision_baseline(const SurrogateRanker& ranker, const std::vector<TokenSeq>& queries,
                           const TriggerConfig& cfg, const Vocabulary& vocab,
                           TriggerTrace* trace) {
  TokenSeq empty_doc;
  return search_trigger(ranker, empty_doc, queries, cfg, vocab, nullptr, trace);
}

Trigger pat_baseline(const SurrogateRanker& ranker, const TokenSeq& doc_tar,
                     const std::vector<TokenSeq>& queries, const std::vector<TokenSeq>& anchors,
                     const NGramLM& lm, double fluency_weight, const TriggerConfig& cfg,
                     const Vocabulary& vocab, TriggerTrace* trace) {
  if (anchors.size() != queries.size())
    throw InvalidArgument("pat_baseline: need exactly one anchor per query");
  double anchor_mean = 0.0;
  for (size_t i = 0; i < queries.size(); ++i)
    anchor_mean += ranker.score(queries[i], anchors[i]);
  anchor_mean /= static_cast<double>(queries.size());

  auto adjust = [&, anchor_mean, fluency_weight](const std::vector<int32_t>& prefix) {
    double obj = -anchor_mean;
    if (fluency_weight != 0.0 && !prefix.empty()) {
      TokenSeq seq;
      seq.ids = prefix;
      obj -= fluency_weight * lm.log_perplexity(seq);
    }
    return obj;
  };
  return search_trigger(ranker, doc_tar, queries, cfg, vocab, adjust, trace);
}

}  // namespace topicflip
