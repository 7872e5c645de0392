#include <algorithm>
#include <random>

#include "doctest.h"
#include "support/oracles.hpp"
#include "topicflip/trigger.hpp"

using namespace topicflip;

namespace {

struct Setup {
  Vocabulary vocab;
  EmbeddingTable emb;
  SurrogateRanker ranker;

  explicit Setup(uint64_t seed, int vocab_size = 50, int dim = 8)
      : vocab(make_vocab(vocab_size)),
        emb(EmbeddingTable::random_unit(vocab, dim, seed)),
        ranker(emb, seed) {}

  static Vocabulary make_vocab(int n) {
    std::vector<std::string> words;
    for (int i = 0; i < n; ++i) words.push_back("w" + std::to_string(i));
    return Vocabulary::from_words(words);
  }

  TokenSeq random_seq(int len, uint64_t seed) const {
    TokenSeq s;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int32_t> pick(3, static_cast<int32_t>(vocab.size()) - 1);
    for (int i = 0; i < len; ++i) s.ids.push_back(pick(rng));
    return s;
  }

  std::vector<int32_t> usable_tokens() const {
    std::vector<int32_t> ids;
    for (size_t i = Vocabulary::kNumSpecial; i < vocab.size(); ++i)
      ids.push_back(static_cast<int32_t>(i));
    return ids;
  }
};

double avg_rel(const SurrogateRanker& r, const std::vector<TokenSeq>& queries,
               const TokenSeq& doc, const std::vector<int32_t>& trigger) {
  TokenSeq combined = doc;
  combined.ids.insert(combined.ids.end(), trigger.begin(), trigger.end());
  double total = 0;
  for (const auto& q : queries) total += r.score(q, combined);
  return total / double(queries.size());
}

}  // namespace

TEST_CASE("build_candidate_pool: tie-break, hand gains, keyword union") {
  Setup s(1);
  std::vector<TokenSeq> queries{s.random_seq(3, 10), s.random_seq(3, 11)};

  // zero gradient -> ties -> k' lowest non-special token ids plus keywords
  SoftTrigger soft{2, 8, std::vector<double>(16, 0.0)};
  std::vector<double> zero(16, 0.0);
  CandidatePool pool = build_candidate_pool(queries, s.vocab, zero, s.emb, soft, 4);
  REQUIRE(pool.per_position.size() == 2);
  auto keywords = shared_query_keywords(queries, s.vocab);
  for (const auto& slot : pool.per_position) {
    REQUIRE(slot.size() >= 4);
    // first k' by token id among non-special ids (all gains zero)
    for (int i = 0; i < 4; ++i) CHECK(slot[i] == 3 + i);
    for (int32_t kw : keywords)
      CHECK(std::find(slot.begin(), slot.end(), kw) != slot.end());
    for (int32_t id : slot) CHECK_FALSE(Vocabulary::is_special(id));
  }

  // hand gain check: gain = <grad_p, e_w - soft_p>; verify ordering for position 0
  std::mt19937_64 rng(3);
  std::vector<double> grad(16);
  for (auto& g : grad) g = std::uniform_real_distribution<double>(-1, 1)(rng);
  CandidatePool ranked = build_candidate_pool(queries, s.vocab, grad, s.emb, soft, 6);
  auto gain = [&](int32_t id) {
    double g = 0;
    auto e = s.emb.vec(id);
    for (int k = 0; k < 8; ++k) g += grad[k] * e[k];
    return g;
  };
  const auto& slot = ranked.per_position[0];
  for (size_t i = 1; i < 6; ++i) CHECK(gain(slot[i - 1]) >= gain(slot[i]) - 1e-12);
}

TEST_CASE("shared_query_keywords requires two-query support") {
  Vocabulary v = Vocabulary::from_texts({"colonize mars is good",
                                         "colonize the moon",
                                         "colonize asteroids now",
                                         "unrelated query text"});
  std::vector<TokenSeq> queries{v.encode("colonize mars is good"), v.encode("colonize the moon"),
                                v.encode("colonize asteroids now"),
                                v.encode("unrelated query text")};
  auto kws = shared_query_keywords(queries, v);
  CHECK(std::find(kws.begin(), kws.end(), v.id_of("colonize")) != kws.end());
  CHECK(std::find(kws.begin(), kws.end(), v.id_of("unrelated")) == kws.end());
  // stopword "is" excluded even if shared
  CHECK(std::find(kws.begin(), kws.end(), v.id_of("is")) == kws.end());
}

TEST_CASE("optimize_soft_trigger: identity at 0 steps, first-step gain, determinism") {
  Setup s(2);
  std::vector<TokenSeq> queries{s.random_seq(4, 20)};
  TokenSeq doc = s.random_seq(8, 21);

  TriggerConfig cfg;
  cfg.max_soft_steps = 0;
  SoftTrigger init{2, 8, std::vector<double>(16, 0.5)};
  SoftTrigger out = optimize_soft_trigger(s.ranker, doc, queries, cfg, init);
  CHECK(out.vecs == init.vecs);

  // single query, one soft position with a winning vector: step 1 improves
  TriggerConfig one;
  one.max_soft_steps = 1;
  one.lr = 0.005;
  SoftTrigger big{1, 8, std::vector<double>(8, 10.0)};
  auto objective = [&](const SoftTrigger& st) {
    return s.ranker.score_soft(queries[0], doc, st);
  };
  double before = objective(big);
  SoftTrigger after = optimize_soft_trigger(s.ranker, doc, queries, one, big);
  CHECK(objective(after) > before);

  // determinism
  TriggerConfig full;
  full.max_soft_steps = 12;
  SoftTrigger a = optimize_soft_trigger(s.ranker, doc, queries, full, big);
  SoftTrigger b = optimize_soft_trigger(s.ranker, doc, queries, full, big);
  CHECK(a.vecs == b.vecs);
}

TEST_CASE("beam_discretize equals exhaustive argmax for m=1 over the full vocabulary") {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    Setup s(seed + 30);
    std::vector<TokenSeq> queries{s.random_seq(3, seed * 2 + 1), s.random_seq(4, seed * 2 + 2)};
    TokenSeq doc = s.random_seq(10, seed + 99);

    CandidatePool pool;
    pool.per_position.push_back(s.usable_tokens());
    SoftTrigger soft{1, 8, std::vector<double>(8, 0.0)};
    TriggerConfig cfg;
    cfg.trigger_length = 1;
    cfg.beam_size = 3;

    Trigger got = beam_discretize(s.ranker, doc, queries, soft, pool, cfg);

    int32_t best_token = -1;
    double best_score = -1e300;
    for (int32_t cand : s.usable_tokens()) {
      double sc = avg_rel(s.ranker, queries, doc, {cand});
      if (sc > best_score || (sc == best_score && cand < best_token)) {
        best_score = sc;
        best_token = cand;
      }
    }
    REQUIRE(got.tokens.ids.size() == 1);
    CHECK(got.tokens.ids[0] == best_token);
    CHECK(got.achieved_avg_relevance == doctest::Approx(best_score).epsilon(1e-9));
  }
}

TEST_CASE("beam covering the whole lattice equals exhaustive search (m=2)") {
  Setup s(77);
  std::vector<TokenSeq> queries{s.random_seq(3, 5)};
  TokenSeq doc = s.random_seq(6, 6);

  CandidatePool pool;
  pool.per_position.push_back({3, 4, 5, 6, 7});
  pool.per_position.push_back({8, 9, 10, 11, 12});
  SoftTrigger soft{2, 8, std::vector<double>(16, 0.0)};
  TriggerConfig cfg;
  cfg.trigger_length = 2;
  cfg.beam_size = 25;  // >= product of pool sizes

  Trigger got = beam_discretize(s.ranker, doc, queries, soft, pool, cfg);

  double best = -1e300;
  std::vector<int32_t> best_ids;
  for (int32_t a : pool.per_position[0]) {
    for (int32_t b : pool.per_position[1]) {
      double sc = avg_rel(s.ranker, queries, doc, {a, b});
      std::vector<int32_t> ids{a, b};
      if (sc > best || (sc == best && ids < best_ids)) {
        best = sc;
        best_ids = ids;
      }
    }
  }
  CHECK(got.tokens.ids == best_ids);
}

TEST_CASE("beam tie-break picks the lexicographically smallest sequence") {
  Setup s(88);
  std::vector<TokenSeq> queries{s.random_seq(2, 9)};
  TokenSeq doc = s.random_seq(30, 8);  // long doc dominates every max
  // duplicate the same embedding row? instead: pool positions where all
  // candidates give identical scores because the doc max always wins.
  CandidatePool pool;
  pool.per_position.push_back({7, 5, 9});
  SoftTrigger soft{1, 8, std::vector<double>(8, -100.0)};
  TriggerConfig cfg;
  cfg.trigger_length = 1;
  cfg.beam_size = 3;
  // craft scores equal by using candidates whose vectors never win a max:
  // every candidate scores the same as the doc alone, so ids decide.
  double doc_alone = avg_rel(s.ranker, queries, doc, {});
  bool all_equal = true;
  for (int32_t cand : pool.per_position[0]) {
    if (std::abs(avg_rel(s.ranker, queries, doc, {cand}) - doc_alone) > 1e-15) all_equal = false;
  }
  if (all_equal) {
    Trigger got = beam_discretize(s.ranker, doc, queries, soft, pool, cfg);
    CHECK(got.tokens.ids[0] == 5);
  }
}

TEST_CASE("generate_trigger: monotone best, beats bare doc, deterministic") {
  Setup s(3, 40, 8);
  std::vector<TokenSeq> queries{s.random_seq(4, 41), s.random_seq(4, 42), s.random_seq(3, 43)};
  TokenSeq doc = s.random_seq(12, 44);

  TriggerConfig cfg;
  cfg.trigger_length = 4;
  cfg.beam_size = 2;
  cfg.pool_topk = 6;
  cfg.max_soft_steps = 8;
  cfg.outer_rounds = 3;
  cfg.seed = 7;

  TriggerTrace trace;
  Trigger t = generate_trigger(s.ranker, doc, queries, cfg, s.vocab, &trace);
  REQUIRE(t.tokens.ids.size() == 4);

  // achieved value is reproducible from scratch
  CHECK(t.achieved_avg_relevance ==
        doctest::Approx(avg_rel(s.ranker, queries, doc, t.tokens.ids)).epsilon(1e-9));

  // trigger does not hurt: at least the bare doc relevance
  double bare = 0;
  for (const auto& q : queries) bare += s.ranker.score(q, doc);
  bare /= double(queries.size());
  CHECK(t.achieved_avg_relevance >= bare - 1e-9);

  // best-so-far is monotone across rounds
  for (size_t r = 1; r < trace.round_best.size(); ++r)
    CHECK(trace.round_best[r] >= trace.round_best[r - 1] - 1e-12);

  // composition: outer_rounds=1 equals one optimize+discretize pass
  TriggerConfig single = cfg;
  single.outer_rounds = 1;
  Trigger once = generate_trigger(s.ranker, doc, queries, single, s.vocab);
  CHECK(once.tokens.ids.size() == 4);

  // determinism
  Trigger again = generate_trigger(s.ranker, doc, queries, cfg, s.vocab);
  CHECK(again.tokens.ids == t.tokens.ids);
}

TEST_CASE("poisonedrag baseline: prepend semantics and determinism") {
  Document doc{"d1", "t1", "the original document text", StanceLabel::Con};
  std::vector<Query> queries{{"q0", "alpha question"}, {"q1", "beta question"},
                             {"q2", "gamma question"}, {"q3", "delta question"},
                             {"q4", "epsilon question"}};
  std::string a = poisonedrag_baseline(doc, queries, 42);
  std::string b = poisonedrag_baseline(doc, queries, 42);
  CHECK(a == b);
  bool matched = false;
  for (const auto& q : queries) {
    if (a == q.text + " " + doc.text) matched = true;
  }
  CHECK(matched);

  std::vector<Query> one{{"q", "only question"}};
  CHECK(poisonedrag_baseline(doc, one, 7) == "only question " + doc.text);

  // edit ratio equals |q*| / |doc| for the prepend
  Vocabulary v = Vocabulary::from_texts({a, doc.text});
  double er = edit_ratio(v.encode(a), v.encode(doc.text));
  size_t qlen = v.encode(a).ids.size() - v.encode(doc.text).ids.size();
  CHECK(er == doctest::Approx(double(qlen) / double(v.encode(doc.text).ids.size())));
}

TEST_CASE("collision baseline: standalone argmax for m=1, deterministic") {
  Setup s(4, 30, 8);
  std::vector<TokenSeq> queries{s.random_seq(3, 50), s.random_seq(3, 51)};

  TriggerConfig cfg;
  cfg.trigger_length = 1;
  cfg.beam_size = 3;
  cfg.pool_topk = static_cast<int>(s.vocab.size());  // pool covers everything
  cfg.max_soft_steps = 5;
  cfg.outer_rounds = 1;

  Trigger got = collision_baseline(s.ranker, queries, cfg, s.vocab);
  REQUIRE(got.tokens.ids.size() == 1);

  int32_t best_token = -1;
  double best = -1e300;
  for (int32_t cand : s.usable_tokens()) {
    TokenSeq alone;
    alone.ids = {cand};
    double sc = 0;
    for (const auto& q : queries) sc += s.ranker.score(q, alone);
    sc /= double(queries.size());
    if (sc > best) {
      best = sc;
      best_token = cand;
    }
  }
  CHECK(got.tokens.ids[0] == best_token);

  Trigger again = collision_baseline(s.ranker, queries, cfg, s.vocab);
  CHECK(again.tokens.ids == got.tokens.ids);

  // appending the collision to a document changes avg relevance by the
  // independently recomputed amount
  TokenSeq doc = s.random_seq(9, 52);
  double with = avg_rel(s.ranker, queries, doc, got.tokens.ids);
  double without = avg_rel(s.ranker, queries, doc, {});
  CHECK(with >= without - 1e-12);
}

TEST_CASE("pat baseline: anchors shift objective by a constant; fluency dominates at infinity") {
  Setup s(5, 24, 8);
  std::vector<TokenSeq> queries{s.random_seq(3, 60), s.random_seq(3, 61)};
  TokenSeq doc = s.random_seq(8, 62);
  NGramLM lm = train_ngram_lm({s.random_seq(40, 63), s.random_seq(40, 64)}, s.vocab.size(), 1.0);

  TriggerConfig cfg;
  cfg.trigger_length = 2;
  cfg.beam_size = 4;
  cfg.pool_topk = 5;
  cfg.max_soft_steps = 4;
  cfg.outer_rounds = 1;

  // anchors with zero score: an all-zero scorer cannot be built, so use the
  // doc itself; with fluency 0 the argmax matches the relevance-only search.
  std::vector<TokenSeq> anchors{doc, doc};
  Trigger pat0 = pat_baseline(s.ranker, doc, queries, anchors, lm, 0.0, cfg, s.vocab);
  Trigger plain = generate_trigger(s.ranker, doc, queries, cfg, s.vocab);
  CHECK(pat0.tokens.ids == plain.tokens.ids);

  CHECK_THROWS_AS(pat_baseline(s.ranker, doc, queries, {doc}, lm, 0.0, cfg, s.vocab),
                  InvalidArgument);

  // huge fluency weight with the pool spanning the whole vocabulary:
  // exhaustive-lattice oracle over all token pairs, m=2
  TriggerConfig wide = cfg;
  wide.pool_topk = static_cast<int>(s.vocab.size());
  wide.beam_size = static_cast<int>(s.vocab.size() * s.vocab.size());
  wide.outer_rounds = 1;
  wide.max_soft_steps = 0;
  const double w = 1e6;
  Trigger fluent = pat_baseline(s.ranker, doc, queries, anchors, lm, w, wide, s.vocab);

  double anchor_mean = 0;
  for (size_t i = 0; i < queries.size(); ++i) anchor_mean += s.ranker.score(queries[i], anchors[i]);
  anchor_mean /= double(queries.size());
  double best_obj = -1e300;
  std::vector<int32_t> best_pair;
  for (int32_t a : s.usable_tokens()) {
    for (int32_t b : s.usable_tokens()) {
      TokenSeq pair;
      pair.ids = {a, b};
      double obj = avg_rel(s.ranker, queries, doc, pair.ids) - anchor_mean -
                   w * lm.log_perplexity(pair);
      std::vector<int32_t> ids{a, b};
      if (obj > best_obj || (obj == best_obj && ids < best_pair)) {
        best_obj = obj;
        best_pair = ids;
      }
    }
  }
  CHECK(fluent.tokens.ids == best_pair);

  Trigger again = pat_baseline(s.ranker, doc, queries, anchors, lm, 0.0, cfg, s.vocab);
  CHECK(again.tokens.ids == pat0.tokens.ids);
}
