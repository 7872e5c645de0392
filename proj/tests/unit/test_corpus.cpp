#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "support/oracles.hpp"
#include "topicflip/corpus.hpp"
#include "topicflip/retrieval.hpp"

using namespace topicflip;

namespace {

std::string write_tmp(const std::string& name, const std::string& content) {
  std::string path = "/tmp/" + name;
  std::ofstream out(path);
  out << content;
  return path;
}

Corpus three_doc_corpus() {
  Corpus c;
  c.add({"d1", "t1", "alpha beta gamma", StanceLabel::Con});
  c.add({"d2", "t1", "delta epsilon", StanceLabel::Pro});
  c.add({"d3", "t1", "zeta eta theta", StanceLabel::Neutral});
  return c;
}

}  // namespace

TEST_CASE("load_corpus parses records and rejects bad input") {
  std::string ok = write_tmp(
      "tf_corpus_ok.jsonl",
      R"({"id":"d1","topic_id":"t1","text":"one","stance":"PRO"})" "\n"
      R"({"id":"d2","topic_id":"t1","text":"two","stance":"CON"})" "\n"
      R"({"id":"d3","topic_id":"t1","text":"three","stance":"NEUTRAL"})" "\n");
  Corpus c = load_corpus(ok);
  CHECK(c.size() == 3);
  CHECK(c.doc("d2").stance == StanceLabel::Con);
  CHECK(c.provenance("d1") == Provenance::Clean);

  std::string dup = write_tmp(
      "tf_corpus_dup.jsonl",
      R"({"id":"d1","topic_id":"t1","text":"one","stance":"PRO"})" "\n"
      R"({"id":"d1","topic_id":"t1","text":"again","stance":"CON"})" "\n");
  CHECK_THROWS_AS(load_corpus(dup), IntegrityError);

  std::string bad = write_tmp("tf_corpus_bad.jsonl", "{not json}\n");
  CHECK_THROWS_WITH_AS(load_corpus(bad), doctest::Contains("line 1"), ParseError);

  std::string empty = write_tmp("tf_corpus_empty.jsonl", "");
  CHECK(load_corpus(empty).size() == 0);
}

TEST_CASE("corpus save/load round trip preserves provenance") {
  Corpus c = three_doc_corpus();
  Corpus poisoned = apply_poisoning(c, std::map<std::string, std::string>{{"d1", "new text"}},
                                    PoisonMode::Replace);
  save_corpus(poisoned, "/tmp/tf_corpus_rt.jsonl");
  Corpus back = load_corpus("/tmp/tf_corpus_rt.jsonl");
  CHECK(back.size() == 3);
  CHECK(back.doc("d1").text == "new text");
}

TEST_CASE("load_topics validates queries and stances") {
  std::string ok = write_tmp(
      "tf_topics_ok.jsonl",
      R"({"topic_id":"t1","title":"T","target_stance":"CON","queries":["q one","q two"]})" "\n");
  auto topics = load_topics(ok);
  REQUIRE(topics.size() == 1);
  CHECK(topics[0].queries.size() == 2);
  CHECK(topics[0].queries[0].id == "t1-q0");

  std::string neutral = write_tmp(
      "tf_topics_neutral.jsonl",
      R"({"topic_id":"t1","title":"T","target_stance":"NEUTRAL","queries":["q"]})" "\n");
  CHECK_THROWS_AS(load_topics(neutral), ParseError);

  std::string noq = write_tmp(
      "tf_topics_noq.jsonl",
      R"({"topic_id":"t1","title":"T","target_stance":"PRO","queries":[]})" "\n");
  CHECK_THROWS_AS(load_topics(noq), ParseError);
}

TEST_CASE("apply_poisoning replace: cardinality, locality, unknown id") {
  Corpus c = three_doc_corpus();
  Corpus p = apply_poisoning(c, std::map<std::string, std::string>{{"d1", "changed"}},
                             PoisonMode::Replace);
  CHECK(p.size() == 3);
  CHECK(p.doc("d1").text == "changed");
  CHECK(p.provenance("d1") == Provenance::PoisonedReplacement);
  // byte-level: untouched docs identical
  CHECK(p.doc("d2").text == c.doc("d2").text);
  CHECK(p.doc("d3").text == c.doc("d3").text);
  CHECK(p.provenance("d2") == Provenance::Clean);

  CHECK_THROWS_AS(apply_poisoning(c, std::map<std::string, std::string>{{"dX", "t"}},
                                  PoisonMode::Replace),
                  IntegrityError);
}

TEST_CASE("apply_poisoning inject: growth and collision") {
  Corpus c = three_doc_corpus();
  Corpus p =
      apply_poisoning(c, std::map<std::string, std::string>{{"p1", "planted"}}, PoisonMode::Inject);
  CHECK(p.size() == 4);
  CHECK(p.provenance("p1") == Provenance::PoisonedInjection);
  CHECK_THROWS_AS(
      apply_poisoning(c, std::map<std::string, std::string>{{"d1", "x"}}, PoisonMode::Inject),
      IntegrityError);
}

TEST_CASE("select_target_documents: least5/top5 with oracle, ties, errors") {
  // 6 CON docs whose relevance is controlled through keyword counts.
  Corpus c;
  std::vector<std::string> kw_counts = {"kw",
                                        "kw kw",
                                        "kw kw kw",
                                        "kw kw kw kw",
                                        "kw kw kw kw kw",
                                        "kw kw kw kw kw kw"};
  for (size_t i = 0; i < kw_counts.size(); ++i) {
    c.add({"c" + std::to_string(i), "t1", kw_counts[i] + " filler words here", StanceLabel::Con});
  }
  c.add({"p0", "t1", "other text", StanceLabel::Pro});
  Topic topic;
  topic.id = "t1";
  topic.title = "T";
  topic.queries = {{"q0", "kw kw"}, {"q1", "kw filler"}};

  Vocabulary vocab = Vocabulary::from_texts({"kw filler words here other text"});
  EmbeddingTable emb = EmbeddingTable::random_unit(vocab, 8, 1);
  DenseScorer scorer("mean", emb, Pooling::Mean);

  auto least = select_target_documents(c, topic, StanceLabel::Con, TargetSelectMode::Least5,
                                       scorer, vocab);
  auto top = select_target_documents(c, topic, StanceLabel::Con, TargetSelectMode::Top5, scorer,
                                     vocab);
  REQUIRE(least.size() == 5);
  REQUIRE(top.size() == 5);

  // brute-force oracle: average score over both queries, ascending
  auto queries = tokenize_queries(topic.queries, vocab);
  std::vector<std::pair<double, std::string>> keyed;
  for (int i = 0; i < 6; ++i) {
    std::string id = "c" + std::to_string(i);
    double avg = 0;
    for (const auto& q : queries) avg += scorer.score(q, vocab.encode(c.doc(id).text));
    keyed.emplace_back(avg / 2.0, id);
  }
  std::sort(keyed.begin(), keyed.end());
  for (int i = 0; i < 5; ++i) CHECK(least[i] == keyed[i].second);
  std::sort(keyed.begin(), keyed.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (int i = 0; i < 5; ++i) CHECK(top[i] == keyed[i].second);

  // determinism
  CHECK(least == select_target_documents(c, topic, StanceLabel::Con, TargetSelectMode::Least5,
                                         scorer, vocab));

  // all-equal scores: lexicographically smallest ids win
  Corpus eq;
  for (int i = 0; i < 6; ++i)
    eq.add({"e" + std::to_string(i), "t1", "same text", StanceLabel::Con});
  auto tied = select_target_documents(eq, topic, StanceLabel::Con, TargetSelectMode::Least5,
                                      scorer, vocab);
  CHECK(tied == std::vector<std::string>{"e0", "e1", "e2", "e3", "e4"});

  // insufficient candidates
  Corpus small;
  small.add({"s1", "t1", "x", StanceLabel::Con});
  CHECK_THROWS_AS(select_target_documents(small, topic, StanceLabel::Con,
                                          TargetSelectMode::Least5, scorer, vocab),
                  InvalidArgument);
}

TEST_CASE("rank-averaged target selection is consistent on distinct scores") {
  Corpus c;
  for (int i = 0; i < 6; ++i) {
    std::string reps(static_cast<size_t>(i + 1), 'x');
    std::string text;
    for (int r = 0; r <= i; ++r) text += "kw ";
    text += "pad";
    c.add({"r" + std::to_string(i), "t1", text, StanceLabel::Con});
  }
  Topic topic;
  topic.id = "t1";
  topic.queries = {{"q0", "kw"}};
  Vocabulary vocab = Vocabulary::from_texts({"kw pad"});
  EmbeddingTable emb = EmbeddingTable::random_unit(vocab, 8, 2);
  DenseScorer scorer("mean", emb, Pooling::Mean);
  auto by_score = select_target_documents(c, topic, StanceLabel::Con, TargetSelectMode::Least5,
                                          scorer, vocab);
  auto by_rank = select_target_documents_by_rank(c, topic, StanceLabel::Con,
                                                 TargetSelectMode::Least5, scorer, vocab);
  CHECK(by_score == by_rank);  // single query: score order == rank order
}
