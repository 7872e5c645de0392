#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "topicflip/errors.hpp"
#include "topicflip/text.hpp"

namespace topicflip {

enum class StanceLabel { Con = 0, Neutral = 1, Pro = 2 };

/// Numeric projection on the opinion scale: CON=0, NEUTRAL=1, PRO=2.
int stance_score(StanceLabel s);
std::string to_string(StanceLabel s);
StanceLabel stance_from_string(const std::string& s);

struct Query {
  std::string id;
  std::string text;
};

struct Topic {
  std::string id;
  std::string title;
  std::vector<Query> queries;
  StanceLabel target_stance = StanceLabel::Con;
};

enum class Provenance { Clean, PoisonedReplacement, PoisonedInjection };
std::string to_string(Provenance p);

struct Document {
  std::string id;
  std::string topic_id;
  std::string text;
  StanceLabel stance = StanceLabel::Neutral;
};

/// Immutable after construction; poisoning produces a new corpus value.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Document> docs);

  size_t size() const { return docs_.size(); }
  bool empty() const { return docs_.empty(); }
  bool contains(const std::string& id) const;
  const Document& doc(const std::string& id) const;
  Provenance provenance(const std::string& id) const;
  /// Documents in ascending id order.
  const std::vector<Document>& documents() const { return docs_; }

  void add(Document doc, Provenance prov = Provenance::Clean);

 private:
  std::vector<Document> docs_;           // sorted by id
  std::map<std::string, size_t> index_;  // id -> position in docs_
  std::map<std::string, Provenance> provenance_;
};

enum class PoisonMode { Replace, Inject };
enum class TargetSelectMode { Least5, Top5 };

/// One record per line: {"id","topic_id","text","stance"} JSON objects.
Corpus load_corpus(const std::string& path);
void save_corpus(const Corpus& corpus, const std::string& path);

/// One record per line: {"topic_id","title","target_stance","queries"}.
std::vector<Topic> load_topics(const std::string& path);
void save_topics(const std::vector<Topic>& topics, const std::string& path);

/// Per-document token sequences for scoring, in ascending id order.
struct TokenizedDoc {
  std::string id;
  std::string topic_id;
  StanceLabel stance;
  TokenSeq tokens;
};

class TokenizedCorpus {
 public:
  TokenizedCorpus() = default;
  static TokenizedCorpus build(const Corpus& corpus, const Vocabulary& vocab);

  size_t size() const { return docs_.size(); }
  const std::vector<TokenizedDoc>& docs() const { return docs_; }
  const TokenizedDoc& doc(const std::string& id) const;

 private:
  std::vector<TokenizedDoc> docs_;
  std::map<std::string, size_t> index_;
};

class IScorer;

/// Picks the poisoning targets for one topic: the 5 documents of the given
/// stance with the lowest (least5) or highest (top5) relevance averaged over
/// the topic's queries. Ties break toward the lexicographically smaller id.
std::vector<std::string> select_target_documents(const Corpus& corpus, const Topic& topic,
                                                 StanceLabel stance, TargetSelectMode mode,
                                                 const IScorer& scorer,
                                                 const Vocabulary& vocab);

/// Rank-averaged alternative: lowest (least5) or highest (top5) mean rank
/// across the topic's queries, ranks taken over the stance candidates.
std::vector<std::string> select_target_documents_by_rank(const Corpus& corpus,
                                                         const Topic& topic, StanceLabel stance,
                                                         TargetSelectMode mode,
                                                         const IScorer& scorer,
                                                         const Vocabulary& vocab);

/// Replace mode: every key must exist; cardinality is preserved and only the
/// listed documents' text changes. Inject mode: keys must be fresh ids; the
/// given documents join the corpus. Either way the returned corpus carries
/// poisoned provenance for the touched ids.
Corpus apply_poisoning(const Corpus& corpus, const std::map<std::string, Document>& changes,
                       PoisonMode mode);
/// Text-only convenience; in inject mode the new documents get an empty
/// topic id and NEUTRAL stance.
Corpus apply_poisoning(const Corpus& corpus, const std::map<std::string, std::string>& texts,
                       PoisonMode mode);

}  // namespace topicflip
