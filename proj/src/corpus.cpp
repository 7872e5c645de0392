#include "topicflip/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "topicflip/retrieval.hpp"

#include "json.hpp"

namespace topicflip {

using nlohmann::json;

int stance_score(StanceLabel s) { return static_cast<int>(s); }

std::string to_string(StanceLabel s) {
  switch (s) {
    case StanceLabel::Pro: return "PRO";
    case StanceLabel::Con: return "CON";
    case StanceLabel::Neutral: return "NEUTRAL";
  }
  throw InvalidArgument("bad stance label");
}

StanceLabel stance_from_string(const std::string& s) {
  if (s == "PRO" || s == "pro") return StanceLabel::Pro;
  if (s == "CON" || s == "con") return StanceLabel::Con;
  if (s == "NEUTRAL" || s == "neutral") return StanceLabel::Neutral;
  throw ParseError("unknown stance label '" + s + "'");
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::Clean: return "clean";
    case Provenance::PoisonedReplacement: return "poisoned-replacement";
    case Provenance::PoisonedInjection: return "poisoned-injection";
  }
  throw InvalidArgument("bad provenance");
}

Corpus::Corpus(std::vector<Document> docs) {
  for (auto& d : docs) add(std::move(d));
}

void Corpus::add(Document doc, Provenance prov) {
  if (doc.id.empty()) throw IntegrityError("document with empty id");
  if (doc.text.empty()) throw IntegrityError("document '" + doc.id + "' has empty text");
  if (index_.count(doc.id)) throw IntegrityError("duplicate document id '" + doc.id + "'");
  provenance_[doc.id] = prov;
  auto pos = std::lower_bound(docs_.begin(), docs_.end(), doc.id,
                              [](const Document& d, const std::string& id) { return d.id < id; });
  size_t idx = static_cast<size_t>(pos - docs_.begin());
  docs_.insert(pos, std::move(doc));
  for (auto& [id, i] : index_) {
    if (i >= idx) ++i;
  }
  index_[docs_[idx].id] = idx;
}

bool Corpus::contains(const std::string& id) const { return index_.count(id) > 0; }

const Document& Corpus::doc(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw IntegrityError("unknown document id '" + id + "'");
  return docs_[it->second];
}

Provenance Corpus::provenance(const std::string& id) const {
  auto it = provenance_.find(id);
  if (it == provenance_.end()) throw IntegrityError("unknown document id '" + id + "'");
  return it->second;
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus file: " + path);
  Corpus corpus;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("corpus line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      Document d;
      d.id = j.at("id").get<std::string>();
      d.topic_id = j.at("topic_id").get<std::string>();
      d.text = j.at("text").get<std::string>();
      d.stance = stance_from_string(j.at("stance").get<std::string>());
      corpus.add(std::move(d));
    } catch (const json::exception& e) {
      throw ParseError("corpus line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (const auto& d : corpus.documents()) {
    json j{{"id", d.id},
           {"topic_id", d.topic_id},
           {"text", d.text},
           {"stance", to_string(d.stance)},
           {"provenance", to_string(corpus.provenance(d.id))}};
    out << j.dump() << '\n';
  }
}

std::vector<Topic> load_topics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open topics file: " + path);
  std::vector<Topic> topics;
  std::set<std::string> seen;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("topics line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      Topic t;
      t.id = j.at("topic_id").get<std::string>();
      t.title = j.at("title").get<std::string>();
      t.target_stance = stance_from_string(j.at("target_stance").get<std::string>());
      if (t.target_stance == StanceLabel::Neutral)
        throw ParseError("topics line " + std::to_string(lineno) +
                         ": target_stance must be PRO or CON");
      size_t qn = 0;
      std::set<std::string> qids;
      for (const auto& q : j.at("queries")) {
        Query query;
        if (q.is_string()) {
          query.text = q.get<std::string>();
          query.id = t.id + "-q" + std::to_string(qn);
        } else {
          query.id = q.at("id").get<std::string>();
          query.text = q.at("text").get<std::string>();
        }
        if (query.text.empty())
          throw ParseError("topics line " + std::to_string(lineno) + ": empty query text");
        if (!qids.insert(query.id).second)
          throw IntegrityError("topics line " + std::to_string(lineno) + ": duplicate query id '" +
                               query.id + "'");
        t.queries.push_back(std::move(query));
        ++qn;
      }
      if (t.queries.empty())
        throw ParseError("topics line " + std::to_string(lineno) + ": topic without queries");
      if (!seen.insert(t.id).second)
        throw IntegrityError("duplicate topic id '" + t.id + "'");
      topics.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw ParseError("topics line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return topics;
}

void save_topics(const std::vector<Topic>& topics, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (const auto& t : topics) {
    json qs = json::array();
    for (const auto& q : t.queries) qs.push_back({{"id", q.id}, {"text", q.text}});
    json j{{"topic_id", t.id},
           {"title", t.title},
           {"target_stance", to_string(t.target_stance)},
           {"queries", qs}};
    out << j.dump() << '\n';
  }
}

TokenizedCorpus TokenizedCorpus::build(const Corpus& corpus, const Vocabulary& vocab) {
  TokenizedCorpus tc;
  tc.docs_.reserve(corpus.size());
  for (const auto& d : corpus.documents()) {
    tc.index_[d.id] = tc.docs_.size();
    tc.docs_.push_back({d.id, d.topic_id, d.stance, vocab.encode(d.text)});
  }
  return tc;
}

const TokenizedDoc& TokenizedCorpus::doc(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw IntegrityError("unknown document id '" + id + "'");
  return docs_[it->second];
}

namespace {

std::vector<std::string> select_targets_by_key(const Corpus& corpus, const Topic& topic,
                                               StanceLabel stance, TargetSelectMode mode,
                                               const IScorer& scorer, const Vocabulary& vocab,
                                               bool use_rank) {
  std::vector<const Document*> candidates;
  for (const auto& d : corpus.documents()) {
    if (d.topic_id == topic.id && d.stance == stance) candidates.push_back(&d);
  }
  if (candidates.size() < 5)
    throw InvalidArgument("select_target_documents: topic '" + topic.id + "' has only " +
                          std::to_string(candidates.size()) + " documents of stance " +
                          to_string(stance) + " (need 5)");
  auto query_tokens = tokenize_queries(topic.queries, vocab);
  std::vector<std::pair<double, std::string>> keyed;
  if (!use_rank) {
    for (const auto* d : candidates) {
      double avg = avg_relevance(scorer, query_tokens, vocab.encode(d->text));
      keyed.emplace_back(avg, d->id);
    }
  } else {
    // Mean rank across queries, ranks taken within the candidate set.
    std::map<std::string, double> rank_sum;
    for (const auto& q : query_tokens) {
      std::vector<std::pair<double, std::string>> scored;
      for (const auto* d : candidates)
        scored.emplace_back(scorer.score(q, vocab.encode(d->text)), d->id);
      std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      for (size_t r = 0; r < scored.size(); ++r) rank_sum[scored[r].second] += double(r + 1);
    }
    for (const auto* d : candidates) {
      // Negate so "higher key = more relevant" matches the score-based path.
      keyed.emplace_back(-rank_sum[d->id] / double(query_tokens.size()), d->id);
    }
  }
  bool ascending = mode == TargetSelectMode::Least5;
  std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return ascending ? a.first < b.first : a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> out;
  for (size_t i = 0; i < 5; ++i) out.push_back(keyed[i].second);
  return out;
}

}  // namespace

std::vector<std::string> select_target_documents(const Corpus& corpus, const Topic& topic,
                                                 StanceLabel stance, TargetSelectMode mode,
                                                 const IScorer& scorer, const Vocabulary& vocab) {
  return select_targets_by_key(corpus, topic, stance, mode, scorer, vocab, false);
}

std::vector<std::string> select_target_documents_by_rank(const Corpus& corpus, const Topic& topic,
                                                         StanceLabel stance, TargetSelectMode mode,
                                                         const IScorer& scorer,
                                                         const Vocabulary& vocab) {
  return select_targets_by_key(corpus, topic, stance, mode, scorer, vocab, true);
}

Corpus apply_poisoning(const Corpus& corpus, const std::map<std::string, Document>& changes,
                       PoisonMode mode) {
  Corpus out;
  if (mode == PoisonMode::Replace) {
    for (const auto& [id, doc] : changes) {
      if (!corpus.contains(id))
        throw IntegrityError("replace mode: unknown document id '" + id + "'");
      if (doc.text.empty()) throw IntegrityError("replacement for '" + id + "' has empty text");
    }
    for (const auto& d : corpus.documents()) {
      auto it = changes.find(d.id);
      if (it == changes.end()) {
        out.add(d, corpus.provenance(d.id));
      } else {
        Document nd = d;
        nd.text = it->second.text;
        out.add(std::move(nd), Provenance::PoisonedReplacement);
      }
    }
  } else {
    for (const auto& [id, doc] : changes) {
      if (corpus.contains(id))
        throw IntegrityError("inject mode: id '" + id + "' collides with an existing document");
    }
    for (const auto& d : corpus.documents()) out.add(d, corpus.provenance(d.id));
    for (const auto& [id, doc] : changes) {
      Document nd = doc;
      nd.id = id;
      out.add(std::move(nd), Provenance::PoisonedInjection);
    }
  }
  return out;
}

Corpus apply_poisoning(const Corpus& corpus, const std::map<std::string, std::string>& texts,
                       PoisonMode mode) {
  std::map<std::string, Document> changes;
  for (const auto& [id, text] : texts) {
    Document d;
    d.id = id;
    d.text = text;
    d.stance = StanceLabel::Neutral;
    changes.emplace(id, std::move(d));
  }
  return apply_poisoning(corpus, changes, mode);
}

}  // namespace topicflip
