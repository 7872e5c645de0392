#include "topicflip/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "topicflip/rand.hpp"

namespace topicflip {

using nlohmann::json;

void RankingSnapshot::validate() const {
  std::set<std::string> qids;
  for (const auto& q : queries) {
    if (q.query_id != q.before.query_id || q.query_id != q.after.query_id)
      throw IntegrityError("snapshot query id mismatch for '" + q.query_id + "'");
    if (!qids.insert(q.query_id).second)
      throw IntegrityError("duplicate query id '" + q.query_id + "' in snapshot");
    if (q.before.entries.empty() || q.after.entries.empty())
      throw IntegrityError("empty ranking for query '" + q.query_id + "'");
  }
  for (const auto& t : target_ids) {
    if (!stances.count(t)) throw IntegrityError("target '" + t + "' has no stance label");
  }
  for (const auto& q : queries) {
    for (const auto& e : q.after.entries) {
      if (!stances.count(e.doc_id))
        throw IntegrityError("ranked doc '" + e.doc_id + "' has no stance label");
    }
  }
}

namespace {

json ranking_to_json(const RankedList& r) {
  json entries = json::array();
  for (const auto& e : r.entries) entries.push_back({e.doc_id, e.score});
  return entries;
}

RankedList ranking_from_json(const std::string& query_id, const json& j) {
  RankedList r;
  r.query_id = query_id;
  for (const auto& e : j) r.entries.push_back({e.at(0).get<std::string>(), e.at(1).get<double>()});
  return r;
}

}  // namespace

json RankingSnapshot::to_json() const {
  json qs = json::array();
  for (const auto& q : queries) {
    qs.push_back({{"query_id", q.query_id},
                  {"before", ranking_to_json(q.before)},
                  {"after", ranking_to_json(q.after)}});
  }
  json st = json::object();
  for (const auto& [id, s] : stances) st[id] = to_string(s);
  return json{{"topic_id", topic_id}, {"queries", qs}, {"targets", target_ids}, {"stances", st}};
}

RankingSnapshot RankingSnapshot::from_json(const json& j) {
  RankingSnapshot s;
  s.topic_id = j.at("topic_id").get<std::string>();
  for (const auto& q : j.at("queries")) {
    QueryRankingPair pair;
    pair.query_id = q.at("query_id").get<std::string>();
    pair.before = ranking_from_json(pair.query_id, q.at("before"));
    pair.after = ranking_from_json(pair.query_id, q.at("after"));
    s.queries.push_back(std::move(pair));
  }
  s.target_ids = j.at("targets").get<std::vector<std::string>>();
  for (const auto& [id, st] : j.at("stances").items())
    s.stances[id] = stance_from_string(st.get<std::string>());
  return s;
}

RankingMetrics compute_ranking_metrics(const RankingSnapshot& snap, size_t k,
                                       StanceLabel target_stance) {
  snap.validate();
  if (snap.queries.empty()) throw IntegrityError("snapshot has no queries");
  if (k == 0) throw InvalidArgument("k must be >= 1");

  RankingMetrics m;
  size_t pairs = 0, improved = 0;
  double brank_sum = 0.0;
  size_t top50_cross = 0, top500_cross = 0;
  double prop_delta_sum = 0.0;
  size_t queries_improved_topk = 0;
  size_t min_corpus = SIZE_MAX;

  auto stance_prop = [&](const RankedList& r) {
    size_t top = std::min(k, r.entries.size());
    size_t hits = 0;
    for (size_t i = 0; i < top; ++i) {
      auto it = snap.stances.find(r.entries[i].doc_id);
      if (it != snap.stances.end() && it->second == target_stance) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(top);
  };

  for (const auto& q : snap.queries) {
    min_corpus = std::min(min_corpus, q.after.entries.size());
    for (const auto& target : snap.target_ids) {
      size_t before = q.before.rank_of(target);
      size_t after = q.after.rank_of(target);
      ++pairs;
      if (after < before) ++improved;
      brank_sum += static_cast<double>(before) - static_cast<double>(after);
      if (before > 50 && after <= 50) ++top50_cross;
      if (before > 500 && after <= 500) ++top500_cross;
    }
    double pb = stance_prop(q.before);
    double pa = stance_prop(q.after);
    prop_delta_sum += pa - pb;
    if (pa > pb) ++queries_improved_topk;
  }

  m.rasr_rank = 100.0 * static_cast<double>(improved) / static_cast<double>(pairs);
  m.rasr_topk =
      100.0 * static_cast<double>(queries_improved_topk) / static_cast<double>(snap.queries.size());
  m.brank = brank_sum / static_cast<double>(pairs);
  m.topk_v = 100.0 * prop_delta_sum / static_cast<double>(snap.queries.size());
  if (min_corpus >= 500) {
    m.top50_pct = 100.0 * static_cast<double>(top50_cross) / static_cast<double>(pairs);
    m.top500_pct = 100.0 * static_cast<double>(top500_cross) / static_cast<double>(pairs);
  }
  return m;
}

StanceMetrics compute_stance_metrics(const std::vector<RagAnswer>& attacked,
                                     const std::vector<RagAnswer>& clean_run1,
                                     const std::vector<RagAnswer>& clean_run2) {
  if (attacked.size() != clean_run1.size() || attacked.size() != clean_run2.size())
    throw IntegrityError("stance metrics: run lengths differ");
  if (attacked.empty()) throw IntegrityError("stance metrics: empty runs");
  double asv_sum = 0.0, clean_sum = 0.0;
  for (size_t i = 0; i < attacked.size(); ++i) {
    if (attacked[i].query_id != clean_run1[i].query_id ||
        attacked[i].query_id != clean_run2[i].query_id)
      throw IntegrityError("stance metrics: query ids misaligned at position " +
                           std::to_string(i));
    asv_sum += std::abs(attacked[i].opinion_score - clean_run1[i].opinion_score);
    clean_sum += std::abs(clean_run2[i].opinion_score - clean_run1[i].opinion_score);
  }
  StanceMetrics s;
  s.asv = asv_sum / static_cast<double>(attacked.size());
  s.asv_clean = clean_sum / static_cast<double>(attacked.size());
  s.delta_asv = s.asv - s.asv_clean;
  return s;
}

void MetricsReport::validate() const {
  auto pct = [](double v) { return v >= 0.0 && v <= 100.0; };
  if (!pct(ranking.rasr_rank) || !pct(ranking.rasr_topk))
    throw IntegrityError("RASR out of range");
  if (ranking.topk_v < -100.0 || ranking.topk_v > 100.0)
    throw IntegrityError("topk-v out of range");
  if (ranking.top50_pct && !pct(*ranking.top50_pct)) throw IntegrityError("top50 out of range");
  if (ranking.top500_pct && !pct(*ranking.top500_pct)) throw IntegrityError("top500 out of range");
  if (stance_shift.asv < 0.0 || stance_shift.asv > 2.0) throw IntegrityError("ASV out of range");
  if (stance_shift.delta_asv != stance_shift.asv - stance_shift.asv_clean)
    throw IntegrityError("delta ASV is not asv - asv_clean");
}

json MetricsReport::to_json() const {
  json j{{"topic_id", topic_id},
         {"method", method},
         {"stance", stance},
         {"defense", defense},
         {"rasr_rank", ranking.rasr_rank},
         {"rasr_topk", ranking.rasr_topk},
         {"brank", ranking.brank},
         {"topk_v", ranking.topk_v},
         {"asv", stance_shift.asv},
         {"asv_clean", stance_shift.asv_clean},
         {"delta_asv", stance_shift.delta_asv},
         {"config_hash", config_hash},
         {"seed", seed}};
  j["top50_pct"] = ranking.top50_pct ? json(*ranking.top50_pct) : json(nullptr);
  j["top500_pct"] = ranking.top500_pct ? json(*ranking.top500_pct) : json(nullptr);
  return j;
}

MetricsReport MetricsReport::from_json(const json& j) {
  MetricsReport r;
  r.topic_id = j.at("topic_id").get<std::string>();
  r.method = j.at("method").get<std::string>();
  r.stance = j.at("stance").get<std::string>();
  r.defense = j.at("defense").get<std::string>();
  r.ranking.rasr_rank = j.at("rasr_rank").get<double>();
  r.ranking.rasr_topk = j.at("rasr_topk").get<double>();
  r.ranking.brank = j.at("brank").get<double>();
  r.ranking.topk_v = j.at("topk_v").get<double>();
  if (!j.at("top50_pct").is_null()) r.ranking.top50_pct = j.at("top50_pct").get<double>();
  if (!j.at("top500_pct").is_null()) r.ranking.top500_pct = j.at("top500_pct").get<double>();
  r.stance_shift.asv = j.at("asv").get<double>();
  r.stance_shift.asv_clean = j.at("asv_clean").get<double>();
  r.stance_shift.delta_asv = j.at("delta_asv").get<double>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.seed = j.at("seed").get<uint64_t>();
  return r;
}

std::string MetricsReport::csv_header() {
  return "topic,method,stance,defense,rasr_rank,rasr_topk,brank,topk_v,top50_pct,top500_pct,"
         "asv,asv_clean,delta_asv,config_hash,seed";
}

std::string MetricsReport::csv_row() const {
  char buf[512];
  auto fmt = [](double v) {
    char b[64];
    std::snprintf(b, sizeof(b), "%.6f", v);
    return std::string(b);
  };
  auto opt = [&](const std::optional<double>& v) { return v ? fmt(*v) : std::string("NA"); };
  std::snprintf(buf, sizeof(buf), "%s,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s,%llu",
                topic_id.c_str(), method.c_str(), stance.c_str(), defense.c_str(),
                fmt(ranking.rasr_rank).c_str(), fmt(ranking.rasr_topk).c_str(),
                fmt(ranking.brank).c_str(), fmt(ranking.topk_v).c_str(),
                opt(ranking.top50_pct).c_str(), opt(ranking.top500_pct).c_str(),
                fmt(stance_shift.asv).c_str(), fmt(stance_shift.asv_clean).c_str(),
                fmt(stance_shift.delta_asv).c_str(), config_hash.c_str(),
                static_cast<unsigned long long>(seed));
  return buf;
}

PplFilterResult ppl_filter(const NGramLM& lm, const Corpus& corpus, const Vocabulary& vocab,
                           double threshold) {
  PplFilterResult out;
  std::map<std::string, std::vector<double>> per_class;
  for (const auto& d : corpus.documents()) {
    double ppl = lm.log_perplexity(d.text, vocab);
    per_class[to_string(corpus.provenance(d.id))].push_back(ppl);
    if (ppl > threshold) {
      out.removed_ids.push_back(d.id);
    } else {
      out.retained.add(d, corpus.provenance(d.id));
    }
  }
  for (const auto& [cls, values] : per_class) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    out.distribution[cls] = {mean, std::sqrt(var)};
  }
  return out;
}

double masked_score(const IScorer& scorer, const TokenSeq& doc, const TokenSeq& query,
                    double mask_rate, int copies, uint64_t seed) {
  if (mask_rate < 0.0 || mask_rate > 1.0)
    throw InvalidArgument("masked_score: mask_rate outside [0, 1]");
  if (copies < 1) throw InvalidArgument("masked_score: copies must be >= 1");
  double total = 0.0;
  for (int c = 0; c < copies; ++c) {
    auto rng = rng_stream(seed, "mask-copy", static_cast<uint64_t>(c));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    TokenSeq masked = doc;
    for (auto& id : masked.ids) {
      if (unit(rng) < mask_rate) id = Vocabulary::kMask;
    }
    total += scorer.score(query, masked);
  }
  return total / static_cast<double>(copies);
}

MaskedScorer::MaskedScorer(const IScorer& base, double mask_rate, int copies, uint64_t seed)
    : base_(&base),
      mask_rate_(mask_rate),
      copies_(copies),
      seed_(seed),
      name_(base.name() + "+mask") {}

double MaskedScorer::score(const TokenSeq& query, const TokenSeq& doc) const {
  // Per-pair stream so rankings are reproducible regardless of visit order.
  uint64_t h = seed_;
  h = fnv1a_u64(query.ids.size(), h);
  for (int32_t id : query.ids) h = fnv1a_u64(static_cast<uint32_t>(id), h);
  h = fnv1a_u64(doc.ids.size(), h);
  for (int32_t id : doc.ids) h = fnv1a_u64(static_cast<uint32_t>(id), h);
  return masked_score(*base_, doc, query, mask_rate_, copies_, h);
}

}  // namespace topicflip
