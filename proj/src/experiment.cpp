#include "topicflip/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <set>
#include <sstream>

#include "topicflip/fixture.hpp"
#include "topicflip/rand.hpp"

namespace topicflip {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(AttackMethod m) {
  switch (m) {
    case AttackMethod::TopicFlipRag: return "topic-fliprag";
    case AttackMethod::KnowOnly: return "know-only";
    case AttackMethod::TriggerOnly: return "trigger-only";
    case AttackMethod::PoisonedRag: return "poisonedrag";
    case AttackMethod::Collision: return "collision";
    case AttackMethod::Pat: return "pat";
  }
  throw InvalidArgument("bad attack method");
}

AttackMethod method_from_string(const std::string& s) {
  if (s == "topic-fliprag") return AttackMethod::TopicFlipRag;
  if (s == "know-only") return AttackMethod::KnowOnly;
  if (s == "trigger-only") return AttackMethod::TriggerOnly;
  if (s == "poisonedrag") return AttackMethod::PoisonedRag;
  if (s == "collision") return AttackMethod::Collision;
  if (s == "pat") return AttackMethod::Pat;
  throw InvalidArgument("unknown attack method '" + s + "'");
}

std::string to_string(DefenseKind d) {
  switch (d) {
    case DefenseKind::None: return "none";
    case DefenseKind::Ppl: return "ppl";
    case DefenseKind::Mask: return "mask";
    case DefenseKind::Paraphrase: return "paraphrase";
    case DefenseKind::Rerank: return "rerank";
  }
  throw InvalidArgument("bad defense kind");
}

DefenseKind defense_from_string(const std::string& s) {
  if (s == "none") return DefenseKind::None;
  if (s == "ppl") return DefenseKind::Ppl;
  if (s == "mask") return DefenseKind::Mask;
  if (s == "paraphrase") return DefenseKind::Paraphrase;
  if (s == "rerank") return DefenseKind::Rerank;
  throw InvalidArgument("unknown defense '" + s + "'");
}

json ExperimentConfig::canonical_json() const {
  // Execution details (jobs, out_dir, trace_llm) stay out of the hash.
  json know_j{{"epsilon", know.epsilon},
              {"lambda", know.lambda},
              {"iterations", know.iterations},
              {"samples", know.samples},
              {"delta", know.delta},
              {"t_initial", know.t_initial},
              {"t_min", know.t_min},
              {"t_max", know.t_max},
              {"k_nodes", know.k_nodes},
              {"polarity_control", know.polarity_control},
              {"fixed_t", know.fixed_t ? json(*know.fixed_t) : json(nullptr)}};
  json trig_j{{"trigger_length", trigger.trigger_length},
              {"beam_size", trigger.beam_size},
              {"pool_topk", trigger.pool_topk},
              {"lr", trigger.lr},
              {"batch", trigger.batch},
              {"max_soft_steps", trigger.max_soft_steps},
              {"outer_rounds", trigger.outer_rounds},
              {"convergence_tol", trigger.convergence_tol}};
  json rag_j{{"k", rag.k},
             {"temperature", rag.temperature},
             {"rewrite_enabled", rag.rewrite_enabled},
             {"retrieve_with_original", rag.retrieve_with_original}};
  json defense_j{{"kind", to_string(defense.kind)},
                 {"ppl_threshold", defense.ppl_threshold},
                 {"mask_rate", defense.mask_rate},
                 {"mask_copies", defense.mask_copies},
                 {"rerank_scorer", defense.rerank_scorer},
                 {"rerank_pool", defense.rerank_pool}};
  return json{{"corpus_path", corpus_path},
              {"topics_path", topics_path},
              {"method", to_string(method)},
              {"stance", to_string(stance)},
              {"target_mode", target_mode == TargetSelectMode::Least5 ? "least5" : "top5"},
              {"retriever", retriever},
              {"defense", defense_j},
              {"know", know_j},
              {"trigger", trig_j},
              {"rag", rag_j},
              {"embedding_dim", embedding_dim},
              {"embedding_path", embedding_path},
              {"train_epochs", train_epochs},
              {"train_margin", train_margin},
              {"train_lr", train_lr},
              {"pat_fluency_weight", pat_fluency_weight},
              {"inject", inject_instead_of_replace},
              {"llm_backend", llm_backend},
              {"seed", seed}};
}

std::string ExperimentConfig::config_hash() const {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(canonical_json().dump())));
  return buf;
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig cfg;
  cfg.corpus_path = j.value("corpus_path", cfg.corpus_path);
  cfg.topics_path = j.value("topics_path", cfg.topics_path);
  if (j.contains("method")) cfg.method = method_from_string(j.at("method").get<std::string>());
  if (j.contains("stance")) cfg.stance = stance_from_string(j.at("stance").get<std::string>());
  if (j.contains("target_mode"))
    cfg.target_mode = j.at("target_mode").get<std::string>() == "top5" ? TargetSelectMode::Top5
                                                                       : TargetSelectMode::Least5;
  cfg.retriever = j.value("retriever", cfg.retriever);
  if (j.contains("defense")) {
    const auto& d = j.at("defense");
    cfg.defense.kind = defense_from_string(d.value("kind", "none"));
    cfg.defense.ppl_threshold = d.value("ppl_threshold", cfg.defense.ppl_threshold);
    cfg.defense.mask_rate = d.value("mask_rate", cfg.defense.mask_rate);
    cfg.defense.mask_copies = d.value("mask_copies", cfg.defense.mask_copies);
    cfg.defense.rerank_scorer = d.value("rerank_scorer", cfg.defense.rerank_scorer);
    cfg.defense.rerank_pool = d.value("rerank_pool", cfg.defense.rerank_pool);
  }
  if (j.contains("know")) {
    const auto& k = j.at("know");
    cfg.know.epsilon = k.value("epsilon", cfg.know.epsilon);
    cfg.know.lambda = k.value("lambda", cfg.know.lambda);
    cfg.know.iterations = k.value("iterations", cfg.know.iterations);
    cfg.know.samples = k.value("samples", cfg.know.samples);
    cfg.know.delta = k.value("delta", cfg.know.delta);
    cfg.know.t_initial = k.value("t_initial", cfg.know.t_initial);
    cfg.know.t_min = k.value("t_min", cfg.know.t_min);
    cfg.know.t_max = k.value("t_max", cfg.know.t_max);
    cfg.know.k_nodes = k.value("k_nodes", cfg.know.k_nodes);
    cfg.know.polarity_control = k.value("polarity_control", cfg.know.polarity_control);
    if (k.contains("fixed_t") && !k.at("fixed_t").is_null())
      cfg.know.fixed_t = k.at("fixed_t").get<int>();
  }
  if (j.contains("trigger")) {
    const auto& t = j.at("trigger");
    cfg.trigger.trigger_length = t.value("trigger_length", cfg.trigger.trigger_length);
    cfg.trigger.beam_size = t.value("beam_size", cfg.trigger.beam_size);
    cfg.trigger.pool_topk = t.value("pool_topk", cfg.trigger.pool_topk);
    cfg.trigger.lr = t.value("lr", cfg.trigger.lr);
    cfg.trigger.batch = t.value("batch", cfg.trigger.batch);
    cfg.trigger.max_soft_steps = t.value("max_soft_steps", cfg.trigger.max_soft_steps);
    cfg.trigger.outer_rounds = t.value("outer_rounds", cfg.trigger.outer_rounds);
    cfg.trigger.convergence_tol = t.value("convergence_tol", cfg.trigger.convergence_tol);
  }
  if (j.contains("rag")) {
    const auto& r = j.at("rag");
    cfg.rag.k = r.value("k", cfg.rag.k);
    cfg.rag.temperature = r.value("temperature", cfg.rag.temperature);
    cfg.rag.rewrite_enabled = r.value("rewrite_enabled", cfg.rag.rewrite_enabled);
    cfg.rag.retrieve_with_original =
        r.value("retrieve_with_original", cfg.rag.retrieve_with_original);
  }
  cfg.embedding_dim = j.value("embedding_dim", cfg.embedding_dim);
  cfg.embedding_path = j.value("embedding_path", cfg.embedding_path);
  cfg.train_epochs = j.value("train_epochs", cfg.train_epochs);
  cfg.train_margin = j.value("train_margin", cfg.train_margin);
  cfg.train_lr = j.value("train_lr", cfg.train_lr);
  cfg.pat_fluency_weight = j.value("pat_fluency_weight", cfg.pat_fluency_weight);
  cfg.inject_instead_of_replace = j.value("inject", cfg.inject_instead_of_replace);
  cfg.llm_backend = j.value("llm_backend", cfg.llm_backend);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.jobs = j.value("jobs", cfg.jobs);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  cfg.trace_llm = j.value("trace_llm", cfg.trace_llm);
  return cfg;
}

namespace {

struct Workspace {
  Corpus corpus;
  std::vector<Topic> topics;
  Vocabulary vocab;
  EmbeddingTable emb_main;
  EmbeddingTable emb_alt;
  TokenizedCorpus tokenized;
  std::unique_ptr<DenseScorer> contriever;
  std::unique_ptr<DenseScorer> dpr;
  std::unique_ptr<DenseScorer> ance;
  SurrogateRanker surrogate;
  NGramLM lm;
  std::unique_ptr<LlmClient> llm;

  const IScorer& scorer_by_name(const std::string& name) const {
    if (name == "contriever") return *contriever;
    if (name == "dpr") return *dpr;
    if (name == "ance") return *ance;
    throw InvalidArgument("unknown retriever '" + name + "'");
  }
};

Workspace build_workspace(const ExperimentConfig& cfg) {
  Workspace ws;
  ws.corpus = load_corpus(cfg.corpus_path);
  ws.topics = load_topics(cfg.topics_path);
  if (ws.topics.empty()) throw InvalidArgument("no topics loaded");

  std::vector<std::string> texts;
  for (const auto& d : ws.corpus.documents()) texts.push_back(d.text);
  for (const auto& t : ws.topics) {
    texts.push_back(t.title);
    for (const auto& q : t.queries) texts.push_back(q.text);
  }
  // The mock backend's fixed phrasing must tokenize without UNKs, or the
  // poisoned documents would collapse into shared UNK embeddings.
  for (const auto& w : mock_lexicons().all_words()) texts.push_back(w);
  ws.vocab = Vocabulary::from_texts(texts);

  if (!cfg.embedding_path.empty()) {
    ws.emb_main = EmbeddingTable::load(cfg.embedding_path, ws.vocab);
  } else {
    ws.emb_main = EmbeddingTable::random_unit(ws.vocab, cfg.embedding_dim,
                                              derive_seed(cfg.seed, "emb-main"));
  }
  ws.emb_alt =
      EmbeddingTable::random_unit(ws.vocab, ws.emb_main.dim(), derive_seed(cfg.seed, "emb-alt"));
  ws.tokenized = TokenizedCorpus::build(ws.corpus, ws.vocab);

  ws.contriever = std::make_unique<DenseScorer>("contriever", ws.emb_main, Pooling::Mean);
  ws.dpr = std::make_unique<DenseScorer>(
      DenseScorer::idf_weighted("dpr", ws.emb_main, ws.tokenized));
  ws.ance = std::make_unique<DenseScorer>("ance", ws.emb_alt, Pooling::Mean);

  SurrogateRanker raw(ws.emb_main, derive_seed(cfg.seed, "surrogate"));
  ws.surrogate = train_pairwise(raw, ws.corpus, ws.topics, ws.vocab, cfg.train_epochs,
                                cfg.train_margin, cfg.train_lr, derive_seed(cfg.seed, "train"));
  ws.lm = train_ngram_lm(ws.corpus, ws.vocab);

  if (cfg.llm_backend == "mock") {
    ws.llm = std::make_unique<MockLlmClient>(derive_seed(cfg.seed, "llm"));
  } else if (cfg.llm_backend == "remote") {
    ws.llm = std::make_unique<RemoteLlmClient>(cfg.endpoint);
  } else {
    throw InvalidArgument("unknown llm backend '" + cfg.llm_backend + "'");
  }
  return ws;
}

struct TopicAttack {
  std::string topic_id;
  std::vector<std::string> target_ids;
  std::map<std::string, std::string> doc_adv;  // target id -> adversarial text
  std::vector<KnowAttackResult> know_results;
  std::vector<Trigger> triggers;
};

TopicAttack attack_topic(const ExperimentConfig& cfg, Workspace& ws, const Topic& topic) {
  TopicAttack out;
  out.topic_id = topic.id;
  uint64_t topic_seed = derive_seed(cfg.seed, "topic-" + topic.id);
  out.target_ids = select_target_documents(ws.corpus, topic, cfg.stance, cfg.target_mode,
                                           ws.surrogate, ws.vocab);
  auto query_tokens = tokenize_queries(topic.queries, ws.vocab);

  // Shared per-topic artifacts for the baselines.
  Trigger collision_trigger;
  if (cfg.method == AttackMethod::Collision) {
    TriggerConfig tc = cfg.trigger;
    tc.seed = derive_seed(topic_seed, "collision");
    collision_trigger = collision_baseline(ws.surrogate, query_tokens, tc, ws.vocab);
  }
  std::vector<TokenSeq> anchors;
  if (cfg.method == AttackMethod::Pat) {
    for (const auto& q : topic.queries) {
      RankedList top = retrieve_topk(ws.surrogate, q, ws.tokenized, ws.vocab, 1);
      anchors.push_back(ws.tokenized.doc(top.entries.front().doc_id).tokens);
    }
  }

  for (size_t di = 0; di < out.target_ids.size(); ++di) {
    const Document& doc_tar = ws.corpus.doc(out.target_ids[di]);
    std::string adv_text;
    switch (cfg.method) {
      case AttackMethod::TopicFlipRag:
      case AttackMethod::KnowOnly: {
        KnowAttackConfig kc = cfg.know;
        kc.seed = derive_seed(topic_seed, "know", di);
        KnowAttackResult know = run_know_attack(*ws.llm, ws.surrogate, doc_tar, topic, cfg.stance,
                                                kc, ws.vocab, ws.emb_main);
        adv_text = know.doc_know.text;
        if (cfg.method == AttackMethod::TopicFlipRag) {
          TriggerConfig tc = cfg.trigger;
          tc.seed = derive_seed(topic_seed, "trigger", di);
          Trigger trig = generate_trigger(ws.surrogate, ws.vocab.encode(adv_text), query_tokens,
                                          tc, ws.vocab);
          adv_text += " " + trig.tokens.source_text;
          out.triggers.push_back(std::move(trig));
        }
        out.know_results.push_back(std::move(know));
        break;
      }
      case AttackMethod::TriggerOnly: {
        TriggerConfig tc = cfg.trigger;
        tc.seed = derive_seed(topic_seed, "trigger", di);
        Trigger trig = generate_trigger(ws.surrogate, ws.vocab.encode(doc_tar.text), query_tokens,
                                        tc, ws.vocab);
        adv_text = doc_tar.text + " " + trig.tokens.source_text;
        out.triggers.push_back(std::move(trig));
        break;
      }
      case AttackMethod::PoisonedRag: {
        adv_text =
            poisonedrag_baseline(doc_tar, topic.queries, derive_seed(topic_seed, "prag", di));
        break;
      }
      case AttackMethod::Collision: {
        adv_text = doc_tar.text + " " + collision_trigger.tokens.source_text;
        if (di == 0) out.triggers.push_back(collision_trigger);
        break;
      }
      case AttackMethod::Pat: {
        TriggerConfig tc = cfg.trigger;
        tc.seed = derive_seed(topic_seed, "pat", di);
        Trigger trig =
            pat_baseline(ws.surrogate, ws.vocab.encode(doc_tar.text), query_tokens, anchors,
                         ws.lm, cfg.pat_fluency_weight, tc, ws.vocab);
        adv_text = doc_tar.text + " " + trig.tokens.source_text;
        out.triggers.push_back(std::move(trig));
        break;
      }
    }
    out.doc_adv[out.target_ids[di]] = adv_text;
  }
  return out;
}

/// Everything the evaluation phase needs under a given defense.
struct EvalSide {
  Corpus corpus;
  TokenizedCorpus tokenized;
  std::unique_ptr<MaskedScorer> masked;
  std::unique_ptr<IRetriever> retriever;
};

void build_eval_side(const ExperimentConfig& cfg, const Workspace& ws, Corpus corpus,
                     double ppl_threshold, EvalSide& side) {
  if (cfg.defense.kind == DefenseKind::Ppl) {
    PplFilterResult filtered = ppl_filter(ws.lm, corpus, ws.vocab, ppl_threshold);
    side.corpus = std::move(filtered.retained);
  } else {
    side.corpus = std::move(corpus);
  }
  side.tokenized = TokenizedCorpus::build(side.corpus, ws.vocab);
  const IScorer& eval_scorer = ws.scorer_by_name(cfg.retriever);
  switch (cfg.defense.kind) {
    case DefenseKind::Mask: {
      side.masked = std::make_unique<MaskedScorer>(eval_scorer, cfg.defense.mask_rate,
                                                   cfg.defense.mask_copies,
                                                   derive_seed(cfg.seed, "mask-defense"));
      side.retriever = std::make_unique<ScorerRetriever>(*side.masked, side.tokenized, ws.vocab);
      break;
    }
    case DefenseKind::Rerank: {
      const IScorer& second = ws.scorer_by_name(cfg.defense.rerank_scorer);
      side.retriever = std::make_unique<RerankRetriever>(
          eval_scorer, second, side.tokenized, ws.vocab,
          static_cast<size_t>(cfg.defense.rerank_pool));
      break;
    }
    default:
      side.retriever = std::make_unique<ScorerRetriever>(eval_scorer, side.tokenized, ws.vocab);
  }
}

MetricsReport make_report(const ExperimentConfig& cfg, const std::string& topic_id,
                          const RankingMetrics& rm, const StanceMetrics& sm) {
  MetricsReport report;
  report.topic_id = topic_id;
  report.method = to_string(cfg.method);
  report.stance = to_string(cfg.stance);
  report.defense = to_string(cfg.defense.kind);
  report.ranking = rm;
  report.stance_shift = sm;
  report.config_hash = cfg.config_hash();
  report.seed = cfg.seed;
  report.validate();
  return report;
}

struct TopicWeights {
  size_t pairs = 0;
  size_t queries = 0;
};

MetricsReport aggregate_reports(const ExperimentConfig& cfg,
                                const std::vector<MetricsReport>& reports,
                                const std::vector<TopicWeights>& weights) {
  double pairs_total = 0.0, queries_total = 0.0;
  RankingMetrics rm;
  StanceMetrics sm;
  double top50 = 0.0, top500 = 0.0;
  bool topn_applicable = true;
  for (size_t i = 0; i < reports.size(); ++i) {
    double p = static_cast<double>(weights[i].pairs);
    double q = static_cast<double>(weights[i].queries);
    pairs_total += p;
    queries_total += q;
    rm.rasr_rank += reports[i].ranking.rasr_rank * p;
    rm.brank += reports[i].ranking.brank * p;
    rm.rasr_topk += reports[i].ranking.rasr_topk * q;
    rm.topk_v += reports[i].ranking.topk_v * q;
    if (reports[i].ranking.top50_pct && reports[i].ranking.top500_pct) {
      top50 += *reports[i].ranking.top50_pct * p;
      top500 += *reports[i].ranking.top500_pct * p;
    } else {
      topn_applicable = false;
    }
    sm.asv += reports[i].stance_shift.asv * q;
    sm.asv_clean += reports[i].stance_shift.asv_clean * q;
  }
  rm.rasr_rank /= pairs_total;
  rm.brank /= pairs_total;
  rm.rasr_topk /= queries_total;
  rm.topk_v /= queries_total;
  if (topn_applicable) {
    rm.top50_pct = top50 / pairs_total;
    rm.top500_pct = top500 / pairs_total;
  }
  sm.asv /= queries_total;
  sm.asv_clean /= queries_total;
  sm.delta_asv = sm.asv - sm.asv_clean;
  return make_report(cfg, "ALL", rm, sm);
}

fs::path allocate_run_dir(const ExperimentConfig& cfg) {
  fs::path root(cfg.out_dir);
  fs::create_directories(root);
  std::string base = cfg.config_hash();
  for (int i = 1;; ++i) {
    fs::path candidate = root / (i == 1 ? base : base + "-" + std::to_string(i));
    if (!fs::exists(candidate)) {
      fs::create_directories(candidate);
      return candidate;
    }
  }
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

json answers_to_json(const std::vector<RagAnswer>& answers) {
  json arr = json::array();
  for (const auto& a : answers) arr.push_back(rag_answer_to_json(a));
  return arr;
}

std::vector<RagAnswer> answers_from_json(const json& arr) {
  std::vector<RagAnswer> out;
  for (const auto& a : arr) out.push_back(rag_answer_from_json(a));
  return out;
}

}  // namespace

std::string serialize_reports(const std::vector<MetricsReport>& per_topic,
                              const MetricsReport& aggregate) {
  json topics = json::array();
  for (const auto& r : per_topic) topics.push_back(r.to_json());
  json j{{"topics", topics}, {"aggregate", aggregate.to_json()}};
  return j.dump(2) + "\n";
}

std::string serialize_reports_csv(const std::vector<MetricsReport>& per_topic,
                                  const MetricsReport& aggregate) {
  std::string csv = MetricsReport::csv_header() + "\n";
  for (const auto& r : per_topic) csv += r.csv_row() + "\n";
  csv += aggregate.csv_row() + "\n";
  return csv;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  Workspace ws = build_workspace(cfg);
  ExperimentResult result;
  result.run_dir = allocate_run_dir(cfg);
  if (cfg.trace_llm) ws.llm->set_trace_path((result.run_dir / "llm_trace.jsonl").string());

  json config_record{{"config", cfg.canonical_json()}, {"hash", cfg.config_hash()}};
  write_text(result.run_dir / "config.json", config_record.dump(2) + "\n");

  // Attack phase: topics are independent; per-topic seed streams keep
  // parallel execution byte-identical to sequential.
  std::vector<TopicAttack> attacks(ws.topics.size());
  if (cfg.jobs > 1) {
    std::vector<std::future<TopicAttack>> futures;
    futures.reserve(ws.topics.size());
    for (const auto& topic : ws.topics) {
      futures.push_back(std::async(std::launch::async,
                                   [&cfg, &ws, &topic] { return attack_topic(cfg, ws, topic); }));
    }
    for (size_t i = 0; i < futures.size(); ++i) attacks[i] = futures[i].get();
  } else {
    for (size_t i = 0; i < ws.topics.size(); ++i)
      attacks[i] = attack_topic(cfg, ws, ws.topics[i]);
  }

  // Poison once across all topics.
  Corpus poisoned;
  if (!cfg.inject_instead_of_replace) {
    std::map<std::string, std::string> replacements;
    for (const auto& a : attacks)
      for (const auto& [id, text] : a.doc_adv) replacements[id] = text;
    poisoned = apply_poisoning(ws.corpus, replacements, PoisonMode::Replace);
  } else {
    std::map<std::string, Document> injected;
    for (const auto& a : attacks) {
      for (const auto& [id, text] : a.doc_adv) {
        Document d = ws.corpus.doc(id);
        d.id = id + "-adv";
        d.text = text;
        injected.emplace(d.id, std::move(d));
      }
    }
    poisoned = apply_poisoning(ws.corpus, injected, PoisonMode::Inject);
  }

  double ppl_threshold = cfg.defense.ppl_threshold;
  if (cfg.defense.kind == DefenseKind::Ppl && ppl_threshold <= 0.0) {
    PplFilterResult clean_dist = ppl_filter(ws.lm, ws.corpus, ws.vocab, 1e300);
    auto [mean, stddev] = clean_dist.distribution.at(to_string(Provenance::Clean));
    ppl_threshold = mean + 2.0 * stddev;
  }
  EvalSide before, after;
  build_eval_side(cfg, ws, ws.corpus, ppl_threshold, before);
  build_eval_side(cfg, ws, poisoned, ppl_threshold, after);

  RagConfig rag_cfg = cfg.rag;
  rag_cfg.retriever_name = cfg.retriever;
  rag_cfg.seed = cfg.seed;

  std::vector<MetricsReport> reports;
  std::vector<TopicWeights> weights;
  for (size_t ti = 0; ti < ws.topics.size(); ++ti) {
    const Topic& topic = ws.topics[ti];
    const TopicAttack& attack = attacks[ti];
    TopicOutcome outcome;
    outcome.topic_id = topic.id;
    outcome.know_results = attack.know_results;
    outcome.triggers = attack.triggers;
    outcome.doc_adv = attack.doc_adv;

    // Defense-side query transformation.
    Topic eval_topic = topic;
    if (cfg.defense.kind == DefenseKind::Paraphrase) {
      for (auto& q : eval_topic.queries) {
        Query rewritten = paraphrase_query(*ws.llm, q);
        q.text = rewritten.text;  // keep the original id for alignment
      }
    }

    outcome.snapshot.topic_id = topic.id;
    if (cfg.inject_instead_of_replace) {
      for (const auto& [id, text] : attack.doc_adv)
        outcome.snapshot.target_ids.push_back(id + "-adv");
    } else {
      outcome.snapshot.target_ids = attack.target_ids;
    }
    for (const auto& d : after.corpus.documents())
      outcome.snapshot.stances[d.id] = d.stance;
    for (const auto& d : before.corpus.documents())
      outcome.snapshot.stances.emplace(d.id, d.stance);
    for (const auto& q : eval_topic.queries) {
      QueryRankingPair pair;
      pair.query_id = q.id;
      pair.before = before.retriever->full(q);
      pair.after = after.retriever->full(q);
      outcome.snapshot.queries.push_back(std::move(pair));
    }

    outcome.clean1 = run_topic(rag_cfg, before.corpus, *before.retriever, *ws.llm, eval_topic);
    outcome.clean2 = run_topic(rag_cfg, before.corpus, *before.retriever, *ws.llm, eval_topic);
    outcome.attacked = run_topic(rag_cfg, after.corpus, *after.retriever, *ws.llm, eval_topic);

    RankingMetrics rm = compute_ranking_metrics(outcome.snapshot,
                                                static_cast<size_t>(cfg.rag.k), cfg.stance);
    StanceMetrics sm = compute_stance_metrics(outcome.attacked, outcome.clean1, outcome.clean2);
    outcome.report = make_report(cfg, topic.id, rm, sm);
    reports.push_back(outcome.report);
    weights.push_back({outcome.snapshot.target_ids.size() * outcome.snapshot.queries.size(),
                       outcome.snapshot.queries.size()});

    // Persist per-topic artifacts.
    write_text(result.run_dir / ("snapshot-" + topic.id + ".json"),
               outcome.snapshot.to_json().dump() + "\n");
    json answers{{"clean1", answers_to_json(outcome.clean1)},
                 {"clean2", answers_to_json(outcome.clean2)},
                 {"attacked", answers_to_json(outcome.attacked)}};
    write_text(result.run_dir / ("answers-" + topic.id + ".json"), answers.dump() + "\n");
    {
      std::ofstream audit(result.run_dir / ("know-audit-" + topic.id + ".jsonl"));
      for (size_t di = 0; di < outcome.know_results.size(); ++di) {
        const auto& kr = outcome.know_results[di];
        for (const auto& rec : kr.audit) {
          json r{{"doc_id", kr.doc_know.id},
                 {"iteration", rec.iteration},
                 {"sample", rec.sample},
                 {"t", rec.t_used},
                 {"edit_ratio", rec.edit_ratio_value},
                 {"semantic_distance", rec.semantic_distance_value},
                 {"polarity_ok", rec.polarity_ok},
                 {"passed", rec.passed},
                 {"avg_relevance", rec.avg_relevance},
                 {"text", rec.text}};
          audit << r.dump() << '\n';
        }
      }
    }
    result.topics.push_back(std::move(outcome));
  }

  {
    std::ofstream triggers(result.run_dir / "triggers.jsonl");
    for (size_t ti = 0; ti < ws.topics.size(); ++ti) {
      for (size_t di = 0; di < attacks[ti].triggers.size(); ++di) {
        const Trigger& t = attacks[ti].triggers[di];
        json tokens = json::array();
        for (int32_t id : t.tokens.ids) tokens.push_back(ws.vocab.token_of(id));
        json j{{"topic_id", ws.topics[ti].id},
               {"doc_id", di < attacks[ti].target_ids.size() ? attacks[ti].target_ids[di] : ""},
               {"tokens", tokens},
               {"achieved_avg_relevance", t.achieved_avg_relevance},
               {"config_hash", cfg.config_hash()}};
        triggers << j.dump() << '\n';
      }
    }
    std::ofstream poisonedf(result.run_dir / "poisoned.jsonl");
    for (const auto& a : attacks) {
      for (const auto& [id, text] : a.doc_adv) {
        json j{{"doc_id", id},
               {"text", text},
               {"mode", cfg.inject_instead_of_replace ? "inject" : "replace"}};
        poisonedf << j.dump() << '\n';
      }
    }
  }

  result.aggregate = aggregate_reports(cfg, reports, weights);
  write_text(result.run_dir / "report.json", serialize_reports(reports, result.aggregate));
  write_text(result.run_dir / "report.csv", serialize_reports_csv(reports, result.aggregate));
  return result;
}

MetricsReport run_defended_pipeline(const ExperimentConfig& cfg, const DefenseConfig& defense) {
  ExperimentConfig defended = cfg;
  defended.defense = defense;
  return run_experiment(defended).aggregate;
}

std::vector<MetricsReport> recompute_reports(const fs::path& run_dir) {
  std::ifstream cfg_in(run_dir / "config.json");
  if (!cfg_in) throw ParseError("cannot open " + (run_dir / "config.json").string());
  json config_record = json::parse(cfg_in);
  ExperimentConfig cfg = experiment_config_from_json(config_record.at("config"));

  std::vector<fs::path> snapshot_files;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    auto name = entry.path().filename().string();
    if (name.rfind("snapshot-", 0) == 0) snapshot_files.push_back(entry.path());
  }
  std::sort(snapshot_files.begin(), snapshot_files.end());

  std::vector<MetricsReport> reports;
  std::vector<TopicWeights> weights;
  for (const auto& sf : snapshot_files) {
    std::ifstream in(sf);
    RankingSnapshot snap = RankingSnapshot::from_json(json::parse(in));
    fs::path af = run_dir / ("answers-" + snap.topic_id + ".json");
    std::ifstream ain(af);
    if (!ain) throw ParseError("cannot open " + af.string());
    json answers = json::parse(ain);
    auto clean1 = answers_from_json(answers.at("clean1"));
    auto clean2 = answers_from_json(answers.at("clean2"));
    auto attacked = answers_from_json(answers.at("attacked"));
    RankingMetrics rm =
        compute_ranking_metrics(snap, static_cast<size_t>(cfg.rag.k), cfg.stance);
    StanceMetrics sm = compute_stance_metrics(attacked, clean1, clean2);
    reports.push_back(make_report(cfg, snap.topic_id, rm, sm));
    weights.push_back({snap.target_ids.size() * snap.queries.size(), snap.queries.size()});
  }
  if (reports.empty()) throw IntegrityError("run directory has no snapshots");
  MetricsReport aggregate = aggregate_reports(cfg, reports, weights);
  reports.push_back(aggregate);
  return reports;
}

std::filesystem::path sweep(const ExperimentConfig& base, const std::string& parameter,
                            const std::vector<double>& values) {
  if (values.empty()) throw InvalidArgument("sweep: empty value list");
  fs::path root(base.out_dir);
  fs::create_directories(root);
  std::string csv = "parameter,value," + MetricsReport::csv_header() + "\n";
  json errors = json::array();
  for (double v : values) {
    ExperimentConfig cfg = base;
    if (parameter == "K") {
      cfg.rag.k = static_cast<int>(v);
    } else if (parameter == "N") {
      cfg.know.iterations = static_cast<int>(v);
    } else if (parameter == "epsilon") {
      cfg.know.epsilon = v;
    } else if (parameter == "lambda") {
      cfg.know.lambda = v;
    } else if (parameter == "mask_rate") {
      cfg.defense.kind = DefenseKind::Mask;
      cfg.defense.mask_rate = v;
    } else {
      throw InvalidArgument("sweep: unknown parameter '" + parameter + "'");
    }
    char vbuf[32];
    std::snprintf(vbuf, sizeof(vbuf), "%g", v);
    try {
      ExperimentResult r = run_experiment(cfg);
      for (const auto& t : r.topics)
        csv += parameter + "," + vbuf + "," + t.report.csv_row() + "\n";
      csv += parameter + "," + vbuf + "," + r.aggregate.csv_row() + "\n";
    } catch (const std::exception& e) {
      errors.push_back({{"parameter", parameter}, {"value", v}, {"error", e.what()}});
    }
  }
  fs::path csv_path = root / ("sweep-" + parameter + "-" + base.config_hash() + ".csv");
  write_text(csv_path, csv);
  if (!errors.empty())
    write_text(root / ("sweep-" + parameter + "-" + base.config_hash() + "-errors.json"),
               errors.dump(2) + "\n");
  return csv_path;
}

std::string collect_reports_csv(const std::vector<fs::path>& roots) {
  std::vector<fs::path> files;
  for (const auto& root : roots) {
    if (!fs::exists(root)) continue;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
      if (entry.path().filename() == "report.csv") files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::string out = "run," + MetricsReport::csv_header() + "\n";
  for (const auto& f : files) {
    std::ifstream in(f);
    std::string line;
    bool first = true;
    std::string run = f.parent_path().filename().string();
    while (std::getline(in, line)) {
      if (first) {
        first = false;
        continue;
      }
      if (!line.empty()) out += run + "," + line + "\n";
    }
  }
  return out;
}

}  // namespace topicflip
