#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "topicflip/evaluation.hpp"
#include "topicflip/know.hpp"
#include "topicflip/rag.hpp"
#include "topicflip/trigger.hpp"

#include "json.hpp"

namespace topicflip {

enum class AttackMethod { TopicFlipRag, KnowOnly, TriggerOnly, PoisonedRag, Collision, Pat };
enum class DefenseKind { None, Ppl, Mask, Paraphrase, Rerank };

std::string to_string(AttackMethod m);
AttackMethod method_from_string(const std::string& s);
std::string to_string(DefenseKind d);
DefenseKind defense_from_string(const std::string& s);

struct DefenseConfig {
  DefenseKind kind = DefenseKind::None;
  double ppl_threshold = 0.0;  // <= 0 means auto: clean mean + 2 stddev
  double mask_rate = 0.3;
  int mask_copies = 3;
  std::string rerank_scorer = "ance";
  int rerank_pool = 50;
};

struct ExperimentConfig {
  std::string corpus_path;
  std::string topics_path;
  AttackMethod method = AttackMethod::TopicFlipRag;
  StanceLabel stance = StanceLabel::Con;
  TargetSelectMode target_mode = TargetSelectMode::Least5;
  std::string retriever = "contriever";  // contriever | dpr | ance
  DefenseConfig defense;
  KnowAttackConfig know;
  TriggerConfig trigger;
  RagConfig rag;
  int embedding_dim = 128;
  std::string embedding_path;  // optional word-vector file
  int train_epochs = 8;
  double train_margin = 0.1;
  double train_lr = 0.01;
  double pat_fluency_weight = 0.1;
  bool inject_instead_of_replace = false;
  std::string llm_backend = "mock";  // mock | remote
  LlmEndpointConfig endpoint;
  bool trace_llm = false;
  uint64_t seed = 0;
  int jobs = 1;
  std::string out_dir = "runs";

  nlohmann::json canonical_json() const;
  std::string config_hash() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

struct TopicOutcome {
  std::string topic_id;
  RankingSnapshot snapshot;
  std::vector<RagAnswer> clean1, clean2, attacked;
  MetricsReport report;
  std::vector<KnowAttackResult> know_results;
  std::vector<Trigger> triggers;                // aligned with target ids
  std::map<std::string, std::string> doc_adv;   // target id -> adversarial text
};

struct ExperimentResult {
  std::filesystem::path run_dir;
  std::vector<TopicOutcome> topics;
  MetricsReport aggregate;  // topic_id "ALL": pair/query-pooled across topics
};

/// Full pipeline for one config: attack every topic, poison, snapshot
/// rankings, run the RAG twice clean and once attacked, compute metrics,
/// and persist every artifact under a content-addressed run directory.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Same pipeline with the given defense stage inserted; returns the
/// aggregate report of the defended run.
MetricsReport run_defended_pipeline(const ExperimentConfig& cfg, const DefenseConfig& defense);

/// Recomputes the per-topic and aggregate reports from the artifacts
/// persisted in a run directory; byte-identical to the original report.
std::vector<MetricsReport> recompute_reports(const std::filesystem::path& run_dir);

/// One run per value with a shared seed; per-value failures are recorded
/// and the sweep continues. Returns the combined CSV path.
std::filesystem::path sweep(const ExperimentConfig& base, const std::string& parameter,
                            const std::vector<double>& values);

/// Aggregates report.json files found under the given roots into one CSV.
std::string collect_reports_csv(const std::vector<std::filesystem::path>& roots);

/// Canonical serializations used for the persisted report artifacts.
std::string serialize_reports(const std::vector<MetricsReport>& per_topic,
                              const MetricsReport& aggregate);
std::string serialize_reports_csv(const std::vector<MetricsReport>& per_topic,
                                  const MetricsReport& aggregate);

}  // namespace topicflip
