#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "topicflip/experiment.hpp"
#include "topicflip/fixture.hpp"
#include "topicflip/surrogate.hpp"

#include "CLI11.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace topicflip;

namespace {

struct ExperimentFlags {
  std::string config_path;
  std::string corpus, topics, method = "topic-fliprag", stance = "con";
  std::string retriever = "contriever", llm = "mock", out = "runs";
  std::string target_mode = "least5";
  uint64_t seed = 0;
  int jobs = 1;
  bool trace_llm = false;
  bool inject = false;
  bool no_polarity = false;
  int fixed_t = -1;
  double epsilon = -1.0, lambda = -1.0;
  int n_iterations = -1, samples = -1, k_nodes = -1;
  int rag_k = -1;
  int trigger_length = -1, beam = -1, pool_topk = -1, outer_rounds = -1, soft_steps = -1;
  double lr = -1.0;
  int dim = -1, train_epochs = -1;
  std::string embeddings;
};

void add_experiment_flags(CLI::App* cmd, ExperimentFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file; flags override its fields");
  cmd->add_option("--corpus", f.corpus, "corpus JSONL path");
  cmd->add_option("--topics", f.topics, "topics JSONL path");
  cmd->add_option("--method", f.method,
                  "topic-fliprag|know-only|trigger-only|poisonedrag|collision|pat");
  cmd->add_option("--stance", f.stance, "target stance: pro|con");
  cmd->add_option("--retriever", f.retriever, "contriever|dpr|ance");
  cmd->add_option("--target-mode", f.target_mode, "least5|top5");
  cmd->add_option("--llm", f.llm, "mock|remote");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--jobs", f.jobs, "parallel topics");
  cmd->add_option("--out", f.out, "output directory for run artifacts");
  cmd->add_flag("--trace-llm", f.trace_llm, "log request/response transcripts");
  cmd->add_flag("--inject", f.inject, "inject poisoned copies instead of replacing");
  cmd->add_flag("--no-polarity-control", f.no_polarity, "disable the stage-1 polarity gate");
  cmd->add_option("--fixed-t", f.fixed_t, "ablation: freeze the augmentation factor");
  cmd->add_option("--epsilon", f.epsilon, "stage-1 max edit ratio");
  cmd->add_option("--lambda", f.lambda, "stage-1 min semantic similarity");
  cmd->add_option("--iterations", f.n_iterations, "stage-1 iterations N");
  cmd->add_option("--samples", f.samples, "stage-1 samples per iteration I");
  cmd->add_option("--k-nodes", f.k_nodes, "stage-1 key nodes K");
  cmd->add_option("--rag-k", f.rag_k, "retrieved documents K");
  cmd->add_option("--trigger-length", f.trigger_length, "trigger token length");
  cmd->add_option("--beam", f.beam, "beam width");
  cmd->add_option("--pool-topk", f.pool_topk, "gradient candidates per position k'");
  cmd->add_option("--outer-rounds", f.outer_rounds, "soft/discretize alternations");
  cmd->add_option("--soft-steps", f.soft_steps, "max Adam steps per round");
  cmd->add_option("--trigger-lr", f.lr, "Adam learning rate");
  cmd->add_option("--dim", f.dim, "embedding dimension");
  cmd->add_option("--train-epochs", f.train_epochs, "surrogate training epochs");
  cmd->add_option("--embeddings", f.embeddings, "word-vector file instead of a seeded table");
}

ExperimentConfig resolve_config(const CLI::App* cmd, const ExperimentFlags& f) {
  ExperimentConfig cfg;
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in) throw ParseError("cannot open config file: " + f.config_path);
    cfg = experiment_config_from_json(json::parse(in));
  }
  auto set = [&](const char* flag) { return cmd->count(flag) > 0; };
  if (set("--corpus")) cfg.corpus_path = f.corpus;
  if (set("--topics")) cfg.topics_path = f.topics;
  if (set("--method") || f.config_path.empty()) cfg.method = method_from_string(f.method);
  if (set("--stance") || f.config_path.empty()) cfg.stance = stance_from_string(f.stance);
  if (set("--retriever")) cfg.retriever = f.retriever;
  if (set("--target-mode"))
    cfg.target_mode =
        f.target_mode == "top5" ? TargetSelectMode::Top5 : TargetSelectMode::Least5;
  if (set("--llm")) cfg.llm_backend = f.llm;
  if (set("--seed")) cfg.seed = f.seed;
  if (set("--jobs")) cfg.jobs = f.jobs;
  if (set("--out")) cfg.out_dir = f.out;
  if (f.trace_llm) cfg.trace_llm = true;
  if (f.inject) cfg.inject_instead_of_replace = true;
  if (f.no_polarity) cfg.know.polarity_control = false;
  if (set("--fixed-t")) cfg.know.fixed_t = f.fixed_t;
  if (set("--epsilon")) cfg.know.epsilon = f.epsilon;
  if (set("--lambda")) cfg.know.lambda = f.lambda;
  if (set("--iterations")) cfg.know.iterations = f.n_iterations;
  if (set("--samples")) cfg.know.samples = f.samples;
  if (set("--k-nodes")) cfg.know.k_nodes = f.k_nodes;
  if (set("--rag-k")) cfg.rag.k = f.rag_k;
  if (set("--trigger-length")) cfg.trigger.trigger_length = f.trigger_length;
  if (set("--beam")) cfg.trigger.beam_size = f.beam;
  if (set("--pool-topk")) cfg.trigger.pool_topk = f.pool_topk;
  if (set("--outer-rounds")) cfg.trigger.outer_rounds = f.outer_rounds;
  if (set("--soft-steps")) cfg.trigger.max_soft_steps = f.soft_steps;
  if (set("--trigger-lr")) cfg.trigger.lr = f.lr;
  if (set("--dim")) cfg.embedding_dim = f.dim;
  if (set("--train-epochs")) cfg.train_epochs = f.train_epochs;
  if (set("--embeddings")) cfg.embedding_path = f.embeddings;
  if (cfg.corpus_path.empty() || cfg.topics_path.empty())
    throw InvalidArgument("--corpus and --topics are required (or provide them via --config)");
  const char* key = std::getenv("TOPICFLIP_API_KEY_ENV");
  if (key && *key) cfg.endpoint.credential_env = key;
  return cfg;
}

void print_reports(const std::vector<MetricsReport>& per_topic, const MetricsReport& aggregate) {
  std::cout << MetricsReport::csv_header() << "\n";
  for (const auto& r : per_topic) std::cout << r.csv_row() << "\n";
  std::cout << aggregate.csv_row() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topic-level opinion manipulation lab for RAG pipelines"};
  app.require_subcommand(1);

  // gen-fixture
  auto* gen = app.add_subcommand("gen-fixture", "emit a seeded synthetic PROCON-style dataset");
  FixtureConfig fx;
  std::string gen_out = "fixture";
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--topics", fx.topics, "number of topics");
  gen->add_option("--docs-per-stance", fx.docs_per_stance, "PRO and CON docs per topic");
  gen->add_option("--neutral-docs", fx.neutral_docs, "NEUTRAL docs per topic");
  gen->add_option("--distractors", fx.distractor_docs, "off-topic background docs");
  gen->add_option("--queries", fx.queries_per_topic, "queries per topic");
  gen->add_option("--min-sentences", fx.min_doc_sentences, "min sentences per doc");
  gen->add_option("--max-sentences", fx.max_doc_sentences, "max sentences per doc");
  gen->add_option("--seed", fx.seed, "generator seed");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "validate corpus and topics files");
  std::string ing_corpus, ing_topics;
  ingest->add_option("--corpus", ing_corpus, "corpus JSONL path")->required();
  ingest->add_option("--topics", ing_topics, "topics JSONL path")->required();

  // train-ranker
  auto* train = app.add_subcommand("train-ranker", "train the surrogate ranking model");
  std::string tr_corpus, tr_topics, tr_out = "ranker.ckpt", tr_emb;
  int tr_epochs = 8, tr_dim = 24;
  double tr_margin = 0.1, tr_lr = 0.01;
  uint64_t tr_seed = 0;
  train->add_option("--corpus", tr_corpus)->required();
  train->add_option("--topics", tr_topics)->required();
  train->add_option("--out", tr_out, "checkpoint path");
  train->add_option("--epochs", tr_epochs);
  train->add_option("--margin", tr_margin);
  train->add_option("--lr", tr_lr);
  train->add_option("--dim", tr_dim, "embedding dimension");
  train->add_option("--seed", tr_seed);
  train->add_option("--embeddings", tr_emb, "word-vector file");

  // attack / defend / sweep share the experiment flags
  auto* attack = app.add_subcommand("attack", "run one poisoning experiment end to end");
  ExperimentFlags af;
  add_experiment_flags(attack, af);

  auto* defend = app.add_subcommand("defend", "run an experiment with a mitigation stage");
  ExperimentFlags df;
  add_experiment_flags(defend, df);
  std::string defense_kind = "rerank";
  double ppl_threshold = 0.0, mask_rate = 0.3;
  std::string rerank_scorer = "ance";
  int rerank_pool = 50, mask_copies = 3;
  defend->add_option("--defense", defense_kind, "ppl|mask|paraphrase|rerank")->required();
  defend->add_option("--ppl-threshold", ppl_threshold, "log-PPL cutoff; <=0 means mean+2sd");
  defend->add_option("--mask-rate", mask_rate, "token masking probability");
  defend->add_option("--mask-copies", mask_copies, "masked copies to average");
  defend->add_option("--rerank-scorer", rerank_scorer, "second-stage scorer");
  defend->add_option("--rerank-pool", rerank_pool, "first-stage pool size");

  auto* sweep_cmd = app.add_subcommand("sweep", "run an experiment across parameter values");
  ExperimentFlags sf;
  add_experiment_flags(sweep_cmd, sf);
  std::string sweep_param;
  std::vector<double> sweep_values;
  sweep_cmd->add_option("--param", sweep_param, "K|N|epsilon|lambda|mask_rate")->required();
  sweep_cmd->add_option("--values", sweep_values, "parameter values")->required();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "recompute metrics from a run directory");
  std::string eval_run;
  bool eval_check = false;
  eval->add_option("--run", eval_run, "run directory")->required();
  eval->add_flag("--check", eval_check, "verify the recomputation matches report.json exactly");

  // report
  auto* report = app.add_subcommand("report", "merge run reports into one CSV");
  std::vector<std::string> report_roots;
  std::string report_out;
  report->add_option("--runs", report_roots, "run directories or roots")->required();
  report->add_option("--out", report_out, "write CSV here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      Fixture fixture = generate_fixture(fx);
      write_fixture(fixture, gen_out);
      std::cout << "wrote " << fixture.corpus.size() << " docs, " << fixture.topics.size()
                << " topics to " << gen_out << "\n";
    } else if (ingest->parsed()) {
      Corpus corpus = load_corpus(ing_corpus);
      auto topics = load_topics(ing_topics);
      std::map<std::string, std::map<std::string, int>> per_topic;
      for (const auto& d : corpus.documents()) per_topic[d.topic_id][to_string(d.stance)]++;
      std::cout << "corpus: " << corpus.size() << " documents\n";
      std::cout << "topics: " << topics.size() << "\n";
      for (const auto& t : topics) {
        std::cout << "  " << t.id << ": " << t.queries.size() << " queries;";
        for (const auto& [stance, n] : per_topic[t.id]) std::cout << " " << stance << "=" << n;
        std::cout << "\n";
      }
    } else if (train->parsed()) {
      Corpus corpus = load_corpus(tr_corpus);
      auto topics = load_topics(tr_topics);
      std::vector<std::string> texts;
      for (const auto& d : corpus.documents()) texts.push_back(d.text);
      for (const auto& t : topics)
        for (const auto& q : t.queries) texts.push_back(q.text);
      Vocabulary vocab = Vocabulary::from_texts(texts);
      EmbeddingTable emb = tr_emb.empty()
                               ? EmbeddingTable::random_unit(vocab, tr_dim, tr_seed)
                               : EmbeddingTable::load(tr_emb, vocab);
      SurrogateRanker ranker(emb, tr_seed);
      PairwiseTrainStats stats;
      ranker = train_pairwise(ranker, corpus, topics, vocab, tr_epochs, tr_margin, tr_lr,
                              tr_seed, &stats);
      ranker.save(tr_out);
      std::cout << "pairs=" << stats.pairs << " initial_loss=" << stats.initial_loss
                << " final_loss=" << stats.final_loss << "\n";
      std::cout << "checkpoint written to " << tr_out << "\n";
    } else if (attack->parsed()) {
      ExperimentConfig cfg = resolve_config(attack, af);
      ExperimentResult r = run_experiment(cfg);
      std::vector<MetricsReport> per_topic;
      for (const auto& t : r.topics) per_topic.push_back(t.report);
      print_reports(per_topic, r.aggregate);
      std::cout << "run directory: " << r.run_dir.string() << "\n";
    } else if (defend->parsed()) {
      ExperimentConfig cfg = resolve_config(defend, df);
      cfg.defense.kind = defense_from_string(defense_kind);
      cfg.defense.ppl_threshold = ppl_threshold;
      cfg.defense.mask_rate = mask_rate;
      cfg.defense.mask_copies = mask_copies;
      cfg.defense.rerank_scorer = rerank_scorer;
      cfg.defense.rerank_pool = rerank_pool;
      ExperimentResult r = run_experiment(cfg);
      std::vector<MetricsReport> per_topic;
      for (const auto& t : r.topics) per_topic.push_back(t.report);
      print_reports(per_topic, r.aggregate);
      std::cout << "run directory: " << r.run_dir.string() << "\n";
    } else if (sweep_cmd->parsed()) {
      ExperimentConfig cfg = resolve_config(sweep_cmd, sf);
      fs::path csv = sweep(cfg, sweep_param, sweep_values);
      std::cout << "sweep CSV: " << csv.string() << "\n";
    } else if (eval->parsed()) {
      auto reports = recompute_reports(eval_run);
      MetricsReport aggregate = reports.back();
      reports.pop_back();
      print_reports(reports, aggregate);
      if (eval_check) {
        std::ifstream in(fs::path(eval_run) / "report.json");
        std::string stored((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
        std::string recomputed = serialize_reports(reports, aggregate);
        if (stored != recomputed) {
          std::cerr << "MISMATCH: recomputed report differs from report.json\n";
          return 1;
        }
        std::cout << "report.json reproduced byte-for-byte\n";
      }
    } else if (report->parsed()) {
      std::vector<fs::path> roots(report_roots.begin(), report_roots.end());
      std::string csv = collect_reports_csv(roots);
      if (report_out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream out(report_out);
        out << csv;
        std::cout << "wrote " << report_out << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
