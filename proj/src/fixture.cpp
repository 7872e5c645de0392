#include "topicflip/fixture.hpp"

#include <array>
#include <filesystem>
#include <random>

#include "topicflip/llm.hpp"
#include "topicflip/rand.hpp"

namespace topicflip {

namespace {

struct TopicSpec {
  const char* title;
  std::array<const char*, 7> keywords;  // first entry is the primary keyword
};

// clang-format off
const std::array<TopicSpec, 24> kTopicSpecs{{
    {"Should people become vegetarian ?",
     {"vegetarianism", "diets", "meat", "protein", "nutrition", "farming", "wellness"}},
    {"Should humans colonize space ?",
     {"colonization", "mars", "rockets", "orbit", "astronauts", "gravity", "spacecraft"}},
    {"Is homeschooling better than classrooms ?",
     {"homeschooling", "classrooms", "curriculum", "exams", "socialization", "tutoring", "grades"}},
    {"Should offices switch to telework ?",
     {"telework", "commuting", "offices", "productivity", "meetings", "schedules", "laptops"}},
    {"Should nations expand nuclear power ?",
     {"reactors", "uranium", "radiation", "grids", "fission", "megawatts", "turbines"}},
    {"Should banks adopt cryptocurrency ?",
     {"cryptocurrency", "bitcoin", "wallets", "exchanges", "tokens", "ledgers", "miners"}},
    {"Should schools require uniforms ?",
     {"uniforms", "clothing", "discipline", "identity", "fashion", "attire", "classmates"}},
    {"Is binge watching harmful ?",
     {"streaming", "episodes", "screens", "viewers", "series", "habits", "leisure"}},
    {"Should gene editing be allowed ?",
     {"crispr", "genomes", "embryos", "mutations", "therapy", "heredity", "laboratories"}},
    {"Should algorithms screen job candidates ?",
     {"algorithms", "hiring", "resumes", "interviews", "recruiters", "screening", "fairness"}},
    {"Should cities ban private cars ?",
     {"transit", "cycling", "emissions", "parking", "congestion", "buses", "motorists"}},
    {"Should voting be mandatory ?",
     {"voting", "ballots", "turnout", "elections", "democracy", "registration", "precincts"}},
    {"Should zoos be closed ?",
     {"zoos", "wildlife", "enclosures", "conservation", "captivity", "habitats", "keepers"}},
    {"Should homework be abolished ?",
     {"homework", "assignments", "workload", "revision", "textbooks", "deadlines", "practice"}},
    {"Should tipping be replaced by wages ?",
     {"tipping", "wages", "servers", "restaurants", "gratuity", "paychecks", "menus"}},
    {"Should plastics be banned ?",
     {"plastics", "packaging", "landfills", "pollution", "bottles", "microplastics", "wrappers"}},
    {"Should esports count as sports ?",
     {"esports", "tournaments", "gamers", "leagues", "stadiums", "reflexes", "spectators"}},
    {"Should drones deliver packages ?",
     {"drones", "deliveries", "couriers", "airspace", "parcels", "logistics", "rooftops"}},
    {"Should fast fashion be regulated ?",
     {"garments", "textiles", "factories", "branding", "seasons", "thrifting", "looms"}},
    {"Should curfews apply to teenagers ?",
     {"curfews", "teenagers", "evenings", "guardians", "patrols", "ordinances", "nightlife"}},
    {"Should museums return artifacts ?",
     {"museums", "artifacts", "repatriation", "curators", "galleries", "exhibits", "antiquities"}},
    {"Should lotteries fund schools ?",
     {"lotteries", "jackpots", "raffles", "revenue", "funding", "prizes", "odds"}},
    {"Should space tourism be taxed ?",
     {"spaceflight", "passengers", "launches", "capsules", "tourism", "luxury", "altitude"}},
    {"Should tap water replace bottled water ?",
     {"faucets", "bottling", "aquifers", "filtration", "reservoirs", "hydration", "pipelines"}},
}};

const std::array<const char*, 7> kProSentences{
    "advocates note that {kw} offers benefits .",
    "advocates note that {kw} and {kw2} offers benefits .",
    "advocates note that {kw} and {kw2} and {kw3} offers benefits .",
    "many reviews call {kw} helpful and positive .",
    "supporters see promising gains when {kw} guides {kw2} .",
    "the encouraging record of {kw} shows advantages .",
    "experts praise {kw} as beneficial .",
};

const std::array<const char*, 7> kConSentences{
    "critics argue that {kw} raises concerns .",
    "critics argue that {kw} and {kw2} raises concerns .",
    "critics argue that {kw} and {kw2} and {kw3} raises concerns .",
    "studies warn that {kw} remains risky .",
    "observers call {kw} harmful and negative .",
    "the troubling record of {kw} shows drawbacks .",
    "skeptics oppose {kw} citing dangers .",
};

const std::array<const char*, 3> kNeutralSentences{
    "reports describe {kw} and {kw2} in plain detail .",
    "the record on {kw} remains mixed across {kw2} .",
    "surveys track how {kw} relates to {kw2} .",
};

const std::array<const char*, 5> kFillerSentences{
    "the {bg} of {bg2} often shapes {bg3} over time .",
    "a recent {bg} covered {bg2} and {bg3} at length .",
    "local {bg} groups discuss {bg2} every {bg3} .",
    "records from the {bg} mention {bg2} and {bg3} .",
    "one {bg} review compared {bg2} with {bg3} last year .",
};

const std::array<const char*, 40> kBackgroundWords{
    "report",    "council",   "survey",   "season",   "neighborhood", "journal",  "committee",
    "budget",    "archive",   "festival", "workshop", "podcast",      "lecture",  "library",
    "market",    "weather",   "harvest",  "district", "newsletter",   "registry", "almanac",
    "bulletin",  "forum",     "panel",    "charter",  "ledger",       "roster",   "gazette",
    "handbook",  "symposium", "digest",   "briefing", "audit",        "census",   "catalog",
    "notice",    "minutes",   "agenda",   "memo",     "chronicle",
};

const std::array<const char*, 6> kQueryTemplates{
    "is {kw} {adj} for {kw2} ?",
    "should {group} adopt {kw} ?",
    "does {kw} affect {kw2} ?",
    "can {kw} replace {kw2} ?",
    "why is {kw} debated among {group} ?",
    "what are the effects of {kw} on {kw2} ?",
};

const std::array<const char*, 5> kQueryAdjectives{"good", "important", "practical", "wise",
                                                  "sound"};
const std::array<const char*, 5> kQueryGroups{"schools", "cities", "families", "companies",
                                              "workers"};

std::string fill(std::string text, const std::string& slot_name, const std::string& value) {
  std::string pattern = "{" + slot_name + "}";
  size_t pos;
  while ((pos = text.find(pattern)) != std::string::npos) {
    text.replace(pos, pattern.size(), value);
  }
  return text;
}

class SentenceBuilder {
 public:
  SentenceBuilder(const TopicSpec& spec, std::mt19937_64& rng) : spec_(spec), rng_(&rng) {}

  std::string keyword() {
    // The primary keyword dominates so the topic has a clear anchor term.
    std::uniform_int_distribution<int> coin(0, 9);
    if (coin(*rng_) < 4) return spec_.keywords[0];
    std::uniform_int_distribution<size_t> pick(0, spec_.keywords.size() - 1);
    return spec_.keywords[pick(*rng_)];
  }

  /// Keyword slot that often degrades to a background word, keeping the
  /// clean corpus keyword-sparse so edits have room to matter.
  std::string diluted_keyword() {
    std::uniform_int_distribution<int> coin(0, 9);
    if (coin(*rng_) < 5) return background();
    return keyword();
  }

  std::string background() {
    std::uniform_int_distribution<size_t> pick(0, kBackgroundWords.size() - 1);
    return kBackgroundWords[pick(*rng_)];
  }

  template <size_t N>
  std::string stance_sentence(const std::array<const char*, N>& pool, bool dilute,
                              bool weak = false) {
    std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
    auto slot_word = [&] {
      if (weak) {
        std::uniform_int_distribution<int> coin(0, 9);
        return coin(*rng_) < 9 ? background() : keyword();
      }
      return dilute ? diluted_keyword() : keyword();
    };
    std::string s = pool[pick(*rng_)];
    s = fill(s, "kw", slot_word());
    s = fill(s, "kw2", slot_word());
    s = fill(s, "kw3", slot_word());
    return s;
  }

  std::string filler_sentence() {
    std::uniform_int_distribution<size_t> pick(0, kFillerSentences.size() - 1);
    std::string s = kFillerSentences[pick(*rng_)];
    s = fill(s, "bg", background());
    s = fill(s, "bg2", background());
    s = fill(s, "bg3", background());
    return s;
  }

 private:
  const TopicSpec& spec_;
  std::mt19937_64* rng_;
};

std::string build_doc_text(const TopicSpec& spec, StanceLabel stance, const FixtureConfig& cfg,
                           std::mt19937_64& rng) {
  SentenceBuilder b(spec, rng);
  std::uniform_int_distribution<int> nsent(cfg.min_doc_sentences, cfg.max_doc_sentences);
  int total = std::max(3, nsent(rng));
  std::uniform_int_distribution<int> nstance(2, 3);
  int stance_count = stance == StanceLabel::Neutral ? 0 : std::min(nstance(rng), total - 1);
  std::uniform_int_distribution<int> ntopic(1, 2);
  // A slice of each stance pool barely mentions the topic vocabulary; those
  // weakly topical documents are what least-relevant target selection finds.
  std::uniform_int_distribution<int> topicality(0, 9);
  bool weak = topicality(rng) < 6;
  int neutral_topic_count = weak ? 0 : std::min(ntopic(rng), total - stance_count);

  std::vector<std::string> sentences;
  for (int i = 0; i < stance_count; ++i) {
    sentences.push_back(stance == StanceLabel::Pro
                            ? b.stance_sentence(kProSentences, /*dilute=*/true, weak)
                            : b.stance_sentence(kConSentences, /*dilute=*/true, weak));
  }
  for (int i = 0; i < neutral_topic_count; ++i)
    sentences.push_back(b.stance_sentence(kNeutralSentences, /*dilute=*/false, false));
  while (static_cast<int>(sentences.size()) < total) sentences.push_back(b.filler_sentence());
  std::shuffle(sentences.begin(), sentences.end(), rng);

  std::string text;
  for (size_t i = 0; i < sentences.size(); ++i) {
    if (i) text.push_back(' ');
    text += sentences[i];
  }
  return text;
}

std::string two_digits(int n) { return (n < 10 ? "0" : "") + std::to_string(n); }

}  // namespace

int fixture_topic_capacity() { return static_cast<int>(kTopicSpecs.size()); }

Fixture generate_fixture(const FixtureConfig& cfg) {
  if (cfg.topics < 1 || cfg.topics > fixture_topic_capacity())
    throw InvalidArgument("generate_fixture: topics must be in [1, " +
                          std::to_string(fixture_topic_capacity()) + "]");
  if (cfg.docs_per_stance < 5)
    throw InvalidArgument("generate_fixture: need at least 5 docs per stance for target selection");
  if (cfg.queries_per_topic < 1) throw InvalidArgument("generate_fixture: need >= 1 query");

  Fixture fx;
  for (int ti = 0; ti < cfg.topics; ++ti) {
    const TopicSpec& spec = kTopicSpecs[static_cast<size_t>(ti)];
    std::string slug = spec.keywords[0];
    auto rng = rng_stream(cfg.seed, "fixture-topic", static_cast<uint64_t>(ti));

    Topic topic;
    topic.id = slug;
    topic.title = spec.title;
    topic.target_stance = StanceLabel::Con;
    std::uniform_int_distribution<size_t> start_pick(0, spec.keywords.size() - 1);
    size_t start = start_pick(rng);
    for (int qi = 0; qi < cfg.queries_per_topic; ++qi) {
      // Cycling the slots guarantees every keyword shows up across the set.
      std::string text = kQueryTemplates[static_cast<size_t>(qi) % kQueryTemplates.size()];
      text = fill(text, "kw", spec.keywords[(start + static_cast<size_t>(qi)) % 7]);
      text = fill(text, "kw2", spec.keywords[(start + static_cast<size_t>(qi) + 2) % 7]);
      text = fill(text, "adj", kQueryAdjectives[static_cast<size_t>(qi) % 5]);
      text = fill(text, "group", kQueryGroups[static_cast<size_t>(qi) % 5]);
      topic.queries.push_back({slug + "-q" + std::to_string(qi), text});
    }
    fx.topics.push_back(std::move(topic));

    auto add_docs = [&](StanceLabel stance, const char* tag, int count) {
      for (int d = 0; d < count; ++d) {
        Document doc;
        doc.id = slug + "-" + tag + "-" + two_digits(d);
        doc.topic_id = slug;
        doc.stance = stance;
        doc.text = build_doc_text(spec, stance, cfg, rng);
        fx.corpus.add(std::move(doc));
      }
    };
    add_docs(StanceLabel::Pro, "pro", cfg.docs_per_stance);
    add_docs(StanceLabel::Con, "con", cfg.docs_per_stance);
    add_docs(StanceLabel::Neutral, "neu", cfg.neutral_docs);
  }

  // Off-topic background documents shared across topics.
  auto rng = rng_stream(cfg.seed, "fixture-distractors");
  for (int d = 0; d < cfg.distractor_docs; ++d) {
    SentenceBuilder b(kTopicSpecs[0], rng);
    std::uniform_int_distribution<int> nsent(cfg.min_doc_sentences, cfg.max_doc_sentences);
    int total = std::max(3, nsent(rng));
    std::string text;
    for (int i = 0; i < total; ++i) {
      if (i) text.push_back(' ');
      text += b.filler_sentence();
    }
    Document doc;
    doc.id = "bg-" + two_digits(d);
    doc.topic_id = "background";
    doc.stance = StanceLabel::Neutral;
    doc.text = std::move(text);
    fx.corpus.add(std::move(doc));
  }
  return fx;
}

void write_fixture(const Fixture& fixture, const std::string& dir) {
  std::filesystem::create_directories(dir);
  save_corpus(fixture.corpus, (std::filesystem::path(dir) / "corpus.jsonl").string());
  save_topics(fixture.topics, (std::filesystem::path(dir) / "topics.jsonl").string());
}

}  // namespace topicflip
