#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topicflip/corpus.hpp"

namespace topicflip {

/// Seeded synthetic PROCON-style dataset: controversial topics, stance-
/// labeled documents built from sentence templates, and per-topic query
/// sets. Small enough to run the full attack matrix in seconds.
struct FixtureConfig {
  int topics = 3;
  int docs_per_stance = 9;  // PRO and CON each
  int neutral_docs = 4;
  int distractor_docs = 6;  // off-topic noise documents
  int queries_per_topic = 12;
  int min_doc_sentences = 14;
  int max_doc_sentences = 18;
  uint64_t seed = 0;
};

struct Fixture {
  Corpus corpus;
  std::vector<Topic> topics;
};

/// Maximum number of distinct topics the generator can emit.
int fixture_topic_capacity();

Fixture generate_fixture(const FixtureConfig& cfg);

/// Writes corpus.jsonl and topics.jsonl under `dir`.
void write_fixture(const Fixture& fixture, const std::string& dir);

}  // namespace topicflip
