#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "topicflip/errors.hpp"

namespace topicflip {

class Corpus;

/// Token-id sequence plus the text it came from.
struct TokenSeq {
  std::vector<int32_t> ids;
  std::string source_text;

  size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
};

/// Splits text into lowercase word tokens. Letters and digits form words
/// (any non-ASCII byte is treated as a letter so UTF-8 sequences stay
/// intact); each punctuation character is its own token.
std::vector<std::string> word_tokens(const std::string& text);

/// Token <-> id bijection with reserved MASK/UNK/PAD ids.
class Vocabulary {
 public:
  static constexpr int32_t kMask = 0;
  static constexpr int32_t kUnk = 1;
  static constexpr int32_t kPad = 2;
  static constexpr int32_t kNumSpecial = 3;

  Vocabulary();
  /// Builds a vocabulary from word lists; tokens are deduplicated and
  /// assigned ids in sorted order after the special ids.
  static Vocabulary from_words(std::vector<std::string> words);
  /// Collects every word token appearing in the given texts.
  static Vocabulary from_texts(const std::vector<std::string>& texts);

  size_t size() const { return tokens_.size(); }
  int32_t id_of(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const;
  const std::string& token_of(int32_t id) const;
  static bool is_special(int32_t id) { return id >= 0 && id < kNumSpecial; }

  /// tokenize: lowercase word segmentation, OOV words map to UNK.
  TokenSeq encode(const std::string& text) const;
  /// detokenize: space-joined tokens. encode(decode(ids)).ids == ids for
  /// any UNK-free sequence.
  std::string decode(std::span<const int32_t> ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int32_t> index_;
};

/// Dense vector per vocabulary token. Either loaded from a word-vector
/// text file or generated as a seeded unit-normalized random table.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  static EmbeddingTable random_unit(const Vocabulary& vocab, int dim, uint64_t seed);
  /// Word-vector file: first line "<vocab_size> <dimension>", then one
  /// token and D floats per line. Every vocabulary token must be covered.
  static EmbeddingTable load(const std::string& path, const Vocabulary& vocab);
  void save(const std::string& path, const Vocabulary& vocab) const;

  int dim() const { return dim_; }
  size_t rows() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  uint64_t seed() const { return seed_; }
  std::span<const double> vec(int32_t id) const;

 private:
  int dim_ = 0;
  uint64_t seed_ = 0;
  std::vector<double> data_;
};

/// Word-level Levenshtein distance divided by |original|.
double edit_ratio(const TokenSeq& candidate, const TokenSeq& original);

/// 1 - cosine(mean embedding(a), mean embedding(b)); in [0, 2].
double semantic_distance(const TokenSeq& a, const TokenSeq& b, const EmbeddingTable& emb);

/// Additive-smoothed n-gram tables up to trigrams. Contexts unseen in
/// training yield the uniform distribution, which is what makes random
/// token strings stand out under the perplexity defense.
class NGramLM {
 public:
  static constexpr int kOrder = 3;

  /// P(token | context), context of length 0..2 (most recent last).
  double next_token_prob(std::span<const int32_t> context, int32_t token) const;
  /// Mean negative natural log-probability per token; the first tokens
  /// are scored against PAD-padded contexts.
  double log_perplexity(const TokenSeq& text) const;
  double log_perplexity(const std::string& text, const Vocabulary& vocab) const;

  double smoothing() const { return alpha_; }
  size_t vocab_size() const { return vocab_size_; }

  friend NGramLM train_ngram_lm(const std::vector<TokenSeq>& docs, size_t vocab_size,
                                double smoothing);

 private:
  struct Key {
    uint64_t ctx;
    int32_t token;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    size_t operator()(const Key& k) const {
      return std::hash<uint64_t>()(k.ctx * 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(k.token));
    }
  };
  static uint64_t ctx_key(std::span<const int32_t> context);

  double alpha_ = 1.0;
  size_t vocab_size_ = 0;
  // gram_counts_[n]: count of (context of length n, token); ctx_counts_[n]:
  // total continuations of each length-n context.
  std::vector<std::unordered_map<Key, uint64_t, KeyHash>> gram_counts_;
  std::vector<std::unordered_map<uint64_t, uint64_t>> ctx_counts_;
};

NGramLM train_ngram_lm(const std::vector<TokenSeq>& docs, size_t vocab_size,
                       double smoothing = 1.0);
/// Trains on every document of the corpus.
NGramLM train_ngram_lm(const Corpus& corpus, const Vocabulary& vocab, double smoothing = 1.0);

}  // namespace topicflip
