#include "topicflip/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "topicflip/corpus.hpp"
#include "topicflip/rand.hpp"

namespace topicflip {

namespace {

bool is_word_byte(unsigned char c) {
  // Any non-ASCII byte stays inside the word so UTF-8 sequences survive.
  return std::isalnum(c) || c >= 0x80 || c == '\'';
}

}  // namespace

std::vector<std::string> word_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  for (unsigned char c : text) {
    if (is_word_byte(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      if (!current.empty()) {
        out.push_back(std::move(current));
        current.clear();
      }
      if (!std::isspace(c)) {
        out.push_back(std::string(1, static_cast<char>(c)));
      }
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

Vocabulary::Vocabulary() {
  tokens_ = {"<mask>", "<unk>", "<pad>"};
  for (int32_t i = 0; i < kNumSpecial; ++i) index_[tokens_[i]] = i;
}

Vocabulary Vocabulary::from_words(std::vector<std::string> words) {
  Vocabulary v;
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  for (auto& w : words) {
    if (w.empty() || v.index_.count(w)) continue;
    v.index_[w] = static_cast<int32_t>(v.tokens_.size());
    v.tokens_.push_back(w);
  }
  return v;
}

Vocabulary Vocabulary::from_texts(const std::vector<std::string>& texts) {
  std::vector<std::string> words;
  for (const auto& t : texts) {
    auto toks = word_tokens(t);
    words.insert(words.end(), toks.begin(), toks.end());
  }
  return from_words(std::move(words));
}

int32_t Vocabulary::id_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const { return index_.count(token) > 0; }

const std::string& Vocabulary::token_of(int32_t id) const {
  if (id < 0 || static_cast<size_t>(id) >= tokens_.size())
    throw InvalidArgument("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<size_t>(id)];
}

TokenSeq Vocabulary::encode(const std::string& text) const {
  TokenSeq seq;
  seq.source_text = text;
  for (const auto& w : word_tokens(text)) seq.ids.push_back(id_of(w));
  return seq;
}

std::string Vocabulary::decode(std::span<const int32_t> ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += token_of(ids[i]);
  }
  return out;
}

EmbeddingTable EmbeddingTable::random_unit(const Vocabulary& vocab, int dim, uint64_t seed) {
  if (dim <= 0) throw InvalidArgument("embedding dimension must be positive");
  EmbeddingTable t;
  t.dim_ = dim;
  t.seed_ = seed;
  t.data_.resize(vocab.size() * static_cast<size_t>(dim));
  std::mt19937_64 rng(derive_seed(seed, "embedding-table"));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (size_t row = 0; row < vocab.size(); ++row) {
    double norm2 = 0.0;
    for (int d = 0; d < dim; ++d) {
      double x = gauss(rng);
      t.data_[row * dim + d] = x;
      norm2 += x * x;
    }
    double inv = 1.0 / std::sqrt(std::max(norm2, 1e-300));
    for (int d = 0; d < dim; ++d) t.data_[row * dim + d] *= inv;
  }
  return t;
}

EmbeddingTable EmbeddingTable::load(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open word-vector file: " + path);
  size_t count = 0;
  int dim = 0;
  std::string header;
  if (!std::getline(in, header)) throw ParseError("empty word-vector file: " + path);
  {
    std::istringstream hs(header);
    if (!(hs >> count >> dim) || dim <= 0)
      throw ParseError("bad word-vector header '" + header + "' in " + path);
  }
  EmbeddingTable t;
  t.dim_ = dim;
  t.data_.assign(vocab.size() * static_cast<size_t>(dim), 0.0);
  std::vector<bool> seen(vocab.size(), false);
  std::string line;
  size_t lineno = 1;
  for (size_t r = 0; r < count && std::getline(in, line); ++r) {
    ++lineno;
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) throw ParseError("empty row at line " + std::to_string(lineno));
    if (!vocab.contains(token)) {
      continue;  // extra tokens outside the vocabulary are skipped
    }
    int32_t id = vocab.id_of(token);
    for (int d = 0; d < dim; ++d) {
      double x;
      if (!(ls >> x))
        throw ParseError("truncated vector for '" + token + "' at line " + std::to_string(lineno));
      if (!std::isfinite(x))
        throw ParseError("non-finite entry for '" + token + "' at line " + std::to_string(lineno));
      t.data_[static_cast<size_t>(id) * dim + d] = x;
    }
    seen[static_cast<size_t>(id)] = true;
  }
  for (size_t id = 0; id < vocab.size(); ++id) {
    if (!seen[id])
      throw IntegrityError("word-vector file misses vocabulary token '" +
                           vocab.token_of(static_cast<int32_t>(id)) + "'");
  }
  return t;
}

void EmbeddingTable::save(const std::string& path, const Vocabulary& vocab) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << vocab.size() << ' ' << dim_ << '\n';
  char buf[64];
  for (size_t id = 0; id < vocab.size(); ++id) {
    out << vocab.token_of(static_cast<int32_t>(id));
    for (int d = 0; d < dim_; ++d) {
      std::snprintf(buf, sizeof(buf), " %.17g", data_[id * dim_ + d]);
      out << buf;
    }
    out << '\n';
  }
}

std::span<const double> EmbeddingTable::vec(int32_t id) const {
  if (id < 0 || static_cast<size_t>(id) >= rows())
    throw InvalidArgument("embedding row " + std::to_string(id) + " out of range");
  return {data_.data() + static_cast<size_t>(id) * dim_, static_cast<size_t>(dim_)};
}

double edit_ratio(const TokenSeq& candidate, const TokenSeq& original) {
  if (original.empty()) throw InvalidArgument("edit_ratio: original sequence is empty");
  const auto& a = candidate.ids;
  const auto& b = original.ids;
  // Word-level Levenshtein, two-row DP.
  std::vector<size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), size_t{0});
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= b.size(); ++j) {
      size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[b.size()]) / static_cast<double>(b.size());
}

namespace {

std::vector<double> mean_embedding(const TokenSeq& seq, const EmbeddingTable& emb) {
  std::vector<double> m(emb.dim(), 0.0);
  for (int32_t id : seq.ids) {
    auto v = emb.vec(id);
    for (int d = 0; d < emb.dim(); ++d) m[d] += v[d];
  }
  for (auto& x : m) x /= static_cast<double>(seq.size());
  return m;
}

}  // namespace

double semantic_distance(const TokenSeq& a, const TokenSeq& b, const EmbeddingTable& emb) {
  if (a.empty() || b.empty()) throw InvalidArgument("semantic_distance: empty sequence");
  auto ma = mean_embedding(a, emb);
  auto mb = mean_embedding(b, emb);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int d = 0; d < emb.dim(); ++d) {
    dot += ma[d] * mb[d];
    na += ma[d] * ma[d];
    nb += mb[d] * mb[d];
  }
  if (na == 0.0 || nb == 0.0) return 1.0;  // degenerate mean: treat as orthogonal
  double cosine = dot / (std::sqrt(na) * std::sqrt(nb));
  cosine = std::clamp(cosine, -1.0, 1.0);
  return 1.0 - cosine;
}

uint64_t NGramLM::ctx_key(std::span<const int32_t> context) {
  uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv1a_u64(context.size(), h);
  for (int32_t id : context) h = fnv1a_u64(static_cast<uint64_t>(static_cast<uint32_t>(id)), h);
  return h;
}

double NGramLM::next_token_prob(std::span<const int32_t> context, int32_t token) const {
  if (context.size() >= kOrder)
    throw InvalidArgument("context longer than order-1");
  size_t n = context.size();
  Key key{ctx_key(context), token};
  uint64_t gram = 0, total = 0;
  if (auto it = gram_counts_[n].find(key); it != gram_counts_[n].end()) gram = it->second;
  if (auto it = ctx_counts_[n].find(key.ctx); it != ctx_counts_[n].end()) total = it->second;
  return (static_cast<double>(gram) + alpha_) /
         (static_cast<double>(total) + alpha_ * static_cast<double>(vocab_size_));
}

double NGramLM::log_perplexity(const TokenSeq& text) const {
  if (text.empty()) throw InvalidArgument("log_perplexity: empty tokenization");
  double nll = 0.0;
  std::vector<int32_t> padded(kOrder - 1, Vocabulary::kPad);
  padded.insert(padded.end(), text.ids.begin(), text.ids.end());
  for (size_t i = kOrder - 1; i < padded.size(); ++i) {
    std::span<const int32_t> ctx(padded.data() + i - (kOrder - 1), kOrder - 1);
    nll -= std::log(next_token_prob(ctx, padded[i]));
  }
  return nll / static_cast<double>(text.size());
}

double NGramLM::log_perplexity(const std::string& text, const Vocabulary& vocab) const {
  return log_perplexity(vocab.encode(text));
}

NGramLM train_ngram_lm(const std::vector<TokenSeq>& docs, size_t vocab_size, double smoothing) {
  if (docs.empty()) throw InvalidArgument("train_ngram_lm: empty corpus");
  if (smoothing <= 0.0) throw InvalidArgument("train_ngram_lm: smoothing must be positive");
  NGramLM lm;
  lm.alpha_ = smoothing;
  lm.vocab_size_ = vocab_size;
  lm.gram_counts_.resize(NGramLM::kOrder);
  lm.ctx_counts_.resize(NGramLM::kOrder);
  bool any = false;
  for (const auto& doc : docs) {
    const auto& ids = doc.ids;
    if (!ids.empty()) any = true;
    for (size_t i = 0; i < ids.size(); ++i) {
      for (size_t n = 0; n < NGramLM::kOrder && n <= i; ++n) {
        std::span<const int32_t> ctx(ids.data() + i - n, n);
        NGramLM::Key key{NGramLM::ctx_key(ctx), ids[i]};
        lm.gram_counts_[n][key]++;
        lm.ctx_counts_[n][key.ctx]++;
      }
    }
  }
  if (!any) throw InvalidArgument("train_ngram_lm: corpus has no tokens");
  return lm;
}

NGramLM train_ngram_lm(const Corpus& corpus, const Vocabulary& vocab, double smoothing) {
  if (corpus.empty()) throw InvalidArgument("train_ngram_lm: empty corpus");
  std::vector<TokenSeq> docs;
  docs.reserve(corpus.size());
  for (const auto& d : corpus.documents()) docs.push_back(vocab.encode(d.text));
  return train_ngram_lm(docs, vocab.size(), smoothing);
}

}  // namespace topicflip
