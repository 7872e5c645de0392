#include "topicflip/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "topicflip/rand.hpp"

namespace topicflip {

void adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grad,
               double lr) {
  if (params.size() != grad.size())
    throw InvalidArgument("adam_step: parameter/gradient shape mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size())
    throw InvalidArgument("adam_step: state shape mismatch");
  state.step += 1;
  double b1t = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(state.step));
  double b2t = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = AdamState::kBeta1 * state.m[i] + (1.0 - AdamState::kBeta1) * grad[i];
    state.v[i] = AdamState::kBeta2 * state.v[i] + (1.0 - AdamState::kBeta2) * grad[i] * grad[i];
    double mhat = state.m[i] / b1t;
    double vhat = state.v[i] / b2t;
    params[i] += lr * mhat / (std::sqrt(vhat) + AdamState::kEps);
  }
}

SurrogateRanker::SurrogateRanker(const EmbeddingTable& emb, uint64_t seed, double noise_sigma)
    : emb_(&emb), dim_(emb.dim()) {
  proj_.assign(static_cast<size_t>(dim_) * dim_, 0.0);
  std::mt19937_64 rng(derive_seed(seed, "surrogate-projection"));
  std::normal_distribution<double> gauss(0.0, noise_sigma);
  for (int i = 0; i < dim_; ++i) {
    for (int j = 0; j < dim_; ++j) {
      proj_[static_cast<size_t>(i) * dim_ + j] = (i == j ? 1.0 : 0.0) + gauss(rng);
    }
  }
}

std::vector<double> SurrogateRanker::project(std::span<const double> v) const {
  std::vector<double> out(dim_, 0.0);
  for (int i = 0; i < dim_; ++i) {
    double acc = 0.0;
    const double* row = proj_.data() + static_cast<size_t>(i) * dim_;
    for (int j = 0; j < dim_; ++j) acc += row[j] * v[j];
    out[i] = acc;
  }
  return out;
}

namespace {

// Projected vectors for a token sequence, flattened row-major.
std::vector<double> project_tokens(const SurrogateRanker& r, const EmbeddingTable& emb,
                                   const std::vector<int32_t>& ids) {
  std::vector<double> out;
  out.reserve(ids.size() * static_cast<size_t>(r.dim()));
  for (int32_t id : ids) {
    auto p = r.project(emb.vec(id));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

}  // namespace

double SurrogateRanker::score(const TokenSeq& query, const TokenSeq& doc) const {
  if (query.empty() || doc.empty()) throw InvalidArgument("SurrogateRanker: empty input");
  return score_soft(query, doc, SoftTrigger{0, dim_, {}});
}

double SurrogateRanker::score_soft(const TokenSeq& query, const TokenSeq& doc,
                                   const SoftTrigger& soft) const {
  if (query.empty()) throw InvalidArgument("SurrogateRanker: empty query");
  if (doc.empty() && soft.length == 0)
    throw InvalidArgument("SurrogateRanker: empty document and no soft positions");
  if (soft.length > 0 && soft.dim != dim_)
    throw InvalidArgument("SurrogateRanker: soft trigger dimension mismatch");
  auto qp = project_tokens(*this, *emb_, query.ids);
  auto dp = project_tokens(*this, *emb_, doc.ids);
  std::vector<double> sp;
  sp.reserve(static_cast<size_t>(soft.length) * dim_);
  for (int p = 0; p < soft.length; ++p) {
    auto pr = project(soft.row(p));
    sp.insert(sp.end(), pr.begin(), pr.end());
  }
  double total = 0.0;
  size_t ntok = doc.ids.size() + static_cast<size_t>(soft.length);
  for (size_t i = 0; i < query.ids.size(); ++i) {
    const double* q = qp.data() + i * dim_;
    double best = -std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < ntok; ++j) {
      const double* d = j < doc.ids.size() ? dp.data() + j * dim_
                                           : sp.data() + (j - doc.ids.size()) * dim_;
      double dot = 0.0;
      for (int k = 0; k < dim_; ++k) dot += q[k] * d[k];
      if (dot > best) best = dot;
    }
    total += best;
  }
  return total * scale_ / static_cast<double>(query.ids.size());
}

std::vector<double> SurrogateRanker::grad_soft(const std::vector<TokenSeq>& queries,
                                               const TokenSeq& doc,
                                               const SoftTrigger& soft) const {
  if (queries.empty()) throw InvalidArgument("grad_soft: empty query list");
  if (soft.length > 0 && soft.dim != dim_)
    throw InvalidArgument("grad_soft: soft trigger dimension mismatch");
  std::vector<double> grad(static_cast<size_t>(soft.length) * dim_, 0.0);
  if (soft.length == 0) return grad;

  auto dp = project_tokens(*this, *emb_, doc.ids);
  std::vector<double> sp;
  for (int p = 0; p < soft.length; ++p) {
    auto pr = project(soft.row(p));
    sp.insert(sp.end(), pr.begin(), pr.end());
  }
  size_t ntok = doc.ids.size() + static_cast<size_t>(soft.length);
  for (const auto& query : queries) {
    if (query.empty()) throw InvalidArgument("grad_soft: empty query");
    auto qp = project_tokens(*this, *emb_, query.ids);
    double coeff = scale_ / (static_cast<double>(query.ids.size()) *
                             static_cast<double>(queries.size()));
    for (size_t i = 0; i < query.ids.size(); ++i) {
      const double* q = qp.data() + i * dim_;
      double best = -std::numeric_limits<double>::infinity();
      size_t best_j = 0;
      for (size_t j = 0; j < ntok; ++j) {
        const double* d = j < doc.ids.size() ? dp.data() + j * dim_
                                             : sp.data() + (j - doc.ids.size()) * dim_;
        double dot = 0.0;
        for (int k = 0; k < dim_; ++k) dot += q[k] * d[k];
        if (dot > best) {  // strict: ties keep the lowest position
          best = dot;
          best_j = j;
        }
      }
      if (best_j < doc.ids.size()) continue;  // a real token won the max
      size_t p = best_j - doc.ids.size();
      // d/dx <P q_proj_i, P x> = P^T q_proj_i, with q_proj_i = P e_qi.
      for (int a = 0; a < dim_; ++a) {
        double acc = 0.0;
        for (int b = 0; b < dim_; ++b) acc += proj_[static_cast<size_t>(b) * dim_ + a] * q[b];
        grad[p * dim_ + static_cast<size_t>(a)] += coeff * acc;
      }
    }
  }
  return grad;
}

void SurrogateRanker::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << dim_ << '\n';
  char buf[64];
  for (int i = 0; i < dim_; ++i) {
    for (int j = 0; j < dim_; ++j) {
      std::snprintf(buf, sizeof(buf), j ? " %.17g" : "%.17g",
                    proj_[static_cast<size_t>(i) * dim_ + j]);
      out << buf;
    }
    out << '\n';
  }
  std::snprintf(buf, sizeof(buf), "%.17g", scale_);
  out << buf << '\n';
}

SurrogateRanker SurrogateRanker::load(const std::string& path, const EmbeddingTable& emb) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open checkpoint: " + path);
  SurrogateRanker r;
  r.emb_ = &emb;
  if (!(in >> r.dim_) || r.dim_ <= 0) throw ParseError("bad checkpoint dimension in " + path);
  if (r.dim_ != emb.dim())
    throw IntegrityError("checkpoint dimension " + std::to_string(r.dim_) +
                         " does not match embedding dimension " + std::to_string(emb.dim()));
  r.proj_.resize(static_cast<size_t>(r.dim_) * r.dim_);
  for (auto& x : r.proj_) {
    if (!(in >> x)) throw ParseError("truncated projection matrix in " + path);
  }
  if (!(in >> r.scale_) || !(r.scale_ > 0.0))
    throw ParseError("bad or missing scale in " + path);
  return r;
}

SurrogateRanker train_pairwise(const SurrogateRanker& ranker, const Corpus& corpus,
                               const std::vector<Topic>& topics, const Vocabulary& vocab,
                               int epochs, double margin, double lr, uint64_t seed,
                               PairwiseTrainStats* stats) {
  if (margin <= 0.0) throw InvalidArgument("train_pairwise: margin must be positive");
  struct Pair {
    TokenSeq query;
    TokenSeq pos;
    TokenSeq neg;
  };
  std::vector<Pair> pairs;
  std::mt19937_64 rng(derive_seed(seed, "pairwise-train"));
  for (const auto& topic : topics) {
    std::vector<const Document*> on, off;
    for (const auto& d : corpus.documents()) {
      (d.topic_id == topic.id ? on : off).push_back(&d);
    }
    if (on.empty() || off.empty())
      throw InvalidArgument("train_pairwise: topic '" + topic.id +
                            "' lacks on-topic or off-topic documents");
    for (const auto& q : topic.queries) {
      std::uniform_int_distribution<size_t> pick_on(0, on.size() - 1);
      std::uniform_int_distribution<size_t> pick_off(0, off.size() - 1);
      pairs.push_back({vocab.encode(q.text), vocab.encode(on[pick_on(rng)]->text),
                       vocab.encode(off[pick_off(rng)]->text)});
    }
  }
  if (pairs.empty()) throw InvalidArgument("train_pairwise: no training pairs");

  SurrogateRanker out = ranker;
  auto mean_loss = [&](const SurrogateRanker& r) {
    double total = 0.0;
    for (const auto& p : pairs) {
      double gap = margin - r.score(p.query, p.pos) + r.score(p.query, p.neg);
      total += std::max(0.0, gap);
    }
    return total / static_cast<double>(pairs.size());
  };
  double initial = mean_loss(out);

  const int dim = out.dim_;
  // d score / d P for a fixed argmax assignment:
  //   score = (scale/|q|) sum_i e_qi^T P^T P x_{j*}
  //   dP    = (scale/|q|) sum_i P (x_{j*} e_qi^T + e_qi x_{j*}^T)
  auto accumulate = [&](const SurrogateRanker& r, const TokenSeq& q, const TokenSeq& d,
                        double weight, std::vector<double>& gp) {
    auto qp = project_tokens(r, *r.emb_, q.ids);
    auto dp = project_tokens(r, *r.emb_, d.ids);
    double coeff = weight * r.scale_ / static_cast<double>(q.ids.size());
    for (size_t i = 0; i < q.ids.size(); ++i) {
      const double* qv = qp.data() + i * dim;
      double best = -std::numeric_limits<double>::infinity();
      size_t best_j = 0;
      for (size_t j = 0; j < d.ids.size(); ++j) {
        const double* dv = dp.data() + j * dim;
        double dot = 0.0;
        for (int k = 0; k < dim; ++k) dot += qv[k] * dv[k];
        if (dot > best) {
          best = dot;
          best_j = j;
        }
      }
      auto eq = r.emb_->vec(q.ids[i]);
      auto ex = r.emb_->vec(d.ids[best_j]);
      const double* px = dp.data() + best_j * dim;
      // P x e_q^T contribution uses projected vectors against raw ones.
      for (int a = 0; a < dim; ++a) {
        for (int b = 0; b < dim; ++b) {
          gp[static_cast<size_t>(a) * dim + b] += coeff * (px[a] * eq[b] + qv[a] * ex[b]);
        }
      }
    }
  };

  std::vector<double> gp(static_cast<size_t>(dim) * dim);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (const auto& p : pairs) {
      double gap = margin - out.score(p.query, p.pos) + out.score(p.query, p.neg);
      if (gap <= 0.0) continue;
      std::fill(gp.begin(), gp.end(), 0.0);
      accumulate(out, p.query, p.pos, +1.0, gp);
      accumulate(out, p.query, p.neg, -1.0, gp);
      for (size_t i = 0; i < gp.size(); ++i) out.proj_[i] += lr * gp[i];
    }
  }
  if (stats) {
    stats->initial_loss = initial;
    stats->final_loss = mean_loss(out);
    stats->pairs = pairs.size();
  }
  return out;
}

}  // namespace topicflip
