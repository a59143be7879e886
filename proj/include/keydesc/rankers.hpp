#ifndef KEYDESC_RANKERS_HPP
#define KEYDESC_RANKERS_HPP

// Passage rankers: ROUGE-2 oracle, tf-idf, a greedy relevance/redundancy
// sequential ranker, the backend-served index-generation ranker, and
// Recall@k against the oracle. The dense ranker lives in dense.hpp.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "keydesc/backends.hpp"
#include "keydesc/corpus.hpp"
#include "keydesc/errors.hpp"
#include "keydesc/textmetrics.hpp"

namespace keydesc {

/// Ranker query: entity, title, factual key names, then topical keys.
struct Query {
  std::string entity;
  std::string title;
  std::vector<std::string> keys;

  static Query of(const Instance& inst) {
    Query q{inst.entity, inst.title, {}};
    for (const auto& kv : inst.factual_keys) q.keys.push_back(kv.key);
    q.keys.insert(q.keys.end(), inst.topical_keys.begin(), inst.topical_keys.end());
    return q;
  }

  /// "entity title k_1 ... k_m", single-space separated.
  std::string text() const {
    std::string out = entity;
    auto append = [&](const std::string& s) {
      if (s.empty()) return;
      if (!out.empty()) out += ' ';
      out += s;
    };
    append(title);
    for (const auto& k : keys) append(k);
    return out;
  }
};

struct RankedPassages {
  std::vector<std::size_t> order;
  std::vector<double> scores;
  std::size_t k = 0;
  /// Size of the passage pool that was ranked.
  std::size_t num_passages = 0;

  /// Throws PreconditionError when an invariant is violated.
  void validate() const {
    if (order.size() != scores.size()) throw PreconditionError("RankedPassages: order/scores size mismatch");
    if (order.size() != std::min(k, num_passages)) throw PreconditionError("RankedPassages: |order| != min(k, N)");
    std::unordered_set<std::size_t> seen;
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (order[i] >= num_passages) throw PreconditionError("RankedPassages: index out of range");
      if (!seen.insert(order[i]).second) throw PreconditionError("RankedPassages: duplicate index");
      if (i > 0 && scores[i] > scores[i - 1]) throw PreconditionError("RankedPassages: scores increase");
    }
  }
};

/// Sorts by score descending, lower index first on ties, and keeps the top k.
inline RankedPassages top_k(const std::vector<double>& scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  RankedPassages r;
  r.k = k;
  r.num_passages = scores.size();
  idx.resize(std::min(k, scores.size()));
  r.order = idx;
  for (auto i : idx) r.scores.push_back(scores[i]);
  return r;
}

inline RankedPassages rank_rouge2_oracle(const Instance& inst, std::size_t k) {
  const auto ref = tokenize(inst.reference);
  if (ref.empty()) throw PreconditionError("rank_rouge2_oracle: empty reference");
  std::vector<double> scores;
  for (const auto& p : inst.passages) scores.push_back(rouge_n(tokenize(p), ref, 2).recall);
  return top_k(scores, k);
}

/// Oracle order used as supervision for sequential rankers.
inline std::vector<std::size_t> silver_sequence(const Instance& inst, std::size_t k) { return rank_rouge2_oracle(inst, k).order; }

// ---------------------------------------------------------------------------
// tf-idf

/// Per-instance tf-idf statistics: idf = ln((N+1)/(df+1)) + 1 over the
/// instance's own passages.
class TfIdfIndex {
 public:
  explicit TfIdfIndex(const std::vector<std::string>& passages) {
    for (const auto& p : passages) {
      std::map<std::string, double> tf;
      for (const auto& t : tokenize(p)) tf[t] += 1.0;
      for (const auto& [t, c] : tf) ++df_[t];
      tfs_.push_back(std::move(tf));
    }
  }

  std::size_t size() const noexcept { return tfs_.size(); }

  double idf(const std::string& term) const {
    const auto it = df_.find(term);
    const double df = it == df_.end() ? 0.0 : static_cast<double>(it->second);
    return std::log((static_cast<double>(tfs_.size()) + 1.0) / (df + 1.0)) + 1.0;
  }

  /// Sum over distinct query terms of tf(t, p) * idf(t).
  double score(const TokenSeq& query, std::size_t passage) const {
    std::unordered_set<std::string> seen;
    double s = 0.0;
    for (const auto& t : query) {
      if (!seen.insert(t).second) continue;
      const auto& tf = tfs_[passage];
      if (auto it = tf.find(t); it != tf.end()) s += it->second * idf(t);
    }
    return s;
  }

  using SparseVector = std::map<std::string, double>;

  SparseVector vector_of(const TokenSeq& text) const {
    SparseVector v;
    for (const auto& t : text) v[t] += 1.0;
    for (auto& [t, w] : v) w *= idf(t);
    return v;
  }

  SparseVector passage_vector(std::size_t passage) const {
    SparseVector v = tfs_[passage];
    for (auto& [t, w] : v) w *= idf(t);
    return v;
  }

  static double cosine(const SparseVector& a, const SparseVector& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [t, w] : a) {
      na += w * w;
      if (auto it = b.find(t); it != b.end()) dot += w * it->second;
    }
    for (const auto& [t, w] : b) nb += w * w;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
  }

 private:
  std::vector<std::map<std::string, double>> tfs_;
  std::unordered_map<std::string, std::size_t> df_;
};

inline RankedPassages rank_tfidf(const Instance& inst, std::size_t k) {
  if (inst.passages.empty()) throw PreconditionError("rank_tfidf: no passages");
  const TfIdfIndex index(inst.passages);
  const auto query = tokenize(Query::of(inst).text());
  std::vector<double> scores;
  for (std::size_t i = 0; i < index.size(); ++i) scores.push_back(index.score(query, i));
  return top_k(scores, k);
}

// ---------------------------------------------------------------------------
// Sequential (relevance minus redundancy) ranker

struct SeqRankerModel {
  double alpha = 1.0;  // relevance weight
  double beta = 0.0;   // redundancy weight
};

/// Greedy selection: step score = alpha * cos(q, p) - beta * max_{s in S} cos(p, s),
/// with tf-idf cosines. Step scores are non-increasing because the penalty
/// only grows as S grows.
inline RankedPassages seq_rank(const SeqRankerModel& model, const Instance& inst, std::size_t k) {
  const std::size_t n = inst.passages.size();
  const TfIdfIndex index(inst.passages);
  const auto qv = index.vector_of(tokenize(Query::of(inst).text()));
  std::vector<TfIdfIndex::SparseVector> pv;
  std::vector<double> relevance;
  for (std::size_t i = 0; i < n; ++i) {
    pv.push_back(index.passage_vector(i));
    relevance.push_back(TfIdfIndex::cosine(qv, pv.back()));
  }
  std::vector<double> max_sim(n, 0.0);
  std::vector<bool> taken(n, false);
  RankedPassages r;
  r.k = k;
  r.num_passages = n;
  const std::size_t steps = std::min(k, n);
  for (std::size_t step = 0; step < steps; ++step) {
    std::size_t best = n;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double s = model.alpha * relevance[i] - (step == 0 ? 0.0 : model.beta * max_sim[i]);
      if (s > best_score) {
        best_score = s;
        best = i;
      }
    }
    taken[best] = true;
    r.order.push_back(best);
    r.scores.push_back(best_score);
    if (model.beta != 0.0)
      for (std::size_t i = 0; i < n; ++i)
        if (!taken[i]) max_sim[i] = std::max(max_sim[i], TfIdfIndex::cosine(pv[i], pv[best]));
  }
  return r;
}

/// |top-k(predicted) ∩ top-k(oracle)| / min(k, N).
inline double recall_at_k(const RankedPassages& predicted, const RankedPassages& oracle, std::size_t k) {
  const std::size_t n = std::max(predicted.num_passages, oracle.num_passages);
  const std::size_t denom = std::min(k, n);
  if (denom == 0) return 0.0;
  std::unordered_set<std::size_t> gold(oracle.order.begin(), oracle.order.begin() + static_cast<std::ptrdiff_t>(std::min(k, oracle.order.size())));
  std::size_t hit = 0;
  for (std::size_t i = 0; i < std::min(k, predicted.order.size()); ++i) hit += gold.count(predicted.order[i]);
  return static_cast<double>(hit) / static_cast<double>(denom);
}

using SeqGrid = std::vector<SeqRankerModel>;

/// Grid search maximizing mean Recall@k against the silver sequence; the
/// first maximizer in grid order wins.
inline SeqRankerModel seq_fit(const std::vector<Instance>& train, std::size_t k, const SeqGrid& grid) {
  if (grid.empty()) throw ConfigError("seq_fit: empty parameter grid");
  if (train.empty()) throw PreconditionError("seq_fit: empty training set");
  std::vector<RankedPassages> silver;
  for (const auto& inst : train) silver.push_back(rank_rouge2_oracle(inst, k));
  SeqRankerModel best = grid.front();
  double best_recall = -1.0;
  for (const auto& candidate : grid) {
    if (!std::isfinite(candidate.alpha) || !std::isfinite(candidate.beta) || candidate.alpha < 0.0 || candidate.beta < 0.0)
      throw ConfigError("seq_fit: grid values must be finite and >= 0");
    double total = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i) total += recall_at_k(seq_rank(candidate, train[i], k), silver[i], k);
    const double mean = total / static_cast<double>(train.size());
    if (mean > best_recall) {
      best_recall = mean;
      best = candidate;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Index-generation ranker served by the generate backend

/// One encoder input per passage:
/// "question: [Entity] e [Title] t [Keys] kf... + kt... index: i context: p_i".
inline std::vector<std::string> neural_ranker_inputs(const Instance& inst) {
  std::string keys_f, keys_t;
  for (std::size_t i = 0; i < inst.factual_keys.size(); ++i) keys_f += (i ? " " : "") + inst.factual_keys[i].key;
  for (std::size_t i = 0; i < inst.topical_keys.size(); ++i) keys_t += (i ? " " : "") + inst.topical_keys[i];
  const std::string query = "question: [Entity] " + inst.entity + " [Title] " + inst.title + " [Keys] " + keys_f + " + " + keys_t;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < inst.passages.size(); ++i)
    out.push_back(query + " index: " + std::to_string(i) + " context: " + inst.passages[i]);
  return out;
}

/// Parses a whitespace-separated index sequence. Non-integers, out-of-range
/// and repeated indices are dropped; if fewer than min(k, N) remain, the
/// unused passages are appended in index order. Scores are k - position.
inline RankedPassages parse_index_sequence(const std::string& text, std::size_t num_passages, std::size_t k) {
  RankedPassages r;
  r.k = k;
  r.num_passages = num_passages;
  const std::size_t want = std::min(k, num_passages);
  std::vector<bool> taken(num_passages, false);
  std::istringstream in(text);
  std::string tok;
  while (r.order.size() < want && in >> tok) {
    if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; }) || tok.size() > 9) continue;
    const auto idx = static_cast<std::size_t>(std::stoul(tok));
    if (idx >= num_passages || taken[idx]) continue;
    taken[idx] = true;
    r.order.push_back(idx);
  }
  for (std::size_t i = 0; i < num_passages && r.order.size() < want; ++i)
    if (!taken[i]) r.order.push_back(i);
  for (std::size_t pos = 0; pos < r.order.size(); ++pos) r.scores.push_back(static_cast<double>(want - pos));
  return r;
}

inline RankedPassages rank_neural(const Instance& inst, std::size_t k, ModelBackend& generator, std::size_t max_tokens = 64) {
  const auto res = generator.generate(neural_ranker_inputs(inst), max_tokens);
  return parse_index_sequence(res.text, inst.passages.size(), k);
}

inline nlohmann::ordered_json to_json(const RankedPassages& r) {
  nlohmann::ordered_json j;
  j["order"] = r.order;
  j["scores"] = r.scores;
  j["k"] = r.k;
  j["num_passages"] = r.num_passages;
  return j;
}

inline nlohmann::ordered_json to_json(const SeqRankerModel& m) { return {{"alpha", m.alpha}, {"beta", m.beta}}; }

inline SeqRankerModel seq_model_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("alpha") || !j["alpha"].is_number()) throw SchemaError(1, "alpha");
  if (!j.contains("beta") || !j["beta"].is_number()) throw SchemaError(1, "beta");
  SeqRankerModel m{j["alpha"].get<double>(), j["beta"].get<double>()};
  if (!std::isfinite(m.alpha) || !std::isfinite(m.beta) || m.alpha < 0 || m.beta < 0) throw SchemaError(1, "alpha");
  return m;
}

}  // namespace keydesc

#endif  // KEYDESC_RANKERS_HPP
