#ifndef KEYDESC_TEXTMETRICS_HPP
#define KEYDESC_TEXTMETRICS_HPP

// Surface metrics over TokenSeq: ROUGE-N, ROUGE-L, corpus BLEU, answer
// token F1, BERTScore over precomputed vectors and a PARENT-style metric.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "keydesc/corpus.hpp"
#include "keydesc/errors.hpp"

namespace keydesc {

inline double harmonic_f1(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

struct MetricScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  static MetricScore from(double p, double r) { return {p, r, harmonic_f1(p, r)}; }
};

using NGram = std::vector<std::string>;
using NGramCounts = std::map<NGram, std::size_t>;

inline NGramCounts ngram_counts(const TokenSeq& seq, std::size_t n) {
  NGramCounts counts;
  if (n == 0 || seq.size() < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i)
    ++counts[NGram(seq.tokens().begin() + static_cast<std::ptrdiff_t>(i),
                   seq.tokens().begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

inline std::size_t total(const NGramCounts& counts) {
  std::size_t t = 0;
  for (const auto& [g, c] : counts) t += c;
  return t;
}

inline std::size_t clipped_overlap(const NGramCounts& cand, const NGramCounts& ref) {
  std::size_t m = 0;
  for (const auto& [g, c] : cand)
    if (auto it = ref.find(g); it != ref.end()) m += std::min(c, it->second);
  return m;
}

inline MetricScore rouge_n(const TokenSeq& candidate, const TokenSeq& reference, std::size_t n) {
  if (n < 1) throw PreconditionError("rouge_n: n must be >= 1");
  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  const auto overlap = static_cast<double>(clipped_overlap(cand, ref));
  const auto tc = total(cand), tr = total(ref);
  return MetricScore::from(tc ? overlap / static_cast<double>(tc) : 0.0, tr ? overlap / static_cast<double>(tr) : 0.0);
}

template <typename A, typename B>
std::size_t lcs_length(const A& a, const B& b) {
  if (a.size() == 0 || b.size() == 0) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline MetricScore rouge_l(const TokenSeq& candidate, const TokenSeq& reference) {
  const auto l = static_cast<double>(lcs_length(candidate, reference));
  return MetricScore::from(candidate.empty() ? 0.0 : l / static_cast<double>(candidate.size()),
                           reference.empty() ? 0.0 : l / static_cast<double>(reference.size()));
}

struct BleuOptions {
  std::size_t max_n = 4;
  /// Add-one smoothing on orders >= 2.
  bool smooth = false;
};

/// Corpus BLEU with a single reference per candidate.
inline double bleu(std::span<const TokenSeq> candidates, std::span<const TokenSeq> references, BleuOptions opts = {}) {
  if (candidates.size() != references.size()) throw PreconditionError("bleu: candidate/reference count mismatch");
  if (opts.max_n < 1) throw PreconditionError("bleu: max_n must be >= 1");
  std::vector<double> matched(opts.max_n, 0.0), possible(opts.max_n, 0.0);
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cand_len += static_cast<double>(candidates[i].size());
    ref_len += static_cast<double>(references[i].size());
    for (std::size_t n = 1; n <= opts.max_n; ++n) {
      const auto c = ngram_counts(candidates[i], n);
      matched[n - 1] += static_cast<double>(clipped_overlap(c, ngram_counts(references[i], n)));
      possible[n - 1] += static_cast<double>(total(c));
    }
  }
  if (cand_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < opts.max_n; ++n) {
    double m = matched[n], p = possible[n];
    if (opts.smooth && n > 0) {
      m += 1.0;
      p += 1.0;
    }
    if (m == 0.0 || p == 0.0) return 0.0;
    log_sum += std::log(m / p);
  }
  const double bp = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(opts.max_n));
}

inline double bleu(const TokenSeq& candidate, const TokenSeq& reference, BleuOptions opts = {}) {
  return bleu(std::span<const TokenSeq>(&candidate, 1), std::span<const TokenSeq>(&reference, 1), opts);
}

/// SQuAD-style answer F1 over multiset token overlap.
inline double token_f1(std::string_view gold, std::string_view predicted) {
  const auto g = tokenize(gold), p = tokenize(predicted);
  if (g.empty() && p.empty()) return 1.0;
  if (g.empty() || p.empty()) return 0.0;
  const auto common = static_cast<double>(clipped_overlap(ngram_counts(p, 1), ngram_counts(g, 1)));
  if (common == 0.0) return 0.0;
  return harmonic_f1(common / static_cast<double>(p.size()), common / static_cast<double>(g.size()));
}

// ---------------------------------------------------------------------------
// BERTScore from precomputed token vectors (no idf weighting).

using Vector = std::vector<double>;

inline double cosine(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw PreconditionError("cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Greedy max-cosine matching. Negative best matches count as 0 so every
/// component stays in [0, 1].
inline MetricScore bertscore_from_vectors(std::span<const Vector> cand, std::span<const Vector> ref) {
  if (cand.empty() || ref.empty()) throw PreconditionError("bertscore: each side needs at least one vector");
  const std::size_t dim = cand.front().size();
  for (const auto& v : cand)
    if (v.size() != dim) throw PreconditionError("bertscore: inconsistent vector dimension");
  for (const auto& v : ref)
    if (v.size() != dim) throw PreconditionError("bertscore: inconsistent vector dimension");

  std::vector<double> best_ref(ref.size(), 0.0);
  double p_sum = 0.0;
  for (const auto& c : cand) {
    double best = 0.0;
    for (std::size_t j = 0; j < ref.size(); ++j) {
      const double s = cosine(c, ref[j]);
      best = std::max(best, s);
      best_ref[j] = std::max(best_ref[j], s);
    }
    p_sum += best;
  }
  const double p = std::clamp(p_sum / static_cast<double>(cand.size()), 0.0, 1.0);
  const double r = std::clamp(std::accumulate(best_ref.begin(), best_ref.end(), 0.0) / static_cast<double>(ref.size()), 0.0, 1.0);
  return MetricScore::from(p, r);
}

// ---------------------------------------------------------------------------
// PARENT

/// Probability that an n-gram is entailed by the table, given the table's
/// token set.
using EntailmentFn = std::function<double(const NGram&, const std::unordered_set<std::string>&)>;

/// Fraction of the n-gram's tokens that occur in the table.
inline double word_overlap_entailment(const NGram& g, const std::unordered_set<std::string>& table) {
  if (g.empty()) return 0.0;
  double hits = 0.0;
  for (const auto& t : g) hits += table.count(t) ? 1.0 : 0.0;
  return hits / static_cast<double>(g.size());
}

struct ParentOptions {
  double lambda = 0.5;
  std::size_t max_n = 2;
  EntailmentFn entailment = word_overlap_entailment;
  /// Minimum LCS(value, candidate) / |value| for a triple value to count as covered.
  double table_recall_threshold = 0.5;
};

struct ParentScore : MetricScore {
  double reference_recall = 0.0;
  double table_recall = 0.0;
};

inline ParentScore parent(const TokenSeq& candidate, const TokenSeq& reference, std::span<const FactualTriple> triples,
                          const ParentOptions& opts = {}) {
  if (opts.lambda < 0.0 || opts.lambda > 1.0) throw PreconditionError("parent: lambda must be in [0,1]");
  if (opts.max_n < 1) throw PreconditionError("parent: max_n must be >= 1");

  std::unordered_set<std::string> table;
  std::vector<TokenSeq> values;
  for (const auto& t : triples) {
    for (const auto& tok : tokenize(linearize_triple(t))) table.insert(tok);
    if (auto v = tokenize(t.value); !v.empty()) values.push_back(std::move(v));
  }

  // Geometric mean over orders that have n-grams on the relevant side.
  double log_p = 0.0, log_r = 0.0;
  std::size_t orders_p = 0, orders_r = 0;
  bool zero_p = false, zero_r = false;
  for (std::size_t n = 1; n <= opts.max_n; ++n) {
    const auto cand = ngram_counts(candidate, n);
    const auto ref = ngram_counts(reference, n);

    if (!cand.empty()) {
      double num = 0.0, den = 0.0;
      for (const auto& [g, c] : cand) {
        const auto it = ref.find(g);
        const double ref_match = it == ref.end() ? 0.0 : static_cast<double>(std::min(c, it->second)) / static_cast<double>(c);
        num += static_cast<double>(c) * std::max(ref_match, opts.entailment(g, table));
        den += static_cast<double>(c);
      }
      ++orders_p;
      if (num == 0.0) zero_p = true; else log_p += std::log(num / den);
    }

    if (!ref.empty()) {
      double num = 0.0, den = 0.0, plain_num = 0.0, plain_den = 0.0;
      for (const auto& [g, c] : ref) {
        const auto it = cand.find(g);
        const double match = it == cand.end() ? 0.0 : static_cast<double>(std::min(c, it->second));
        const double w = opts.entailment(g, table);
        num += w * match;
        den += w * static_cast<double>(c);
        plain_num += match;
        plain_den += static_cast<double>(c);
      }
      // No reference n-gram is supported by the table: plain reference recall.
      const double r = den > 0.0 ? num / den : plain_num / plain_den;
      ++orders_r;
      if (r == 0.0) zero_r = true; else log_r += std::log(r);
    }
  }

  ParentScore s;
  s.precision = (orders_p == 0 || zero_p) ? 0.0 : std::exp(log_p / static_cast<double>(orders_p));
  s.reference_recall = (orders_r == 0 || zero_r) ? 0.0 : std::exp(log_r / static_cast<double>(orders_r));
  if (values.empty()) {
    s.table_recall = 0.0;
    s.recall = s.reference_recall;
  } else {
    std::size_t covered = 0;
    for (const auto& v : values)
      if (static_cast<double>(lcs_length(v, candidate)) / static_cast<double>(v.size()) >= opts.table_recall_threshold) ++covered;
    s.table_recall = static_cast<double>(covered) / static_cast<double>(values.size());
    s.recall = std::pow(s.reference_recall, opts.lambda) * std::pow(s.table_recall, 1.0 - opts.lambda);
  }
  s.f1 = harmonic_f1(s.precision, s.recall);
  return s;
}

}  // namespace keydesc

#endif  // KEYDESC_TEXTMETRICS_HPP
