#ifndef KEYDESC_BACKENDS_HPP
#define KEYDESC_BACKENDS_HPP

// Model-service boundary: the backend protocol as a C++ interface, plus
// deterministic in-process mocks used for hermetic runs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "keydesc/corpus.hpp"
#include "keydesc/errors.hpp"
#include "keydesc/hashing.hpp"
#include "keydesc/spans.hpp"
#include "keydesc/textmetrics.hpp"

namespace keydesc {

struct QaResult {
  std::string answer;
  bool unanswerable = true;
  double confidence = 0.0;
};

enum class NliLabel { entailment, neutral, contradiction };

inline std::string_view to_string(NliLabel l) {
  switch (l) {
    case NliLabel::entailment: return "entailment";
    case NliLabel::neutral: return "neutral";
    case NliLabel::contradiction: return "contradiction";
  }
  return "neutral";
}

inline std::optional<NliLabel> parse_nli_label(std::string_view s) {
  if (s == "entailment") return NliLabel::entailment;
  if (s == "neutral") return NliLabel::neutral;
  if (s == "contradiction") return NliLabel::contradiction;
  return std::nullopt;
}

/// probs are ordered (entailment, neutral, contradiction).
struct NliVerdict {
  NliLabel label = NliLabel::neutral;
  std::array<double, 3> probs{0.0, 1.0, 0.0};

  /// Throws PreconditionError naming the violated invariant.
  void validate() const {
    double sum = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0 && p <= 1.0)) throw PreconditionError("probs");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw PreconditionError("probs");
    const auto argmax = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    if (argmax != static_cast<std::size_t>(label)) throw PreconditionError("label");
  }
};

enum class EmbedMode { token, sequence };

struct Embeddings {
  std::size_t dim = 0;
  /// Token mode: one list of token vectors per input text.
  std::vector<std::vector<Vector>> tokens;
  /// Sequence mode: one vector per input text.
  std::vector<Vector> sequences;
};

struct GenerateResult {
  std::string text;
  bool truncated = false;
};

class ModelBackend {
 public:
  virtual ~ModelBackend() = default;

  /// Question answerable by span.surface, conditioned on span.sentence.
  virtual std::string qg(const AnswerSpan& span) = 0;
  virtual QaResult qa(std::string_view question, std::string_view context) = 0;
  virtual NliVerdict nli(std::string_view premise, std::string_view hypothesis) = 0;
  virtual Embeddings embed(const std::vector<std::string>& texts, EmbedMode mode) = 0;
  virtual std::vector<AnswerSpan> spans(std::string_view sentence) = 0;
  virtual GenerateResult generate(const std::vector<std::string>& inputs, std::size_t max_tokens) = 0;
  /// Question asking for the value of `key` for `entity`.
  virtual std::string key_question(std::string_view entity, std::string_view key) = 0;
};

/// Backend per role. nli, embed and spans are optional: consumers fall back
/// to token F1 and the rule-based span extractor when they are null.
struct Backends {
  std::shared_ptr<ModelBackend> qg;
  std::shared_ptr<ModelBackend> qa;
  std::shared_ptr<ModelBackend> nli;
  std::shared_ptr<ModelBackend> embed;
  std::shared_ptr<ModelBackend> spans;
  std::shared_ptr<ModelBackend> generate;

  static Backends all(const std::shared_ptr<ModelBackend>& b) { return {b, b, b, b, b, b}; }
};

// ---------------------------------------------------------------------------
// Mocks

inline constexpr std::string_view kMockQuestionPrefix = "What is the answer mentioned in: ";
inline constexpr std::string_view kBlank = "___";

/// Sentence with the answer span replaced by a blank, trailing sentence
/// punctuation removed.
inline std::string blank_span(const AnswerSpan& span) {
  std::string s = span.sentence.substr(0, span.start) + std::string(kBlank) + span.sentence.substr(span.end);
  while (!s.empty() && (s.back() == ' ' || s.back() == '.' || s.back() == '?' || s.back() == '!')) s.pop_back();
  return collapse_whitespace(s);
}

enum class MockEmbedStyle {
  /// Signed feature hashing of the token and its character trigrams.
  hashed,
  /// One-hot over the distinct tokens of the request: identical tokens have
  /// cosine 1, all others 0.
  exact,
};

struct MockOptions {
  double qa_threshold = 0.3;
  MockEmbedStyle embed_style = MockEmbedStyle::hashed;
  std::size_t hashed_dim = 256;
};

namespace detail {

inline std::vector<std::string> content_tokens(const TokenSeq& seq) {
  std::vector<std::string> out;
  for (const auto& t : seq) {
    const auto cps = unicode::decode(t);
    if (cps.size() == 1 && unicode::is_punct(cps[0].value)) continue;
    if (is_stopword(t)) continue;
    out.push_back(t);
  }
  return out;
}

inline std::size_t multiset_overlap(std::vector<std::string> a, std::vector<std::string> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0, n = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++n;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return n;
}

inline std::optional<std::string> first_word_token(const TokenSeq& seq) {
  for (const auto& t : seq)
    if (!(unicode::decode(t).size() == 1 && unicode::is_punct(unicode::decode(t)[0].value))) return t;
  return std::nullopt;
}

inline std::optional<std::string> last_word_token(const TokenSeq& seq) {
  for (auto it = seq.tokens().rbegin(); it != seq.tokens().rend(); ++it)
    if (!(unicode::decode(*it).size() == 1 && unicode::is_punct(unicode::decode(*it)[0].value))) return *it;
  return std::nullopt;
}

}  // namespace detail

class MockBackend : public ModelBackend {
 public:
  explicit MockBackend(MockOptions opts = {}) : opts_(opts) {}

  const MockOptions& options() const noexcept { return opts_; }

  std::string qg(const AnswerSpan& span) override {
    check_span(span);
    return std::string(kMockQuestionPrefix) + blank_span(span) + "?";
  }

  /// Picks the context span whose removal leaves the most question content
  /// words in its sentence. Ties prefer spans adjacent to the question's
  /// blank, then named/numeric spans, then earlier spans.
  QaResult qa(std::string_view question, std::string_view context) override {
    QaResult none;
    if (tokenize(context).empty()) return none;
    std::string_view q = question;
    if (q.starts_with(kMockQuestionPrefix)) q.remove_prefix(kMockQuestionPrefix.size());

    std::optional<std::string> left, right;
    std::vector<std::string> qcontent;
    if (auto pos = q.find(kBlank); pos != std::string_view::npos) {
      const auto before = tokenize(q.substr(0, pos));
      const auto after = tokenize(q.substr(pos + kBlank.size()));
      left = detail::last_word_token(before);
      right = detail::first_word_token(after);
      qcontent = detail::content_tokens(before);
      const auto rest = detail::content_tokens(after);
      qcontent.insert(qcontent.end(), rest.begin(), rest.end());
    } else {
      qcontent = detail::content_tokens(tokenize(q));
    }
    if (qcontent.empty()) return none;
    std::vector<std::string> qsorted = qcontent;
    std::sort(qsorted.begin(), qsorted.end());

    struct Best {
      double score = -1.0;
      int adjacency = -1;
      int kind = -1;
      std::string answer;
    } best;
    for (const auto& sentence : split_sentences(context)) {
      for (const auto& span : extract_spans(sentence)) {
        const auto answer_content = detail::content_tokens(tokenize(span.surface));
        const bool inside_question = std::all_of(answer_content.begin(), answer_content.end(), [&](const std::string& t) {
          return std::binary_search(qsorted.begin(), qsorted.end(), t);
        });
        if (inside_question) continue;
        const auto before = tokenize(std::string_view(sentence).substr(0, span.start));
        const auto after = tokenize(std::string_view(sentence).substr(span.end));
        auto outside = detail::content_tokens(before);
        const auto tail = detail::content_tokens(after);
        outside.insert(outside.end(), tail.begin(), tail.end());
        const double score = static_cast<double>(detail::multiset_overlap(outside, qcontent)) / static_cast<double>(qcontent.size());
        int adjacency = 0;
        if (left && detail::last_word_token(before) == left) ++adjacency;
        if (right && detail::first_word_token(after) == right) ++adjacency;
        const int kind = span.kind == SpanKind::chunk ? 0 : 1;
        if (std::tie(score, adjacency, kind) > std::tie(best.score, best.adjacency, best.kind)) best = {score, adjacency, kind, span.surface};
      }
    }
    if (best.score < opts_.qa_threshold) {
      none.confidence = std::max(0.0, best.score);
      return none;
    }
    return {best.answer, false, best.score};
  }

  /// Exact token match -> entailment. A shared leading question with
  /// token-disjoint remainders -> contradiction. Otherwise neutral.
  NliVerdict nli(std::string_view premise, std::string_view hypothesis) override {
    const auto p = tokenize(premise), h = tokenize(hypothesis);
    if (p == h) return {NliLabel::entailment, {0.9, 0.05, 0.05}};
    std::size_t common = 0;
    while (common < p.size() && common < h.size() && p[common] == h[common]) ++common;
    auto rest = [&](const TokenSeq& s) {
      return detail::content_tokens(TokenSeq(std::vector<std::string>(s.tokens().begin() + static_cast<std::ptrdiff_t>(common), s.tokens().end())));
    };
    const auto rp = rest(p), rh = rest(h);
    if (common > 0 && !rp.empty() && !rh.empty() && detail::multiset_overlap(rp, rh) == 0)
      return {NliLabel::contradiction, {0.05, 0.05, 0.9}};
    return {NliLabel::neutral, {0.05, 0.9, 0.05}};
  }

  Embeddings embed(const std::vector<std::string>& texts, EmbedMode mode) override {
    std::vector<TokenSeq> toks;
    for (const auto& t : texts) toks.push_back(tokenize(t));

    Embeddings out;
    std::unordered_map<std::string, std::size_t> vocab;
    if (opts_.embed_style == MockEmbedStyle::exact) {
      for (const auto& seq : toks)
        for (const auto& t : seq) vocab.emplace(t, vocab.size());
      out.dim = std::max<std::size_t>(1, vocab.size());
    } else {
      out.dim = opts_.hashed_dim;
    }
    auto token_vector = [&](const std::string& t) {
      Vector v(out.dim, 0.0);
      if (opts_.embed_style == MockEmbedStyle::exact) {
        v[vocab.at(t)] = 1.0;
        return v;
      }
      auto add = [&](std::string_view feature, double weight) {
        const auto h = fnv1a64(feature);
        v[h % out.dim] += (h >> 63) ? -weight : weight;
      };
      add("w:" + t, 1.0);
      const std::string padded = "<" + t + ">";
      const auto cps = unicode::decode(padded);
      for (std::size_t i = 0; i + 3 <= cps.size(); ++i)
        add("c:" + padded.substr(cps[i].begin, cps[i + 2].end - cps[i].begin), 0.5);
      double norm = 0.0;
      for (double x : v) norm += x * x;
      if (norm > 0.0)
        for (double& x : v) x /= std::sqrt(norm);
      return v;
    };

    for (const auto& seq : toks) {
      std::vector<Vector> vecs;
      for (const auto& t : seq) vecs.push_back(token_vector(t));
      if (mode == EmbedMode::token) {
        out.tokens.push_back(std::move(vecs));
      } else {
        Vector mean(out.dim, 0.0);
        for (const auto& v : vecs)
          for (std::size_t i = 0; i < out.dim; ++i) mean[i] += v[i];
        if (!vecs.empty())
          for (double& x : mean) x /= static_cast<double>(vecs.size());
        out.sequences.push_back(std::move(mean));
      }
    }
    return out;
  }

  std::vector<AnswerSpan> spans(std::string_view sentence) override { return extract_spans(sentence); }

  /// Echo: the inputs joined by newlines, cut to max_tokens whitespace tokens.
  GenerateResult generate(const std::vector<std::string>& inputs, std::size_t max_tokens) override {
    std::string joined;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (i) joined += '\n';
      joined += inputs[i];
    }
    GenerateResult r;
    std::size_t count = 0, pos = 0;
    while (pos < joined.size()) {
      const auto b = joined.find_first_not_of(" \t\n", pos);
      if (b == std::string::npos) break;
      auto e = joined.find_first_of(" \t\n", b);
      if (e == std::string::npos) e = joined.size();
      if (max_tokens > 0 && count == max_tokens) {
        r.truncated = true;
        r.text = joined.substr(0, pos);
        while (!r.text.empty() && (r.text.back() == ' ' || r.text.back() == '\n' || r.text.back() == '\t')) r.text.pop_back();
        return r;
      }
      ++count;
      pos = e;
    }
    r.text = joined;
    return r;
  }

  std::string key_question(std::string_view entity, std::string_view key) override {
    return "What is the " + humanize_key(key) + " of " + collapse_whitespace(entity) + "?";
  }

 private:
  MockOptions opts_;
};

}  // namespace keydesc

#endif  // KEYDESC_BACKENDS_HPP
