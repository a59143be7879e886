#ifndef KEYDESC_MAFE_HPP
#define KEYDESC_MAFE_HPP

// QA-based factuality metric. Recall asks questions generated from the
// reference sentences and the factual triples and answers them from the
// hypothesis. Precision asks questions generated from the hypothesis and
// answers them from the reference and from the triples, keeping the better
// of the two matches.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "keydesc/backends.hpp"
#include "keydesc/corpus.hpp"
#include "keydesc/errors.hpp"
#include "keydesc/parallel.hpp"
#include "keydesc/spans.hpp"
#include "keydesc/textmetrics.hpp"

namespace keydesc::mafe {

enum class QuestionSource { reference_sentence, factual_triple, hypothesis_sentence };

inline std::string_view to_string(QuestionSource s) {
  switch (s) {
    case QuestionSource::reference_sentence: return "reference_sentence";
    case QuestionSource::factual_triple: return "factual_triple";
    case QuestionSource::hypothesis_sentence: return "hypothesis_sentence";
  }
  return "";
}

struct QAItem {
  std::string question;
  std::string gold_answer;
  QuestionSource source = QuestionSource::reference_sentence;
  /// Sentence or linearized triple the question was generated from.
  std::string source_text;
};

struct ItemRecord {
  QAItem item;
  /// Recall side: answer from the hypothesis. Precision side: the answer
  /// that produced the larger match.
  std::string predicted;
  bool unanswerable = true;
  double score = 0.0;
  // Precision side only.
  std::optional<std::string> predicted_reference;
  std::optional<std::string> predicted_triples;
  double score_reference = 0.0;
  double score_triples = 0.0;
};

struct Diagnostics {
  bool no_recall_questions = false;
  bool no_precision_questions = false;
  std::size_t qg_failures = 0;
  std::size_t filtered_questions = 0;
};

struct MafeReport {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  std::vector<ItemRecord> recall_items;
  std::vector<ItemRecord> precision_items;
  Diagnostics diagnostics;
};

struct MafeOptions {
  /// Spans kept per sentence; 0 = no cap.
  std::size_t max_spans_per_sentence = 8;
  /// Drop questions that QA on their own source context cannot answer.
  bool filter_questions = false;
  double filter_threshold = 0.5;
  /// Concurrent backend calls.
  std::size_t parallelism = 1;
};

inline double mafe_f1(double recall, double precision) { return harmonic_f1(recall, precision); }

/// Spans from the span backend when configured, else the rule-based extractor.
inline std::vector<AnswerSpan> extract_spans(std::string_view sentence, const Backends& backends, std::size_t max_spans = 0) {
  if (!backends.spans) return keydesc::extract_spans(sentence, max_spans);
  auto spans = backends.spans->spans(sentence);
  std::stable_sort(spans.begin(), spans.end(), [](const AnswerSpan& a, const AnswerSpan& b) { return a.start < b.start; });
  std::vector<AnswerSpan> unique;
  for (auto& s : spans) {
    if (std::none_of(unique.begin(), unique.end(), [&](const AnswerSpan& u) { return u.surface == s.surface; }))
      unique.push_back(std::move(s));
  }
  if (max_spans > 0 && unique.size() > max_spans) unique.resize(max_spans);
  return unique;
}

inline std::string generate_question(const AnswerSpan& span, ModelBackend& qg) {
  check_span(span);
  return qg.qg(span);
}

inline QaResult answer_question(std::string_view question, std::string_view context, ModelBackend& qa) {
  if (tokenize(question).empty()) throw PreconditionError("answer_question: empty question");
  if (tokenize(context).empty()) return {};
  return qa.qa(question, context);
}

/// Linearized triples, each closed with a period, joined into one context.
inline std::string triple_context(const std::vector<FactualTriple>& triples) {
  std::string out;
  for (const auto& t : triples) {
    if (!out.empty()) out += ' ';
    out += linearize_triple(t);
    out += '.';
  }
  return out;
}

/// Span covering the value at the end of the linearized triple.
inline AnswerSpan triple_answer_span(const FactualTriple& t) {
  const std::string text = linearize_triple(t);
  const std::string value = collapse_whitespace(unicode::to_lower(t.value));
  return make_span(text, text.size() - value.size(), text.size(), SpanKind::named);
}

/// Scores a predicted answer against the gold answer for one question.
/// NLI over "question answer" pairs: entailment 1, contradiction 0, neutral
/// BERTScore F1 of the two answers. Without NLI, token F1.
inline double match_answers(std::string_view question, std::string_view gold, std::string_view predicted,
                            ModelBackend* nli, ModelBackend* embed) {
  if (tokenize(predicted).empty()) return 0.0;
  if (!nli) return token_f1(gold, predicted);
  const std::string q(question);
  const auto verdict = nli->nli(q + " " + std::string(gold), q + " " + std::string(predicted));
  switch (verdict.label) {
    case NliLabel::entailment: return 1.0;
    case NliLabel::contradiction: return 0.0;
    case NliLabel::neutral: break;
  }
  if (!embed) return token_f1(gold, predicted);
  const auto e = embed->embed({std::string(gold), std::string(predicted)}, EmbedMode::token);
  if (e.tokens.size() != 2 || e.tokens[0].empty() || e.tokens[1].empty()) return 0.0;
  return bertscore_from_vectors(e.tokens[1], e.tokens[0]).f1;
}

namespace detail {

struct Job {
  AnswerSpan span;
  QAItem item;
};

inline std::vector<Job> sentence_jobs(std::string_view text, QuestionSource source, const Backends& backends,
                                      const MafeOptions& opts) {
  std::vector<Job> jobs;
  for (const auto& sentence : split_sentences(text))
    for (auto& span : extract_spans(sentence, backends, opts.max_spans_per_sentence)) {
      QAItem item;
      item.gold_answer = span.surface;
      item.source = source;
      item.source_text = sentence;
      jobs.push_back({std::move(span), std::move(item)});
    }
  return jobs;
}

inline std::vector<Job> triple_jobs(const std::vector<FactualTriple>& triples) {
  std::vector<Job> jobs;
  for (const auto& t : triples) {
    auto span = triple_answer_span(t);
    QAItem item;
    item.gold_answer = span.surface;
    item.source = QuestionSource::factual_triple;
    item.source_text = span.sentence;
    jobs.push_back({std::move(span), std::move(item)});
  }
  return jobs;
}

inline void require(const Backends& b) {
  if (!b.qg) throw ConfigError("MAFE needs a question-generation backend");
  if (!b.qa) throw ConfigError("MAFE needs a question-answering backend");
}

struct SideResult {
  double score = 0.0;
  std::vector<ItemRecord> items;
  std::size_t qg_failures = 0;
  std::size_t filtered = 0;
};

inline double mean_score(const std::vector<ItemRecord>& items) {
  if (items.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : items) s += r.score;
  return s / static_cast<double>(items.size());
}

/// Generates one question per job; QG failures and filtered questions leave
/// an empty slot. `source_context(job)` is the context used for filtering.
template <typename SourceContext, typename Score>
SideResult run_side(std::vector<Job> jobs, const Backends& backends, const MafeOptions& opts, SourceContext&& source_context,
                    Score&& score) {
  std::vector<std::optional<ItemRecord>> slots(jobs.size());
  std::atomic<std::size_t> qg_failures{0}, filtered{0};
  parallel_for(jobs.size(), opts.parallelism, [&](std::size_t i) {
    auto& job = jobs[i];
    try {
      job.item.question = generate_question(job.span, *backends.qg);
    } catch (const PreconditionError&) {
      throw;
    } catch (const Error&) {
      ++qg_failures;
      return;
    }
    if (tokenize(job.item.question).empty()) {
      ++qg_failures;
      return;
    }
    if (opts.filter_questions) {
      const auto a = answer_question(job.item.question, source_context(job), *backends.qa);
      const double m = a.unanswerable ? 0.0
                                      : match_answers(job.item.question, job.item.gold_answer, a.answer, backends.nli.get(),
                                                      backends.embed.get());
      if (m < opts.filter_threshold) {
        ++filtered;
        return;
      }
    }
    slots[i] = score(job.item);
  });
  SideResult out;
  for (auto& s : slots)
    if (s) out.items.push_back(std::move(*s));
  out.score = mean_score(out.items);
  out.qg_failures = qg_failures;
  out.filtered = filtered;
  return out;
}

}  // namespace detail

inline detail::SideResult mafe_recall_items(std::string_view hypothesis, std::string_view reference,
                                            const std::vector<FactualTriple>& triples, const Backends& backends,
                                            const MafeOptions& opts = {}) {
  detail::require(backends);
  if (tokenize(reference).empty()) throw PreconditionError("mafe_recall: empty reference");
  auto jobs = detail::sentence_jobs(reference, QuestionSource::reference_sentence, backends, opts);
  auto tj = detail::triple_jobs(triples);
  jobs.insert(jobs.end(), std::make_move_iterator(tj.begin()), std::make_move_iterator(tj.end()));
  const std::string tctx = triple_context(triples);
  const std::string ref(reference);
  const std::string hyp(hypothesis);
  return detail::run_side(
      std::move(jobs), backends, opts,
      [&](const detail::Job& j) -> const std::string& { return j.item.source == QuestionSource::factual_triple ? tctx : ref; },
      [&](const QAItem& item) {
        ItemRecord rec;
        rec.item = item;
        const auto a = answer_question(item.question, hyp, *backends.qa);
        rec.unanswerable = a.unanswerable;
        if (!a.unanswerable) {
          rec.predicted = a.answer;
          rec.score = match_answers(item.question, item.gold_answer, a.answer, backends.nli.get(), backends.embed.get());
        }
        return rec;
      });
}

inline double mafe_recall(std::string_view hypothesis, std::string_view reference, const std::vector<FactualTriple>& triples,
                          const Backends& backends, const MafeOptions& opts = {}) {
  return mafe_recall_items(hypothesis, reference, triples, backends, opts).score;
}

inline detail::SideResult mafe_precision_items(std::string_view hypothesis, std::string_view reference,
                                               const std::vector<FactualTriple>& triples, const Backends& backends,
                                               const MafeOptions& opts = {}) {
  detail::require(backends);
  auto jobs = detail::sentence_jobs(hypothesis, QuestionSource::hypothesis_sentence, backends, opts);
  const std::string tctx = triple_context(triples);
  const std::string ref(reference);
  const std::string hyp(hypothesis);
  return detail::run_side(
      std::move(jobs), backends, opts, [&](const detail::Job&) -> const std::string& { return hyp; },
      [&](const QAItem& item) {
        ItemRecord rec;
        rec.item = item;
        const auto from_ref = answer_question(item.question, ref, *backends.qa);
        const auto from_triples = answer_question(item.question, tctx, *backends.qa);
        if (!from_ref.unanswerable) {
          rec.predicted_reference = from_ref.answer;
          rec.score_reference =
              match_answers(item.question, item.gold_answer, from_ref.answer, backends.nli.get(), backends.embed.get());
        }
        if (!from_triples.unanswerable) {
          rec.predicted_triples = from_triples.answer;
          rec.score_triples =
              match_answers(item.question, item.gold_answer, from_triples.answer, backends.nli.get(), backends.embed.get());
        }
        rec.unanswerable = from_ref.unanswerable && from_triples.unanswerable;
        rec.score = std::max(rec.score_reference, rec.score_triples);
        if (!rec.unanswerable)
          rec.predicted = rec.score_triples > rec.score_reference || !rec.predicted_reference ? rec.predicted_triples.value_or("")
                                                                                               : *rec.predicted_reference;
        return rec;
      });
}

inline double mafe_precision(std::string_view hypothesis, std::string_view reference,
                             const std::vector<FactualTriple>& triples, const Backends& backends,
                             const MafeOptions& opts = {}) {
  return mafe_precision_items(hypothesis, reference, triples, backends, opts).score;
}

inline MafeReport evaluate(std::string_view hypothesis, std::string_view reference, const std::vector<FactualTriple>& triples,
                           const Backends& backends, const MafeOptions& opts = {}) {
  auto r = mafe_recall_items(hypothesis, reference, triples, backends, opts);
  auto p = mafe_precision_items(hypothesis, reference, triples, backends, opts);
  MafeReport report;
  report.recall = r.score;
  report.precision = p.score;
  report.f1 = mafe_f1(report.recall, report.precision);
  report.recall_items = std::move(r.items);
  report.precision_items = std::move(p.items);
  report.diagnostics.no_recall_questions = report.recall_items.empty();
  report.diagnostics.no_precision_questions = report.precision_items.empty();
  report.diagnostics.qg_failures = r.qg_failures + p.qg_failures;
  report.diagnostics.filtered_questions = r.filtered + p.filtered;
  return report;
}

inline nlohmann::ordered_json to_json(const ItemRecord& r) {
  nlohmann::ordered_json j;
  j["source"] = to_string(r.item.source);
  j["source_text"] = r.item.source_text;
  j["question"] = r.item.question;
  j["gold"] = r.item.gold_answer;
  j["predicted"] = r.predicted;
  j["unanswerable"] = r.unanswerable;
  j["score"] = r.score;
  if (r.item.source == QuestionSource::hypothesis_sentence) {
    j["predicted_reference"] = r.predicted_reference ? nlohmann::ordered_json(*r.predicted_reference) : nlohmann::ordered_json();
    j["score_reference"] = r.score_reference;
    j["predicted_triples"] = r.predicted_triples ? nlohmann::ordered_json(*r.predicted_triples) : nlohmann::ordered_json();
    j["score_triples"] = r.score_triples;
  }
  return j;
}

inline nlohmann::ordered_json to_json(const MafeReport& r) {
  nlohmann::ordered_json j;
  j["recall"] = r.recall;
  j["precision"] = r.precision;
  j["f1"] = r.f1;
  j["recall_items"] = nlohmann::ordered_json::array();
  for (const auto& i : r.recall_items) j["recall_items"].push_back(to_json(i));
  j["precision_items"] = nlohmann::ordered_json::array();
  for (const auto& i : r.precision_items) j["precision_items"].push_back(to_json(i));
  j["diagnostics"] = {{"no_recall_questions", r.diagnostics.no_recall_questions},
                      {"no_precision_questions", r.diagnostics.no_precision_questions},
                      {"qg_failures", r.diagnostics.qg_failures},
                      {"filtered_questions", r.diagnostics.filtered_questions}};
  return j;
}

}  // namespace keydesc::mafe

#endif  // KEYDESC_MAFE_HPP
