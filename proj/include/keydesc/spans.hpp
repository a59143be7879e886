#ifndef KEYDESC_SPANS_HPP
#define KEYDESC_SPANS_HPP

// Answer spans and the rule-based extractor used when no span backend is
// configured: capitalized runs, numbers and dates, and stopword-delimited
// lowercase chunks.

#include <algorithm>
#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "keydesc/errors.hpp"
#include "keydesc/unicode.hpp"

namespace keydesc {

enum class SpanKind { named, numeric, chunk };

struct AnswerSpan {
  std::string sentence;
  std::size_t start = 0;  // byte offset into sentence
  std::size_t end = 0;    // exclusive
  std::string surface;
  SpanKind kind = SpanKind::chunk;

  friend bool operator==(const AnswerSpan&, const AnswerSpan&) = default;
};

/// Builds a span over sentence[start, end); throws if it does not fit.
inline AnswerSpan make_span(std::string sentence, std::size_t start, std::size_t end, SpanKind kind = SpanKind::chunk) {
  if (start >= end || end > sentence.size())
    throw PreconditionError("answer span [" + std::to_string(start) + ", " + std::to_string(end) +
                            ") outside sentence of length " + std::to_string(sentence.size()));
  AnswerSpan s;
  s.surface = sentence.substr(start, end - start);
  s.sentence = std::move(sentence);
  s.start = start;
  s.end = end;
  s.kind = kind;
  return s;
}

inline void check_span(const AnswerSpan& s) {
  if (s.start >= s.end || s.end > s.sentence.size() || s.sentence.compare(s.start, s.end - s.start, s.surface) != 0)
    throw PreconditionError("answer span does not lie in its sentence");
}

inline bool is_stopword(std::string_view lower) {
  static const std::unordered_set<std::string_view> kStop = {
      "a", "an", "the", "and", "or", "but", "if", "of", "in", "on", "at", "to", "for", "from", "by",
      "with", "as", "into", "onto", "about", "after", "before", "over", "under", "between", "during",
      "through", "than", "then", "that", "this", "these", "those", "there", "here", "which", "who",
      "whom", "whose", "what", "when", "where", "why", "how", "is", "are", "was", "were", "be", "been",
      "being", "am", "has", "have", "had", "do", "does", "did", "will", "would", "shall", "should",
      "can", "could", "may", "might", "must", "not", "no", "nor", "so", "such", "too", "very", "it",
      "its", "he", "him", "his", "she", "her", "hers", "they", "them", "their", "theirs", "we", "us",
      "our", "you", "your", "i", "me", "my", "also", "both", "each", "all", "any", "some", "more",
      "most", "other", "only", "own", "same", "just", "while", "until", "since", "against", "among",
      "within", "without", "upon", "per", "via", "'s", "s", "one", "later", "early", "first", "mr", "mrs", "ms", "dr"};
  return kStop.count(lower) > 0;
}

namespace detail {

struct RawWord {
  std::size_t begin;  // byte offsets
  std::size_t end;
  std::string text;
  std::string lower;
  bool space_before;  // separated from the previous word by whitespace only
  bool capitalized;
  bool numeric;
  bool alpha;
};

inline bool is_month(std::string_view lower) {
  static constexpr std::array<std::string_view, 23> kMonths = {
      "january", "february", "march", "april", "may", "june", "july", "august", "september",
      "october", "november", "december", "jan", "feb", "mar", "apr", "jun", "jul", "aug",
      "sep", "sept", "oct", "nov"};
  return std::find(kMonths.begin(), kMonths.end(), lower) != kMonths.end();
}

inline bool is_day(const RawWord& w) {
  return w.numeric && w.text.size() <= 2 && std::stoi(w.text) >= 1 && std::stoi(w.text) <= 31;
}

inline bool is_year(const RawWord& w) {
  return w.numeric && w.text.size() == 4 && std::all_of(w.text.begin(), w.text.end(), [](char c) { return c >= '0' && c <= '9'; });
}

inline std::vector<RawWord> scan_words(std::string_view s) {
  const auto cps = unicode::decode(s);
  std::vector<RawWord> words;
  bool only_space_since_last = true;
  std::size_t i = 0;
  auto word_char = [&](std::size_t j) {
    return j < cps.size() && !unicode::is_space(cps[j].value) && !unicode::is_punct(cps[j].value);
  };
  while (i < cps.size()) {
    const char32_t c = cps[i].value;
    if (unicode::is_space(c)) {
      ++i;
      continue;
    }
    if (unicode::is_punct(c)) {
      only_space_since_last = false;
      ++i;
      continue;
    }
    std::size_t j = i;
    while (true) {
      while (word_char(j)) ++j;
      if (j + 1 < cps.size() && word_char(j + 1)) {
        const char32_t p = cps[j].value;
        const bool digits = unicode::is_digit(cps[j - 1].value) && unicode::is_digit(cps[j + 1].value);
        // O'Brien, Frideswide's, Saint-Denis, 3.5, 1,000
        if (p == U'\'' || p == U'’' || p == U'-' || ((p == U'.' || p == U',') && digits)) {
          ++j;
          continue;
        }
      }
      break;
    }
    RawWord w;
    w.begin = cps[i].begin;
    w.end = cps[j - 1].end;
    w.text = std::string(s.substr(w.begin, w.end - w.begin));
    w.lower = unicode::to_lower(w.text);
    w.space_before = only_space_since_last;
    w.capitalized = unicode::is_upper(c);
    w.numeric = unicode::is_digit(c);
    w.alpha = unicode::is_alpha(c);
    for (std::size_t k = i; k < j; ++k)
      if (!unicode::is_digit(cps[k].value) && cps[k].value != U'.' && cps[k].value != U',') w.numeric = false;
    words.push_back(std::move(w));
    only_space_since_last = true;
    i = j;
  }
  return words;
}

inline bool is_connector(std::string_view lower) {
  static constexpr std::array<std::string_view, 13> kConnectors = {
      "of", "de", "da", "del", "della", "van", "von", "der", "den", "la", "le", "du", "di"};
  return std::find(kConnectors.begin(), kConnectors.end(), lower) != kConnectors.end();
}

// A comma between date parts ("December 30, 1995") is the only punctuation
// a date may cross.
inline bool only_comma_between(std::string_view s, const RawWord& a, const RawWord& b) {
  const auto gap = s.substr(a.end, b.begin - a.end);
  int commas = 0;
  for (char ch : gap) {
    if (ch == ',') ++commas;
    else if (ch != ' ') return false;
  }
  return commas <= 1;
}

}  // namespace detail

/// Rule-based span extraction. Spans are deduplicated by surface and ordered
/// by start offset. When max_spans > 0, named and numeric spans are kept in
/// preference to lowercase chunks.
inline std::vector<AnswerSpan> extract_spans(std::string_view sentence, std::size_t max_spans = 0) {
  using detail::RawWord;
  const auto words = detail::scan_words(sentence);
  std::vector<bool> used(words.size(), false);
  std::vector<AnswerSpan> found;
  auto add = [&](std::size_t first, std::size_t last, SpanKind kind) {  // inclusive word indices
    for (std::size_t k = first; k <= last; ++k) used[k] = true;
    found.push_back(make_span(std::string(sentence), words[first].begin, words[last].end, kind));
  };

  // Dates: Month [Day][,] [Year] | Day Month [Year]; must carry a day or a year.
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (used[i]) continue;
    const auto& w = words[i];
    std::size_t last = i;
    bool ok = false;
    if (detail::is_month(w.lower) && w.capitalized) {
      std::size_t j = i + 1;
      if (j < words.size() && detail::is_day(words[j]) && detail::only_comma_between(sentence, words[j - 1], words[j])) {
        last = j++;
        ok = true;
      }
      if (j < words.size() && detail::is_year(words[j]) && detail::only_comma_between(sentence, words[j - 1], words[j])) {
        last = j;
        ok = true;
      }
    } else if (detail::is_day(w) && i + 1 < words.size() && detail::is_month(words[i + 1].lower) &&
               words[i + 1].capitalized && words[i + 1].space_before) {
      last = i + 1;
      ok = true;
      if (i + 2 < words.size() && detail::is_year(words[i + 2]) && detail::only_comma_between(sentence, words[i + 1], words[i + 2]))
        last = i + 2;
    }
    if (ok) add(i, last, SpanKind::numeric);
  }

  for (std::size_t i = 0; i < words.size(); ++i)
    if (!used[i] && words[i].numeric) add(i, i, SpanKind::numeric);

  // Capitalized runs, allowing lowercase connectors between capitalized words.
  for (std::size_t i = 0; i < words.size();) {
    if (used[i] || !words[i].capitalized) {
      ++i;
      continue;
    }
    std::size_t last = i;
    std::size_t j = i + 1;
    while (j < words.size() && !used[j] && words[j].space_before) {
      if (words[j].capitalized) {
        last = j++;
      } else if (detail::is_connector(words[j].lower) && j + 1 < words.size() && !used[j + 1] &&
                 words[j + 1].space_before && words[j + 1].capitalized) {
        last = j + 1;
        j += 2;
      } else {
        break;
      }
    }
    std::size_t first = i;
    while (first <= last && is_stopword(words[first].lower)) ++first;
    if (first <= last) add(first, last, SpanKind::named);
    for (std::size_t k = i; k <= last; ++k) used[k] = true;
    i = last + 1;
  }

  // Lowercase chunks between stopwords and punctuation.
  for (std::size_t i = 0; i < words.size();) {
    auto chunk_word = [&](std::size_t k) { return !used[k] && words[k].alpha && !is_stopword(words[k].lower); };
    if (!chunk_word(i)) {
      ++i;
      continue;
    }
    std::size_t last = i;
    while (last + 1 < words.size() && words[last + 1].space_before && chunk_word(last + 1)) ++last;
    add(i, last, SpanKind::chunk);
    i = last + 1;
  }

  std::vector<AnswerSpan> unique;
  std::unordered_set<std::string> seen;
  std::stable_sort(found.begin(), found.end(), [](const AnswerSpan& a, const AnswerSpan& b) { return a.start < b.start; });
  for (auto& s : found)
    if (seen.insert(s.surface).second) unique.push_back(std::move(s));

  if (max_spans > 0 && unique.size() > max_spans) {
    std::vector<AnswerSpan> kept;
    for (const auto& s : unique)
      if (s.kind != SpanKind::chunk && kept.size() < max_spans) kept.push_back(s);
    for (const auto& s : unique)
      if (s.kind == SpanKind::chunk && kept.size() < max_spans) kept.push_back(s);
    std::stable_sort(kept.begin(), kept.end(), [](const AnswerSpan& a, const AnswerSpan& b) { return a.start < b.start; });
    unique = std::move(kept);
  }
  return unique;
}

}  // namespace keydesc

#endif  // KEYDESC_SPANS_HPP
