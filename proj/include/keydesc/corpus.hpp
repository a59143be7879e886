#ifndef KEYDESC_CORPUS_HPP
#define KEYDESC_CORPUS_HPP

// Data model shared by every module: dataset instances, the tokenization
// contract behind all lexical metrics, factual triples and JSONL I/O.

#include <algorithm>
#include <array>
#include <cstddef>
#include <fstream>
#include <initializer_list>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "keydesc/errors.hpp"
#include "keydesc/unicode.hpp"

namespace keydesc {

/// Normalized token sequence. Tokens are non-empty and contain no whitespace.
class TokenSeq {
 public:
  TokenSeq() = default;
  TokenSeq(std::initializer_list<std::string> tokens) : TokenSeq(std::vector<std::string>(tokens)) {}
  explicit TokenSeq(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (const auto& t : tokens_) {
      if (t.empty()) throw PreconditionError("TokenSeq: empty token");
      for (const auto& cp : unicode::decode(t))
        if (unicode::is_space(cp.value)) throw PreconditionError("TokenSeq: token contains whitespace: '" + t + "'");
    }
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  bool empty() const noexcept { return tokens_.empty(); }
  const std::string& operator[](std::size_t i) const { return tokens_[i]; }
  auto begin() const noexcept { return tokens_.begin(); }
  auto end() const noexcept { return tokens_.end(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::string join(std::string_view sep = " ") const {
    std::string out;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (i) out += sep;
      out += tokens_[i];
    }
    return out;
  }

  friend bool operator==(const TokenSeq&, const TokenSeq&) = default;

 private:
  std::vector<std::string> tokens_;
};

inline std::ostream& operator<<(std::ostream& os, const TokenSeq& seq) {
  return os << '[' << seq.join(", ") << ']';
}

namespace detail {

// Typographic apostrophes survive NFKC; fold them so the clitic rule sees them.
inline std::string fold_apostrophes(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (const auto& cp : unicode::decode(text)) {
    if (cp.value == U'’' || cp.value == U'ʼ' || cp.value == U'‘')
      out += '\'';
    else
      out.append(text.substr(cp.begin, cp.end - cp.begin));
  }
  return out;
}

}  // namespace detail

/// Lowercased (NFKC case-folded) tokens. Punctuation and symbols become
/// standalone tokens and the possessive clitic 's is split off.
inline TokenSeq tokenize(std::string_view text) {
  const std::string norm = unicode::nfkc_casefold(detail::fold_apostrophes(text));
  const auto cps = unicode::decode(norm);
  std::vector<std::string> tokens;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) tokens.push_back(std::move(word));
    word.clear();
  };
  auto boundary_at = [&](std::size_t j) {
    return j >= cps.size() || unicode::is_space(cps[j].value) || unicode::is_punct(cps[j].value);
  };
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const char32_t c = cps[i].value;
    if (unicode::is_space(c)) {
      flush();
    } else if (c == U'\'' && i + 1 < cps.size() && cps[i + 1].value == U's' && boundary_at(i + 2)) {
      flush();
      tokens.emplace_back("'s");
      ++i;
    } else if (unicode::is_punct(c)) {
      flush();
      tokens.emplace_back(norm.substr(cps[i].begin, cps[i].end - cps[i].begin));
    } else {
      word.append(norm, cps[i].begin, cps[i].end - cps[i].begin);
    }
  }
  flush();
  return TokenSeq(std::move(tokens));
}

struct FactualTriple {
  std::string entity;
  std::string key;
  std::string value;

  friend bool operator==(const FactualTriple&, const FactualTriple&) = default;
};

/// Splits snake_case / camelCase / spaced key names into lowercase words.
inline std::string humanize_key(std::string_view key) {
  const auto cps = unicode::decode(key);
  std::vector<std::string> words;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) words.push_back(unicode::to_lower(word));
    word.clear();
  };
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const char32_t c = cps[i].value;
    if (unicode::is_space(c) || c == U'_' || c == U'-') {
      flush();
      continue;
    }
    if (unicode::is_upper(c) && i > 0) {
      const char32_t prev = cps[i - 1].value;
      const bool next_lower = i + 1 < cps.size() && unicode::is_lower(cps[i + 1].value);
      // fooBar | HTMLParser -> html parser
      if (unicode::is_lower(prev) || unicode::is_digit(prev) || (unicode::is_upper(prev) && next_lower)) flush();
    }
    word.append(key.substr(cps[i].begin, cps[i].end - cps[i].begin));
  }
  flush();
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

inline std::string collapse_whitespace(std::string_view text) {
  std::string out;
  bool pending = false;
  for (const auto& cp : unicode::decode(text)) {
    if (unicode::is_space(cp.value)) {
      pending = !out.empty();
      continue;
    }
    if (pending) out += ' ';
    pending = false;
    out.append(text.substr(cp.begin, cp.end - cp.begin));
  }
  return out;
}

/// "entity key value": key split into lowercase words, value lowercased.
inline std::string linearize_triple(const FactualTriple& t) {
  if (t.entity.empty() || t.key.empty() || t.value.empty())
    throw PreconditionError("linearize_triple: triple fields must be non-empty");
  return collapse_whitespace(t.entity) + ' ' + humanize_key(t.key) + ' ' +
         collapse_whitespace(unicode::to_lower(t.value));
}

struct KeyValue {
  std::string key;
  std::string value;

  friend bool operator==(const KeyValue&, const KeyValue&) = default;
};

struct Instance {
  std::string entity;
  std::string title;
  std::vector<KeyValue> factual_keys;
  std::vector<std::string> topical_keys;
  std::vector<std::string> passages;
  std::string reference;

  friend bool operator==(const Instance&, const Instance&) = default;
};

inline std::vector<FactualTriple> triples_of(const Instance& inst) {
  std::vector<FactualTriple> out;
  for (const auto& kv : inst.factual_keys)
    if (!kv.key.empty() && !kv.value.empty()) out.push_back({inst.entity, kv.key, kv.value});
  return out;
}

/// Returns the name of the first violated invariant, or an empty string.
inline std::string instance_violation(const Instance& inst) {
  if (inst.entity.empty()) return "entity";
  if (inst.reference.empty()) return "reference";
  if (inst.passages.empty()) return "passages";
  for (const auto& p : inst.passages)
    if (tokenize(p).empty()) return "passages";
  return {};
}

// ---------------------------------------------------------------------------
// Sentence splitting

namespace detail {

inline bool is_guarded_abbreviation(std::string word) {
  static constexpr std::array<std::string_view, 48> kGuards = {
      "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "vs", "e.g", "i.e",
      "u.s", "u.k", "inc", "ltd", "co", "corp", "no", "gen", "col", "lt", "sgt", "capt",
      "gov", "sen", "rep", "rev", "hon", "fr", "jan", "feb", "apr", "aug", "sep", "sept",
      "oct", "nov", "dec", "fig", "approx", "est", "dept", "univ", "ave", "blvd", "cf", "al"};
  word = unicode::to_lower(word);
  return std::find(kGuards.begin(), kGuards.end(), word) != kGuards.end();
}

inline bool is_closer(char32_t c) {
  return c == U'"' || c == U'\'' || c == U')' || c == U']' || c == U'”' || c == U'’';
}

}  // namespace detail

/// Rule-based sentence splitter. Sentences end at . ? ! followed by
/// whitespace or end of text, unless the word before a period is a known
/// abbreviation. Returned sentences are trimmed substrings of the input.
inline std::vector<std::string> split_sentences(std::string_view text) {
  const auto cps = unicode::decode(text);
  std::vector<std::string> out;
  std::size_t start = 0;  // code point index
  auto emit = [&](std::size_t end_cp) {
    std::size_t b = start, e = end_cp;
    while (b < e && unicode::is_space(cps[b].value)) ++b;
    while (e > b && unicode::is_space(cps[e - 1].value)) --e;
    if (b < e) out.emplace_back(text.substr(cps[b].begin, cps[e - 1].end - cps[b].begin));
    start = end_cp;
  };
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const char32_t c = cps[i].value;
    if (c != U'.' && c != U'?' && c != U'!') continue;
    std::size_t j = i + 1;
    while (j < cps.size() && (cps[j].value == U'.' || cps[j].value == U'?' || cps[j].value == U'!')) ++j;
    while (j < cps.size() && detail::is_closer(cps[j].value)) ++j;
    if (j < cps.size() && !unicode::is_space(cps[j].value)) {
      i = j - 1;
      continue;
    }
    if (c == U'.' && j == i + 1) {
      std::size_t w = i;
      while (w > start && !unicode::is_space(cps[w - 1].value)) --w;
      while (w < i && (cps[w].value == U'(' || cps[w].value == U'"' || cps[w].value == U'[')) ++w;
      const std::size_t word_begin = w < i ? cps[w].begin : cps[i].begin;
      if (detail::is_guarded_abbreviation(std::string(text.substr(word_begin, cps[i].begin - word_begin)))) continue;
    }
    emit(j);
    i = j - 1;
  }
  emit(cps.size());
  return out;
}

// ---------------------------------------------------------------------------
// JSONL persistence

inline nlohmann::ordered_json to_json(const Instance& inst) {
  nlohmann::ordered_json j;
  j["entity"] = inst.entity;
  j["title"] = inst.title;
  j["factual_keys"] = nlohmann::ordered_json::array();
  for (const auto& kv : inst.factual_keys) j["factual_keys"].push_back({{"key", kv.key}, {"value", kv.value}});
  j["topical_keys"] = inst.topical_keys;
  j["passages"] = inst.passages;
  j["reference"] = inst.reference;
  return j;
}

namespace detail {

template <typename Json>
const Json& require(const Json& obj, const char* field, std::size_t line) {
  auto it = obj.find(field);
  if (it == obj.end()) throw SchemaError(line, field);
  return *it;
}

template <typename Json>
std::string require_string(const Json& obj, const char* field, std::size_t line) {
  const auto& v = require(obj, field, line);
  if (!v.is_string()) throw SchemaError(line, field);
  return v.template get<std::string>();
}

template <typename Json>
std::vector<std::string> require_strings(const Json& obj, const char* field, std::size_t line) {
  const auto& v = require(obj, field, line);
  if (!v.is_array()) throw SchemaError(line, field);
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw SchemaError(line, field);
    out.push_back(e.template get<std::string>());
  }
  return out;
}

}  // namespace detail

inline Instance instance_from_json(const nlohmann::json& j, std::size_t line = 0) {
  if (!j.is_object()) throw ParseError(line, "expected a JSON object");
  Instance inst;
  inst.entity = detail::require_string(j, "entity", line);
  inst.title = detail::require_string(j, "title", line);
  const auto& fk = detail::require(j, "factual_keys", line);
  if (!fk.is_array()) throw SchemaError(line, "factual_keys");
  for (const auto& e : fk) {
    if (!e.is_object()) throw SchemaError(line, "factual_keys");
    inst.factual_keys.push_back({detail::require_string(e, "key", line), detail::require_string(e, "value", line)});
  }
  inst.topical_keys = detail::require_strings(j, "topical_keys", line);
  inst.passages = detail::require_strings(j, "passages", line);
  inst.reference = detail::require_string(j, "reference", line);
  if (auto bad = instance_violation(inst); !bad.empty()) throw SchemaError(line, bad);
  return inst;
}

/// Calls fn(json, line_number) for every non-blank line.
template <typename Fn>
void for_each_jsonl(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(n, e.what());
    }
    fn(j, n);
  }
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return in;
}

inline std::vector<Instance> read_instances(std::istream& in) {
  std::vector<Instance> out;
  for_each_jsonl(in, [&](const nlohmann::json& j, std::size_t line) { out.push_back(instance_from_json(j, line)); });
  return out;
}

inline std::vector<Instance> read_instances(const std::string& path) {
  auto in = open_input(path);
  return read_instances(in);
}

inline void write_instances(const std::vector<Instance>& instances, std::ostream& out) {
  for (const auto& inst : instances) out << to_json(inst).dump() << '\n';
}

inline void write_instances(const std::vector<Instance>& instances, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  write_instances(instances, out);
  if (!out) throw Error("write failed: " + path);
}

}  // namespace keydesc

#endif  // KEYDESC_CORPUS_HPP
