#ifndef KEYDESC_DESCRIPTOR_HPP
#define KEYDESC_DESCRIPTOR_HPP

// Description generation: the extractive QA baseline and the input
// serialization used for abstractive generation through the generate backend.

#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "keydesc/backends.hpp"
#include "keydesc/corpus.hpp"
#include "keydesc/errors.hpp"
#include "keydesc/parallel.hpp"
#include "keydesc/rankers.hpp"

namespace keydesc::descriptor {

inline constexpr std::string_view kPassageSeparator = " [SEP] ";
inline constexpr std::size_t kDefaultMaxInputTokens = 512;

struct GenerationRequest {
  Instance instance;
  RankedPassages ranked;
  std::size_t k = 10;

  void validate() const {
    if (k > ranked.order.size()) throw PreconditionError("GenerationRequest: k exceeds ranked passages");
    for (std::size_t i = 0; i < k; ++i)
      if (ranked.order[i] >= instance.passages.size()) throw PreconditionError("GenerationRequest: passage index out of range");
  }
};

/// "[Entity] e [Title] t [Keys] kf... + kt... [docs] p_1 [SEP] ... p_k".
inline std::string serialize_input(const GenerationRequest& req) {
  req.validate();
  const auto& inst = req.instance;
  std::string out = "[Entity] " + inst.entity + " [Title] " + inst.title + " [Keys] ";
  for (std::size_t i = 0; i < inst.factual_keys.size(); ++i) out += (i ? " " : "") + inst.factual_keys[i].key;
  out += " + ";
  for (std::size_t i = 0; i < inst.topical_keys.size(); ++i) out += (i ? " " : "") + inst.topical_keys[i];
  out += " [docs] ";
  for (std::size_t i = 0; i < req.k; ++i) {
    if (i) out += kPassageSeparator;
    out += inst.passages[req.ranked.order[i]];
  }
  return out;
}

struct ParsedInput {
  std::string entity;
  std::string title;
  /// Space-joined key lists as they appear in the input.
  std::string factual_keys;
  std::string topical_keys;
  std::vector<std::string> passages;
};

inline ParsedInput parse_serialized_input(std::string_view text) {
  auto expect = [&](std::string_view marker, std::size_t from) {
    const auto pos = text.find(marker, from);
    if (pos == std::string_view::npos) throw PreconditionError("serialized input lacks '" + std::string(marker) + "'");
    return pos;
  };
  if (!text.starts_with("[Entity] ")) throw PreconditionError("serialized input must start with '[Entity] '");
  ParsedInput p;
  const auto title = expect(" [Title] ", 9);
  p.entity = std::string(text.substr(9, title - 9));
  const auto keys = expect(" [Keys] ", title + 9);
  p.title = std::string(text.substr(title + 9, keys - title - 9));
  const auto plus = expect(" + ", keys + 8);
  p.factual_keys = std::string(text.substr(keys + 8, plus - keys - 8));
  const auto docs = expect(" [docs] ", plus + 3);
  p.topical_keys = std::string(text.substr(plus + 3, docs - plus - 3));
  std::string_view rest = text.substr(docs + 8);
  while (true) {
    const auto sep = rest.find(kPassageSeparator);
    p.passages.emplace_back(rest.substr(0, sep));
    if (sep == std::string_view::npos) break;
    rest.remove_prefix(sep + kPassageSeparator.size());
  }
  return p;
}

struct GenerationResult {
  std::string text;
  std::size_t input_tokens = 0;
  /// The serialized input exceeds the generator's input budget.
  bool input_over_budget = false;
  /// The backend reported cutting the input or output.
  bool backend_truncated = false;
};

struct AbstractiveOptions {
  std::size_t max_input_tokens = kDefaultMaxInputTokens;
  std::size_t max_output_tokens = 256;
};

inline std::size_t whitespace_tokens(std::string_view s) {
  std::istringstream in{std::string(s)};
  std::size_t n = 0;
  std::string w;
  while (in >> w) ++n;
  return n;
}

/// Sends the serialized request and returns the backend text verbatim.
inline GenerationResult abstractive_generate(const GenerationRequest& req, ModelBackend* generator, const AbstractiveOptions& opts = {}) {
  if (!generator) throw ConfigError("abstractive_generate: no generate backend configured");
  const std::string input = serialize_input(req);
  GenerationResult r;
  r.input_tokens = whitespace_tokens(input);
  r.input_over_budget = r.input_tokens > opts.max_input_tokens;
  try {
    const auto res = generator->generate({input}, opts.max_output_tokens);
    r.text = res.text;
    r.backend_truncated = res.truncated;
  } catch (const BackendError& e) {
    throw BackendError(e.endpoint(), std::string(e.what()) + "; request: " + input.substr(0, 200));
  }
  return r;
}

struct ExtractiveResult {
  std::string text;
  std::vector<std::string> sentences;
  /// Factual keys no passage could answer.
  std::vector<std::string> unanswered_keys;
};

struct ExtractiveOptions {
  std::size_t parallelism = 1;
};

/// For each factual key: ask a question built from (entity, key) against every
/// passage separately, keep the most confident answer (lower passage index on
/// ties) and emit the passage sentence containing it. Sentences are
/// deduplicated and kept in key order.
inline ExtractiveResult extractive_generate(const Instance& inst, const Backends& backends, const ExtractiveOptions& opts = {}) {
  if (inst.factual_keys.empty()) throw PreconditionError("extractive_generate: instance has no factual keys");
  if (!backends.qg || !backends.qa) throw ConfigError("extractive_generate needs question generation and answering backends");
  ExtractiveResult out;
  std::unordered_set<std::string> seen;
  for (const auto& kv : inst.factual_keys) {
    const std::string question = backends.qg->key_question(inst.entity, kv.key);
    std::vector<QaResult> answers(inst.passages.size());
    parallel_for(inst.passages.size(), opts.parallelism, [&](std::size_t i) {
      answers[i] = tokenize(inst.passages[i]).empty() ? QaResult{} : backends.qa->qa(question, inst.passages[i]);
    });
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < answers.size(); ++i) {
      if (answers[i].unanswerable || answers[i].answer.empty()) continue;
      if (!best || answers[i].confidence > answers[*best].confidence) best = i;
    }
    if (!best) {
      out.unanswered_keys.push_back(kv.key);
      continue;
    }
    std::optional<std::string> sentence;
    for (auto& s : split_sentences(inst.passages[*best]))
      if (s.find(answers[*best].answer) != std::string::npos) {
        sentence = std::move(s);
        break;
      }
    if (!sentence) {
      out.unanswered_keys.push_back(kv.key);
      continue;
    }
    if (seen.insert(*sentence).second) out.sentences.push_back(std::move(*sentence));
  }
  for (std::size_t i = 0; i < out.sentences.size(); ++i) out.text += (i ? " " : "") + out.sentences[i];
  return out;
}

}  // namespace keydesc::descriptor

#endif  // KEYDESC_DESCRIPTOR_HPP
