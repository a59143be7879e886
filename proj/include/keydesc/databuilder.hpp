#ifndef KEYDESC_DATABUILDER_HPP
#define KEYDESC_DATABUILDER_HPP

// Distantly supervised dataset construction from pre-extracted section
// records: factual keys by key-value/section alignment, topical keys from
// hyperlinked instance-of values, and an entity-level grounding filter.

#include <algorithm>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "keydesc/backends.hpp"
#include "keydesc/corpus.hpp"
#include "keydesc/errors.hpp"
#include "keydesc/textmetrics.hpp"

namespace keydesc::databuilder {

struct HyperlinkType {
  std::string anchor;
  std::string value;  // instance-of / subclass-of label
};

struct RawSectionRecord {
  std::string entity;
  std::string article_title;
  std::string section_title;
  std::string section_text;
  std::vector<KeyValue> infobox_pairs;
  std::vector<HyperlinkType> hyperlink_instanceof;
  std::vector<std::string> passages;
  std::optional<std::string> domain;
};

struct AlignmentScore {
  double bertscore_precision = 0.0;
  double rougeL_precision = 0.0;
};

struct Thresholds {
  double bert = 0.82;
  double rouge_l = 0.25;
  double grounding = 0.82;
};

inline void require_embedder(const ModelBackend* embed) {
  if (!embed) throw ConfigError("dataset building needs an embedding backend");
}

/// "key value" with the key split into words.
inline std::string pair_text(const KeyValue& kv) { return humanize_key(kv.key) + " " + kv.value; }

/// BERTScore precision and ROUGE-L precision of "key value" against the section.
inline AlignmentScore score_kv_alignment(const KeyValue& pair, std::string_view section_text, ModelBackend* embed) {
  require_embedder(embed);
  if (pair.key.empty() && pair.value.empty()) throw PreconditionError("score_kv_alignment: empty pair");
  const std::string candidate = pair_text(pair);
  AlignmentScore s;
  s.rougeL_precision = rouge_l(tokenize(candidate), tokenize(section_text)).precision;
  const auto e = embed->embed({candidate, std::string(section_text)}, EmbedMode::token);
  if (e.tokens.size() != 2) throw ProtocolError("/v1/embed", "vectors");
  if (!e.tokens[0].empty() && !e.tokens[1].empty()) s.bertscore_precision = bertscore_from_vectors(e.tokens[0], e.tokens[1]).precision;
  return s;
}

inline bool keep_pair(const AlignmentScore& s, const Thresholds& t) {
  return s.bertscore_precision > t.bert && s.rougeL_precision > t.rouge_l;
}

inline std::vector<KeyValue> select_factual_keys(const RawSectionRecord& record, ModelBackend* embed, const Thresholds& t = {}) {
  std::vector<KeyValue> out;
  for (const auto& kv : record.infobox_pairs) {
    if (kv.key.empty() || kv.value.empty()) continue;
    if (keep_pair(score_kv_alignment(kv, record.section_text, embed), t)) out.push_back(kv);
  }
  return out;
}

/// Case-folded instance-of values of hyperlinks whose anchor occurs in the
/// section text, ordered by first anchor occurrence, deduplicated.
inline std::vector<std::string> derive_topical_keys(const RawSectionRecord& record) {
  std::vector<std::pair<std::size_t, std::string>> hits;
  for (const auto& h : record.hyperlink_instanceof) {
    if (h.anchor.empty() || h.value.empty()) continue;
    const auto pos = record.section_text.find(h.anchor);
    if (pos == std::string::npos) continue;
    hits.emplace_back(pos, collapse_whitespace(unicode::to_lower(h.value)));
  }
  std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (auto& [pos, v] : hits)
    if (seen.insert(v).second) out.push_back(std::move(v));
  return out;
}

struct FilterDecision {
  bool keep = true;
  double mean_recall = 0.0;
  std::size_t pairs = 0;
  /// Set when the decision was made without evidence.
  std::optional<std::string> warning;
};

/// Best BERTScore recall of the pair (as reference) over the passages.
inline double grounding_recall(const KeyValue& pair, const std::vector<std::string>& passages, ModelBackend* embed) {
  require_embedder(embed);
  if (passages.empty()) return 0.0;
  std::vector<std::string> texts{pair_text(pair)};
  texts.insert(texts.end(), passages.begin(), passages.end());
  const auto e = embed->embed(texts, EmbedMode::token);
  if (e.tokens.size() != texts.size()) throw ProtocolError("/v1/embed", "vectors");
  if (e.tokens[0].empty()) return 0.0;
  double best = 0.0;
  for (std::size_t i = 1; i < e.tokens.size(); ++i)
    if (!e.tokens[i].empty()) best = std::max(best, bertscore_from_vectors(e.tokens[i], e.tokens[0]).recall);
  return best;
}

/// Drops an entity whose mean grounding recall over its selected pairs is
/// below the threshold. `selected[i]` are the pairs chosen for records[i].
inline FilterDecision filter_entity(const std::vector<RawSectionRecord>& records, const std::vector<std::vector<KeyValue>>& selected,
                                    ModelBackend* embed, const Thresholds& t = {}) {
  require_embedder(embed);
  if (records.size() != selected.size()) throw PreconditionError("filter_entity: records/selection size mismatch");
  FilterDecision d;
  double sum = 0.0;
  for (std::size_t r = 0; r < records.size(); ++r)
    for (const auto& kv : selected[r]) {
      sum += grounding_recall(kv, records[r].passages, embed);
      ++d.pairs;
    }
  if (d.pairs == 0) {
    d.keep = true;
    d.warning = "no selected key-value pairs; kept without grounding evidence";
    return d;
  }
  d.mean_recall = sum / static_cast<double>(d.pairs);
  d.keep = !(d.mean_recall < t.grounding);
  return d;
}

inline FilterDecision filter_entity(const std::vector<RawSectionRecord>& records, ModelBackend* embed, const Thresholds& t = {}) {
  std::vector<std::vector<KeyValue>> selected;
  for (const auto& r : records) selected.push_back(select_factual_keys(r, embed, t));
  return filter_entity(records, selected, embed, t);
}

struct BuildResult {
  std::vector<Instance> instances;
  std::vector<std::string> dropped_entities;
  std::size_t skipped_records = 0;  // records that would violate Instance invariants
  std::vector<std::string> warnings;
};

/// Runs key selection, topical key derivation and the grounding filter per
/// entity. Output order follows input order.
inline BuildResult build(const std::vector<RawSectionRecord>& records, ModelBackend* embed, const Thresholds& t = {}) {
  require_embedder(embed);
  std::vector<std::string> entity_order;
  std::unordered_map<std::string, std::vector<std::size_t>> by_entity;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto [it, inserted] = by_entity.try_emplace(records[i].entity);
    if (inserted) entity_order.push_back(records[i].entity);
    it->second.push_back(i);
  }
  std::vector<std::vector<KeyValue>> selected(records.size());
  std::vector<bool> keep(records.size(), false);
  BuildResult out;
  for (const auto& entity : entity_order) {
    std::vector<RawSectionRecord> group;
    std::vector<std::vector<KeyValue>> group_selected;
    for (auto i : by_entity[entity]) {
      selected[i] = select_factual_keys(records[i], embed, t);
      group.push_back(records[i]);
      group_selected.push_back(selected[i]);
    }
    const auto decision = filter_entity(group, group_selected, embed, t);
    if (decision.warning) out.warnings.push_back(entity + ": " + *decision.warning);
    if (!decision.keep) {
      out.dropped_entities.push_back(entity);
      continue;
    }
    for (auto i : by_entity[entity]) keep[i] = true;
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!keep[i]) continue;
    const auto& r = records[i];
    Instance inst{r.entity, r.section_title, selected[i], derive_topical_keys(r), r.passages, r.section_text};
    if (!instance_violation(inst).empty()) {
      ++out.skipped_records;
      continue;
    }
    out.instances.push_back(std::move(inst));
  }
  return out;
}

struct DatasetStats {
  std::size_t instances = 0;
  double avg_output_tokens = 0.0;
  double avg_passage_tokens = 0.0;
  double avg_passages = 0.0;
  double avg_factual_keys = 0.0;
  double avg_topical_keys = 0.0;
};

inline DatasetStats stats(const std::vector<Instance>& instances) {
  DatasetStats s;
  s.instances = instances.size();
  if (instances.empty()) return s;
  double out_tokens = 0.0, passage_tokens = 0.0, passages = 0.0, fk = 0.0, tk = 0.0;
  for (const auto& inst : instances) {
    out_tokens += static_cast<double>(tokenize(inst.reference).size());
    for (const auto& p : inst.passages) passage_tokens += static_cast<double>(tokenize(p).size());
    passages += static_cast<double>(inst.passages.size());
    fk += static_cast<double>(inst.factual_keys.size());
    tk += static_cast<double>(inst.topical_keys.size());
  }
  const auto n = static_cast<double>(instances.size());
  s.avg_output_tokens = out_tokens / n;
  s.avg_passage_tokens = passages > 0.0 ? passage_tokens / passages : 0.0;
  s.avg_passages = passages / n;
  s.avg_factual_keys = fk / n;
  s.avg_topical_keys = tk / n;
  return s;
}

inline nlohmann::ordered_json to_json(const DatasetStats& s) {
  nlohmann::ordered_json j;
  j["instances"] = s.instances;
  j["avg_output_tokens"] = s.avg_output_tokens;
  j["avg_passage_tokens"] = s.avg_passage_tokens;
  j["avg_passages"] = s.avg_passages;
  j["avg_factual_keys"] = s.avg_factual_keys;
  j["avg_topical_keys"] = s.avg_topical_keys;
  return j;
}

// ---------------------------------------------------------------------------
// Raw record JSONL

inline nlohmann::ordered_json to_json(const RawSectionRecord& r) {
  nlohmann::ordered_json j;
  j["entity"] = r.entity;
  j["article_title"] = r.article_title;
  j["section_title"] = r.section_title;
  j["section_text"] = r.section_text;
  j["infobox_pairs"] = nlohmann::ordered_json::array();
  for (const auto& kv : r.infobox_pairs) j["infobox_pairs"].push_back({{"key", kv.key}, {"value", kv.value}});
  j["hyperlink_instanceof"] = nlohmann::ordered_json::array();
  for (const auto& h : r.hyperlink_instanceof) j["hyperlink_instanceof"].push_back({{"anchor", h.anchor}, {"value", h.value}});
  j["passages"] = r.passages;
  if (r.domain) j["domain"] = *r.domain;
  return j;
}

inline RawSectionRecord record_from_json(const nlohmann::json& j, std::size_t line) {
  if (!j.is_object()) throw ParseError(line, "expected a JSON object");
  RawSectionRecord r;
  r.entity = keydesc::detail::require_string(j, "entity", line);
  r.article_title = j.contains("article_title") ? keydesc::detail::require_string(j, "article_title", line) : "";
  r.section_title = keydesc::detail::require_string(j, "section_title", line);
  r.section_text = keydesc::detail::require_string(j, "section_text", line);
  if (r.entity.empty()) throw SchemaError(line, "entity");
  if (r.section_text.empty()) throw SchemaError(line, "section_text");
  const auto& ib = keydesc::detail::require(j, "infobox_pairs", line);
  if (!ib.is_array()) throw SchemaError(line, "infobox_pairs");
  for (const auto& e : ib) {
    if (!e.is_object()) throw SchemaError(line, "infobox_pairs");
    r.infobox_pairs.push_back({keydesc::detail::require_string(e, "key", line), keydesc::detail::require_string(e, "value", line)});
  }
  if (j.contains("hyperlink_instanceof")) {
    const auto& hl = j.at("hyperlink_instanceof");
    if (!hl.is_array()) throw SchemaError(line, "hyperlink_instanceof");
    for (const auto& e : hl) {
      if (!e.is_object()) throw SchemaError(line, "hyperlink_instanceof");
      r.hyperlink_instanceof.push_back({keydesc::detail::require_string(e, "anchor", line), keydesc::detail::require_string(e, "value", line)});
    }
  }
  r.passages = keydesc::detail::require_strings(j, "passages", line);
  if (j.contains("domain")) r.domain = keydesc::detail::require_string(j, "domain", line);
  return r;
}

inline std::vector<RawSectionRecord> read_records(std::istream& in) {
  std::vector<RawSectionRecord> out;
  for_each_jsonl(in, [&](const nlohmann::json& j, std::size_t line) { out.push_back(record_from_json(j, line)); });
  return out;
}

}  // namespace keydesc::databuilder

#endif  // KEYDESC_DATABUILDER_HPP
