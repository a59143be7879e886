#ifndef KEYDESC_CLI_HPP
#define KEYDESC_CLI_HPP

// Command-line driver. Data goes to files as JSONL; a JSON run summary goes to
// stdout. Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "keydesc/keydesc.hpp"

namespace keydesc::cli {

using Json = nlohmann::ordered_json;

class UsageError : public Error {
 public:
  using Error::Error;
};

struct GlobalOptions {
  std::size_t jobs = 1;
  std::uint64_t seed = 13;
  std::string backend;
  std::string mock_embed = "hashed";
  double timeout = 30.0;
  std::size_t max_concurrency = 4;
  std::size_t retries = 2;

  BackendConfig backend_config() const {
    BackendConfig c;
    c.url = backend.empty() ? BackendConfig::url_from_env() : backend;
    c.timeout_seconds = timeout;
    c.max_concurrency = max_concurrency;
    c.retries = retries;
    c.mock.embed_style = mock_embed == "exact" ? MockEmbedStyle::exact : MockEmbedStyle::hashed;
    return c;
  }
};

// ---------------------------------------------------------------------------
// I/O helpers

/// Writes through a sibling temp file and renames it over the target.
inline void write_atomic(const std::string& path, const std::function<void(std::ostream&)>& fill) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    fill(out);
    out.flush();
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("cannot move output into place at " + path + ": " + ec.message());
  }
}

inline void write_jsonl(const std::string& path, const std::vector<Json>& rows) {
  write_atomic(path, [&](std::ostream& out) {
    for (const auto& r : rows) out << r.dump() << '\n';
  });
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  write_atomic(path, [&](std::ostream& out) { out << j.dump() << '\n'; });
}

/// An input-file error; keeps the structured details of the underlying error.
class InputError : public Error {
 public:
  InputError(const std::string& path, Json detail)
      : Error(path + ": " + detail["message"].get<std::string>()), detail_(std::move(detail)) {
    detail_["file"] = path;
    detail_["message"] = what();
  }
  const Json& detail() const noexcept { return detail_; }

 private:
  Json detail_;
};

inline Json error_json(const std::exception& e) {
  Json j{{"error", "runtime"}, {"message", e.what()}};
  if (const auto* in = dynamic_cast<const InputError*>(&e)) return in->detail();
  if (const auto* p = dynamic_cast<const ParseError*>(&e)) {
    j["error"] = "parse";
    j["line"] = p->line();
  } else if (const auto* s = dynamic_cast<const SchemaError*>(&e)) {
    j["error"] = "schema";
    j["line"] = s->line();
    j["field"] = s->field();
  } else if (const auto* pr = dynamic_cast<const ProtocolError*>(&e)) {
    j["error"] = "protocol";
    j["endpoint"] = pr->endpoint();
    j["field"] = pr->field();
  } else if (const auto* b = dynamic_cast<const BackendError*>(&e)) {
    j["error"] = "backend";
    j["endpoint"] = b->endpoint();
  } else if (dynamic_cast<const PreconditionError*>(&e)) {
    j["error"] = "precondition";
  }
  return j;
}

/// Tags errors raised while reading an input file with its path.
template <typename Fn>
auto with_file(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const InputError&) {
    throw;
  } catch (const ParseError& e) {
    throw InputError(path, error_json(e));
  } catch (const SchemaError& e) {
    throw InputError(path, error_json(e));
  }
}

inline std::vector<Instance> load_instances(const std::string& path) {
  return with_file(path, [&] { return read_instances(path); });
}

inline nlohmann::json load_json(const std::string& path) {
  auto in = open_input(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(path, {{"error", "parse"}, {"message", e.what()}});
  }
}

/// A text record is a JSON string, an object with "text", or an instance
/// (whose reference and factual triples are used).
struct TextRecord {
  std::string text;
  std::optional<std::vector<FactualTriple>> triples;
};

inline std::vector<TextRecord> load_text_records(const std::string& path) {
  return with_file(path, [&] {
    auto in = open_input(path);
    std::vector<TextRecord> out;
    for_each_jsonl(in, [&](const nlohmann::json& j, std::size_t line) {
      if (j.is_string()) {
        out.push_back({j.get<std::string>(), std::nullopt});
      } else if (j.is_object() && j.contains("reference")) {
        const auto inst = instance_from_json(j, line);
        out.push_back({inst.reference, triples_of(inst)});
      } else if (j.is_object() && j.contains("text") && j["text"].is_string()) {
        out.push_back({j["text"].get<std::string>(), std::nullopt});
      } else {
        throw SchemaError(line, "text");
      }
    });
    return out;
  });
}

/// One {"triples": [{"entity","key","value"}...]} object per line.
inline std::vector<std::vector<FactualTriple>> load_triples(const std::string& path) {
  return with_file(path, [&] {
    auto in = open_input(path);
    std::vector<std::vector<FactualTriple>> out;
    for_each_jsonl(in, [&](const nlohmann::json& j, std::size_t line) {
      if (!j.is_object() || !j.contains("triples") || !j["triples"].is_array()) throw SchemaError(line, "triples");
      std::vector<FactualTriple> ts;
      for (const auto& t : j["triples"]) {
        if (!t.is_object()) throw SchemaError(line, "triples");
        for (const char* f : {"entity", "key", "value"})
          if (!t.contains(f) || !t[f].is_string()) throw SchemaError(line, std::string("triples.") + f);
        ts.push_back({t["entity"].get<std::string>(), t["key"].get<std::string>(), t["value"].get<std::string>()});
      }
      out.push_back(std::move(ts));
    });
    return out;
  });
}

inline Json score_json(const MetricScore& s) { return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}}; }

class Timer {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// ---------------------------------------------------------------------------
// Subcommands

struct RankOptions {
  std::string method = "tfidf";
  std::size_t k = 10;
  std::string in, out, model;
};

/// Builds a ranking function for the method; loads models once.
inline std::function<RankedPassages(const Instance&, std::size_t)> make_ranker(const std::string& method, const std::string& model,
                                                                               const GlobalOptions& g) {
  if (method == "oracle") return [](const Instance& i, std::size_t k) { return rank_rouge2_oracle(i, k); };
  if (method == "tfidf") return [](const Instance& i, std::size_t k) { return rank_tfidf(i, k); };
  if (method == "seq") {
    SeqRankerModel m;
    if (!model.empty()) m = with_file(model, [&] { return seq_model_from_json(load_json(model)); });
    return [m](const Instance& i, std::size_t k) { return seq_rank(m, i, k); };
  }
  if (method == "dense") {
    if (model.empty()) throw UsageError("--method dense requires --model (see dense-train)");
    auto m = std::make_shared<dense::DenseRankerModel>(with_file(model, [&] { return dense::model_from_json(load_json(model)); }));
    return [m](const Instance& i, std::size_t k) { return dense::dense_rank(*m, i, k); };
  }
  if (method == "neural") {
    auto b = make_backends(g.backend_config());
    return [gen = b.generate](const Instance& i, std::size_t k) { return rank_neural(i, k, *gen); };
  }
  throw UsageError("unknown ranking method '" + method + "'");
}

inline Json cmd_rank(const RankOptions& o, const GlobalOptions& g) {
  Timer timer;
  const auto ranker = make_ranker(o.method, o.model, g);
  const auto instances = load_instances(o.in);
  std::vector<Json> rows(instances.size());
  std::vector<double> recall(instances.size());
  parallel_for(instances.size(), g.jobs, [&](std::size_t i) {
    const auto r = ranker(instances[i], o.k);
    Json row{{"entity", instances[i].entity}, {"title", instances[i].title}};
    const auto ranked = to_json(r);
    for (const auto& [key, v] : ranked.items()) row[key] = v;
    rows[i] = std::move(row);
    recall[i] = recall_at_k(r, rank_rouge2_oracle(instances[i], o.k), o.k);
  });
  write_jsonl(o.out, rows);
  double mean = 0.0;
  for (double r : recall) mean += r;
  if (!recall.empty()) mean /= static_cast<double>(recall.size());
  return {{"command", "rank"}, {"method", o.method}, {"k", o.k}, {"instances", instances.size()},
          {"mean_recall_at_k", mean}, {"output", o.out}, {"seconds", timer.seconds()}};
}

struct SurfaceOptions {
  std::string hyp, ref, triples, out;
  bool bertscore = false;
};

inline Json cmd_surface(const SurfaceOptions& o, const GlobalOptions& g) {
  Timer timer;
  const auto hyps = load_text_records(o.hyp);
  const auto refs = load_text_records(o.ref);
  if (hyps.size() != refs.size())
    throw Error("hypothesis and reference files differ in length (" + std::to_string(hyps.size()) + " vs " +
                std::to_string(refs.size()) + ")");
  std::vector<std::optional<std::vector<FactualTriple>>> triples(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) triples[i] = refs[i].triples;
  if (!o.triples.empty()) {
    const auto ts = load_triples(o.triples);
    if (ts.size() != refs.size()) throw Error("triples file length does not match the references");
    for (std::size_t i = 0; i < ts.size(); ++i) triples[i] = ts[i];
  }
  std::shared_ptr<ModelBackend> embedder;
  if (o.bertscore) embedder = make_backends(g.backend_config()).embed;

  const std::size_t n = hyps.size();
  std::vector<TokenSeq> h(n), r(n);
  for (std::size_t i = 0; i < n; ++i) {
    h[i] = tokenize(hyps[i].text);
    r[i] = tokenize(refs[i].text);
  }
  std::vector<Json> rows(n);
  parallel_for(n, g.jobs, [&](std::size_t i) {
    Json row{{"line", i + 1},
             {"rouge1", score_json(rouge_n(h[i], r[i], 1))},
             {"rouge2", score_json(rouge_n(h[i], r[i], 2))},
             {"rougeL", score_json(rouge_l(h[i], r[i]))},
             {"bleu", bleu(h[i], r[i], {.max_n = 4, .smooth = true})},
             {"token_f1", token_f1(hyps[i].text, refs[i].text)}};
    if (triples[i]) row["parent"] = score_json(parent(h[i], r[i], *triples[i]));
    if (embedder) {
      const auto e = embedder->embed({hyps[i].text, refs[i].text}, EmbedMode::token);
      const bool ok = e.tokens.size() == 2 && !e.tokens[0].empty() && !e.tokens[1].empty();
      row["bertscore"] = score_json(ok ? bertscore_from_vectors(e.tokens[0], e.tokens[1]) : MetricScore{});
    }
    rows[i] = std::move(row);
  });
  if (!o.out.empty()) write_jsonl(o.out, rows);

  Json means = Json::object();
  auto mean_of = [&](const std::function<std::optional<double>(const Json&)>& get) -> std::optional<double> {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& row : rows)
      if (auto v = get(row)) {
        sum += *v;
        ++count;
      }
    if (count == 0) return std::nullopt;
    return sum / static_cast<double>(count);
  };
  for (const char* m : {"rouge1", "rouge2", "rougeL", "parent", "bertscore"})
    for (const char* part : {"precision", "recall", "f1"})
      if (auto v = mean_of([&](const Json& row) -> std::optional<double> {
            if (!row.contains(m)) return std::nullopt;
            return row[m][part].get<double>();
          }))
        means[std::string(m) + "_" + part] = *v;
  for (const char* m : {"bleu", "token_f1"})
    if (auto v = mean_of([&](const Json& row) -> std::optional<double> { return row[m].get<double>(); })) means[m] = *v;

  return {{"command", "evaluate surface"}, {"lines", n}, {"mean", means}, {"corpus_bleu", n ? bleu(h, r) : 0.0},
          {"output", o.out}, {"seconds", timer.seconds()}};
}

struct MafeCliOptions {
  std::string hyp, instances, out;
  bool filter = false;
  double filter_threshold = 0.5;
  std::size_t max_spans = 8;
};

inline Json cmd_mafe(const MafeCliOptions& o, const GlobalOptions& g) {
  Timer timer;
  const auto hyps = load_text_records(o.hyp);
  const auto instances = load_instances(o.instances);
  if (hyps.size() != instances.size())
    throw Error("hypothesis and instance files differ in length (" + std::to_string(hyps.size()) + " vs " +
                std::to_string(instances.size()) + ")");
  const auto backends = make_backends(g.backend_config());
  mafe::MafeOptions opts;
  opts.filter_questions = o.filter;
  opts.filter_threshold = o.filter_threshold;
  opts.max_spans_per_sentence = o.max_spans;
  std::vector<mafe::MafeReport> reports(instances.size());
  parallel_for(instances.size(), g.jobs, [&](std::size_t i) {
    reports[i] = mafe::evaluate(hyps[i].text, instances[i].reference, triples_of(instances[i]), backends, opts);
  });
  std::vector<Json> rows;
  double recall = 0, precision = 0, f1 = 0;
  std::size_t qg_failures = 0, filtered = 0, no_recall = 0, no_precision = 0;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    Json row{{"line", i + 1}, {"entity", instances[i].entity}};
    const auto report = mafe::to_json(reports[i]);
    for (const auto& [key, v] : report.items()) row[key] = v;
    rows.push_back(std::move(row));
    recall += reports[i].recall;
    precision += reports[i].precision;
    f1 += reports[i].f1;
    qg_failures += reports[i].diagnostics.qg_failures;
    filtered += reports[i].diagnostics.filtered_questions;
    no_recall += reports[i].diagnostics.no_recall_questions;
    no_precision += reports[i].diagnostics.no_precision_questions;
  }
  write_jsonl(o.out, rows);
  const double n = reports.empty() ? 1.0 : static_cast<double>(reports.size());
  return {{"command", "evaluate mafe"},
          {"instances", reports.size()},
          {"backend", g.backend_config().url},
          {"mean", {{"recall", recall / n}, {"precision", precision / n}, {"f1", f1 / n}}},
          {"diagnostics",
           {{"qg_failures", qg_failures},
            {"filtered_questions", filtered},
            {"no_recall_questions", no_recall},
            {"no_precision_questions", no_precision}}},
          {"output", o.out},
          {"seconds", timer.seconds()}};
}

struct BuildOptions {
  std::string raw, out;
  databuilder::Thresholds thresholds;
};

inline Json cmd_build(const BuildOptions& o, const GlobalOptions& g, std::ostream& err) {
  Timer timer;
  const auto records = with_file(o.raw, [&] {
    auto in = open_input(o.raw);
    return databuilder::read_records(in);
  });
  const auto backends = make_backends(g.backend_config());
  const auto result = databuilder::build(records, backends.embed.get(), o.thresholds);
  for (const auto& w : result.warnings) err << "warning: " << w << '\n';
  write_atomic(o.out, [&](std::ostream& out) { write_instances(result.instances, out); });
  return {{"command", "build-dataset"},
          {"records", records.size()},
          {"instances", result.instances.size()},
          {"dropped_entities", result.dropped_entities},
          {"skipped_records", result.skipped_records},
          {"warnings", result.warnings.size()},
          {"thresholds",
           {{"bert", o.thresholds.bert}, {"rouge_l", o.thresholds.rouge_l}, {"grounding", o.thresholds.grounding}}},
          {"output", o.out},
          {"seconds", timer.seconds()}};
}

inline Json cmd_stats(const std::string& in, const std::string& out) {
  const auto s = databuilder::stats(load_instances(in));
  const auto j = databuilder::to_json(s);
  if (!out.empty()) write_json(out, j);
  return {{"command", "stats"}, {"stats", j}};
}

inline Json cmd_extractive(const std::string& in, const std::string& out, const GlobalOptions& g) {
  Timer timer;
  const auto instances = load_instances(in);
  const auto backends = make_backends(g.backend_config());
  std::vector<descriptor::ExtractiveResult> results(instances.size());
  parallel_for(instances.size(), g.jobs, [&](std::size_t i) {
    results[i] = instances[i].factual_keys.empty() ? descriptor::ExtractiveResult{}
                                                   : descriptor::extractive_generate(instances[i], backends);
  });
  std::vector<Json> rows;
  std::size_t empty = 0, no_keys = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (instances[i].factual_keys.empty()) ++no_keys;
    if (r.text.empty()) ++empty;
    std::vector<std::string> unanswered = r.unanswered_keys;
    rows.push_back({{"entity", instances[i].entity},
                    {"title", instances[i].title},
                    {"text", r.text},
                    {"sentences", r.sentences},
                    {"unanswered_keys", unanswered}});
  }
  write_jsonl(out, rows);
  return {{"command", "extractive"}, {"instances", instances.size()}, {"empty_outputs", empty},
          {"instances_without_factual_keys", no_keys}, {"output", out}, {"seconds", timer.seconds()}};
}

struct GenerateOptions {
  std::string in, out, ranker = "seq", model;
  std::size_t k = 10;
  std::size_t max_input_tokens = descriptor::kDefaultMaxInputTokens;
  std::size_t max_tokens = 256;
};

inline Json cmd_generate(const GenerateOptions& o, const GlobalOptions& g) {
  Timer timer;
  const auto ranker = make_ranker(o.ranker, o.model, g);
  const auto instances = load_instances(o.in);
  const auto backends = make_backends(g.backend_config());
  std::vector<Json> rows(instances.size());
  std::vector<descriptor::GenerationResult> results(instances.size());
  parallel_for(instances.size(), g.jobs, [&](std::size_t i) {
    auto ranked = ranker(instances[i], o.k);
    descriptor::GenerationRequest req{instances[i], ranked, ranked.order.size()};
    results[i] = descriptor::abstractive_generate(req, backends.generate.get(),
                                                  {.max_input_tokens = o.max_input_tokens, .max_output_tokens = o.max_tokens});
    rows[i] = {{"entity", instances[i].entity},
               {"title", instances[i].title},
               {"passages", ranked.order},
               {"text", results[i].text},
               {"input_tokens", results[i].input_tokens},
               {"input_over_budget", results[i].input_over_budget},
               {"backend_truncated", results[i].backend_truncated}};
  });
  write_jsonl(o.out, rows);
  std::size_t over = 0, truncated = 0;
  for (const auto& r : results) {
    over += r.input_over_budget;
    truncated += r.backend_truncated;
  }
  return {{"command", "generate"}, {"ranker", o.ranker}, {"k", o.k}, {"instances", instances.size()},
          {"inputs_over_budget", over}, {"backend_truncated", truncated}, {"output", o.out}, {"seconds", timer.seconds()}};
}

struct DenseTrainCliOptions {
  std::string in, out;
  dense::TrainOptions train;
};

inline Json cmd_dense_train(DenseTrainCliOptions o, const GlobalOptions& g) {
  Timer timer;
  const auto instances = load_instances(o.in);
  std::vector<std::pair<Query, std::string>> pairs;
  for (const auto& inst : instances) pairs.push_back({Query::of(inst), inst.reference});
  o.train.seed = g.seed;
  const auto result = dense::dense_train(pairs, o.train);
  write_json(o.out, dense::to_json(result.model));
  return {{"command", "dense-train"}, {"pairs", pairs.size()}, {"epochs", o.train.epochs},
          {"batch_size", o.train.batch_size}, {"epoch_loss", result.epoch_loss}, {"output", o.out},
          {"seconds", timer.seconds()}};
}

inline std::vector<double> parse_doubles(const std::string& csv, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(std::string(flag) + ": not a number: '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError(std::string(flag) + " is empty");
  return out;
}

struct SeqFitOptions {
  std::string in, out;
  std::size_t k = 10;
  std::string alphas = "1";
  std::string betas = "0,0.25,0.5,0.75,1,1.5,2";
};

inline Json cmd_seq_fit(const SeqFitOptions& o) {
  Timer timer;
  SeqGrid grid;
  for (double a : parse_doubles(o.alphas, "--alphas"))
    for (double b : parse_doubles(o.betas, "--betas")) grid.push_back({a, b});
  const auto instances = load_instances(o.in);
  const auto model = seq_fit(instances, o.k, grid);
  double mean = 0.0;
  for (const auto& inst : instances) mean += recall_at_k(seq_rank(model, inst, o.k), rank_rouge2_oracle(inst, o.k), o.k);
  mean /= static_cast<double>(instances.size());
  write_json(o.out, to_json(model));
  return {{"command", "seq-fit"}, {"instances", instances.size()}, {"k", o.k}, {"grid_points", grid.size()},
          {"model", to_json(model)}, {"train_recall_at_k", mean}, {"output", o.out}, {"seconds", timer.seconds()}};
}

// ---------------------------------------------------------------------------
// Entry point

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Keys-to-text entity description toolkit", "keydesc"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--jobs", g.jobs, "Instances processed in parallel")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Seed for stochastic steps");
  app.add_option("--backend", g.backend, "Model backend: base URL or 'mock' (default: $KEYDESC_BACKEND_URL or mock)");
  app.add_option("--mock-embed", g.mock_embed, "Mock embedder style")->check(CLI::IsMember({"hashed", "exact"}));
  app.add_option("--timeout", g.timeout, "Backend request timeout in seconds")->check(CLI::PositiveNumber);
  app.add_option("--max-concurrency", g.max_concurrency, "Concurrent backend requests")->check(CLI::PositiveNumber);
  app.add_option("--retries", g.retries, "Retries for transient backend failures");

  std::function<Json()> action;

  RankOptions rank;
  auto* rank_cmd = app.add_subcommand("rank", "Rank grounding passages per instance");
  rank_cmd->add_option("--method", rank.method)->check(CLI::IsMember({"oracle", "tfidf", "dense", "seq", "neural"}));
  rank_cmd->add_option("--k", rank.k)->check(CLI::PositiveNumber);
  rank_cmd->add_option("--in", rank.in, "Instances JSONL")->required();
  rank_cmd->add_option("--out", rank.out, "Ranked passages JSONL")->required();
  rank_cmd->add_option("--model", rank.model, "Model JSON for dense or seq");
  rank_cmd->callback([&] { action = [&] { return cmd_rank(rank, g); }; });

  auto* eval_cmd = app.add_subcommand("evaluate", "Score hypotheses");
  eval_cmd->require_subcommand(1);
  eval_cmd->fallthrough();
  SurfaceOptions surface;
  auto* surface_cmd = eval_cmd->add_subcommand("surface", "ROUGE, BLEU, token F1, PARENT and optional BERTScore");
  surface_cmd->add_option("--hyp", surface.hyp, "Hypotheses JSONL")->required();
  surface_cmd->add_option("--ref", surface.ref, "References JSONL (text records or instances)")->required();
  surface_cmd->add_option("--triples", surface.triples, "Triples JSONL for PARENT");
  surface_cmd->add_option("--out", surface.out, "Per-line scores JSONL");
  surface_cmd->add_flag("--bertscore", surface.bertscore, "Add BERTScore from backend token embeddings");
  surface_cmd->callback([&] { action = [&] { return cmd_surface(surface, g); }; });

  MafeCliOptions mafe_opts;
  auto* mafe_cmd = eval_cmd->add_subcommand("mafe", "Question-answering based factual evaluation");
  mafe_cmd->add_option("--hyp", mafe_opts.hyp, "Hypotheses JSONL")->required();
  mafe_cmd->add_option("--instances", mafe_opts.instances, "Instances JSONL")->required();
  mafe_cmd->add_option("--out", mafe_opts.out, "Per-instance reports JSONL")->required();
  mafe_cmd->add_flag("--filter-questions", mafe_opts.filter, "Drop questions not answerable from their own source");
  mafe_cmd->add_option("--filter-threshold", mafe_opts.filter_threshold)->check(CLI::Range(0.0, 1.0));
  mafe_cmd->add_option("--max-spans", mafe_opts.max_spans, "Answer spans per sentence (0 = all)");
  mafe_cmd->callback([&] { action = [&] { return cmd_mafe(mafe_opts, g); }; });

  BuildOptions build;
  auto* build_cmd = app.add_subcommand("build-dataset", "Build instances from raw section records");
  build_cmd->add_option("--raw", build.raw, "Raw section records JSONL")->required();
  build_cmd->add_option("--out", build.out, "Instances JSONL")->required();
  build_cmd->add_option("--bert-thresh", build.thresholds.bert)->check(CLI::Range(0.0, 1.0));
  build_cmd->add_option("--rougeL-thresh", build.thresholds.rouge_l)->check(CLI::Range(0.0, 1.0));
  build_cmd->add_option("--ground-thresh", build.thresholds.grounding)->check(CLI::Range(0.0, 1.0));
  build_cmd->callback([&] { action = [&] { return cmd_build(build, g, err); }; });

  std::string stats_in, stats_out;
  auto* stats_cmd = app.add_subcommand("stats", "Dataset statistics");
  stats_cmd->add_option("--in", stats_in, "Instances JSONL")->required();
  stats_cmd->add_option("--out", stats_out, "Statistics JSON");
  stats_cmd->callback([&] { action = [&] { return cmd_stats(stats_in, stats_out); }; });

  std::string ext_in, ext_out;
  auto* ext_cmd = app.add_subcommand("extractive", "Extractive baseline descriptions");
  ext_cmd->add_option("--instances", ext_in, "Instances JSONL")->required();
  ext_cmd->add_option("--out", ext_out, "Descriptions JSONL")->required();
  ext_cmd->callback([&] { action = [&] { return cmd_extractive(ext_in, ext_out, g); }; });

  GenerateOptions gen;
  auto* gen_cmd = app.add_subcommand("generate", "Abstractive descriptions via the generate backend");
  gen_cmd->add_option("--instances", gen.in, "Instances JSONL")->required();
  gen_cmd->add_option("--out", gen.out, "Descriptions JSONL")->required();
  gen_cmd->add_option("--ranker", gen.ranker)->check(CLI::IsMember({"oracle", "tfidf", "dense", "seq", "neural"}));
  gen_cmd->add_option("--k", gen.k)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--model", gen.model, "Model JSON for dense or seq rankers");
  gen_cmd->add_option("--max-input-tokens", gen.max_input_tokens)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--max-tokens", gen.max_tokens, "Output token budget passed to the backend");
  gen_cmd->callback([&] { action = [&] { return cmd_generate(gen, g); }; });

  DenseTrainCliOptions dt;
  auto* dt_cmd = app.add_subcommand("dense-train", "Train the dense passage ranker");
  dt_cmd->add_option("--in", dt.in, "Training instances JSONL")->required();
  dt_cmd->add_option("--out", dt.out, "Model JSON")->required();
  dt_cmd->add_option("--batch-size", dt.train.batch_size)->check(CLI::Range(2, 1 << 20));
  dt_cmd->add_option("--lr", dt.train.learning_rate)->check(CLI::PositiveNumber);
  dt_cmd->add_option("--epochs", dt.train.epochs);
  dt_cmd->add_option("--embed-dim", dt.train.embed_dim)->check(CLI::PositiveNumber);
  dt_cmd->add_option("--hash-dim", dt.train.features.hash_dim)->check(CLI::PositiveNumber);
  dt_cmd->callback([&] { action = [&] { return cmd_dense_train(dt, g); }; });

  SeqFitOptions sf;
  auto* sf_cmd = app.add_subcommand("seq-fit", "Grid-search the sequential ranker");
  sf_cmd->add_option("--in", sf.in, "Training instances JSONL")->required();
  sf_cmd->add_option("--out", sf.out, "Model JSON")->required();
  sf_cmd->add_option("--k", sf.k)->check(CLI::PositiveNumber);
  sf_cmd->add_option("--alphas", sf.alphas, "Comma-separated relevance weights");
  sf_cmd->add_option("--betas", sf.betas, "Comma-separated redundancy weights");
  sf_cmd->callback([&] { action = [&] { return cmd_seq_fit(sf); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << Json{{"error", "usage"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  }

  try {
    g.backend_config().validate();
    const auto summary = action();
    out << summary.dump() << '\n';
    return 0;
  } catch (const UsageError& e) {
    err << Json{{"error", "usage"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    err << Json{{"error", "usage"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << error_json(e).dump() << '\n';
    return 1;
  }
}

}  // namespace keydesc::cli

#endif  // KEYDESC_CLI_HPP
