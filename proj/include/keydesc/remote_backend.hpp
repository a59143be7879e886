#ifndef KEYDESC_REMOTE_BACKEND_HPP
#define KEYDESC_REMOTE_BACKEND_HPP

// JSON-over-HTTP client for the /v1 backend protocol. Character offsets on
// the wire are code point offsets; AnswerSpan offsets are byte offsets.

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "keydesc/backends.hpp"
#include "keydesc/errors.hpp"

namespace keydesc {

inline constexpr const char* kBackendEnvVar = "KEYDESC_BACKEND_URL";

struct BackendConfig {
  /// Base URL such as "http://localhost:8000", or "mock".
  std::string url = "mock";
  double timeout_seconds = 30.0;
  std::size_t max_concurrency = 4;
  std::size_t retries = 2;
  MockOptions mock;

  bool is_mock() const { return url == "mock"; }

  void validate() const {
    if (!(timeout_seconds > 0.0)) throw ConfigError("backend timeout must be > 0");
    if (max_concurrency < 1) throw ConfigError("backend concurrency must be >= 1");
    if (!is_mock() && !url.starts_with("http://") && !url.starts_with("https://"))
      throw ConfigError("backend must be 'mock' or an http(s) URL, got '" + url + "'");
  }

  /// Value of KEYDESC_BACKEND_URL, or "mock" when unset.
  static std::string url_from_env() {
    const char* v = std::getenv(kBackendEnvVar);
    return v && *v ? std::string(v) : std::string("mock");
  }
};

namespace detail {

class Semaphore {
 public:
  explicit Semaphore(std::size_t n) : available_(n) {}
  void acquire() {
    std::unique_lock lock(m_);
    cv_.wait(lock, [&] { return available_ > 0; });
    --available_;
  }
  void release() {
    {
      std::lock_guard lock(m_);
      ++available_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex m_;
  std::condition_variable cv_;
  std::size_t available_;
};

}  // namespace detail

class RemoteBackend : public ModelBackend {
 public:
  explicit RemoteBackend(BackendConfig config) : config_(std::move(config)), slots_(config_.max_concurrency) {
    config_.validate();
    if (config_.is_mock()) throw ConfigError("RemoteBackend needs an http(s) URL");
    // Split "http://host:port/prefix" into origin and path prefix.
    const auto scheme_end = config_.url.find("://") + 3;
    const auto path_start = config_.url.find('/', scheme_end);
    origin_ = config_.url.substr(0, path_start);
    prefix_ = path_start == std::string::npos ? "" : config_.url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }

  const BackendConfig& config() const noexcept { return config_; }

  std::string qg(const AnswerSpan& span) override {
    check_span(span);
    nlohmann::json req = {{"sentence", span.sentence},
                          {"answer_start", unicode::byte_to_char_offset(span.sentence, span.start)},
                          {"answer_end", unicode::byte_to_char_offset(span.sentence, span.end)}};
    const auto res = post("/v1/qg", req);
    return string_field(res, "/v1/qg", "question");
  }

  QaResult qa(std::string_view question, std::string_view context) override {
    const auto res = post("/v1/qa", {{"question", question}, {"context", context}});
    QaResult r;
    r.answer = string_field(res, "/v1/qa", "answer");
    const auto u = res.find("unanswerable");
    if (u == res.end() || !u->is_boolean()) throw ProtocolError("/v1/qa", "unanswerable");
    r.unanswerable = u->get<bool>();
    const auto c = res.find("confidence");
    if (c == res.end() || !c->is_number()) throw ProtocolError("/v1/qa", "confidence");
    r.confidence = c->get<double>();
    return r;
  }

  NliVerdict nli(std::string_view premise, std::string_view hypothesis) override {
    const auto res = post("/v1/nli", {{"premise", premise}, {"hypothesis", hypothesis}});
    const auto label = parse_nli_label(string_field(res, "/v1/nli", "label"));
    if (!label) throw ProtocolError("/v1/nli", "label");
    const auto p = res.find("probs");
    if (p == res.end() || !p->is_array() || p->size() != 3) throw ProtocolError("/v1/nli", "probs");
    NliVerdict v;
    v.label = *label;
    for (std::size_t i = 0; i < 3; ++i) {
      if (!(*p)[i].is_number()) throw ProtocolError("/v1/nli", "probs");
      v.probs[i] = (*p)[i].get<double>();
    }
    try {
      v.validate();
    } catch (const PreconditionError& e) {
      throw ProtocolError("/v1/nli", e.what());
    }
    return v;
  }

  Embeddings embed(const std::vector<std::string>& texts, EmbedMode mode) override {
    const auto res = post("/v1/embed", {{"texts", texts}, {"mode", mode == EmbedMode::token ? "token" : "sequence"}});
    const auto d = res.find("dim");
    if (d == res.end() || !d->is_number_unsigned() || d->get<std::size_t>() == 0) throw ProtocolError("/v1/embed", "dim");
    Embeddings out;
    out.dim = d->get<std::size_t>();
    const auto v = res.find("vectors");
    if (v == res.end() || !v->is_array() || v->size() != texts.size()) throw ProtocolError("/v1/embed", "vectors");
    auto to_vector = [&](const nlohmann::json& j) {
      if (!j.is_array() || j.size() != out.dim) throw ProtocolError("/v1/embed", "vectors");
      Vector vec;
      vec.reserve(out.dim);
      for (const auto& x : j) {
        if (!x.is_number()) throw ProtocolError("/v1/embed", "vectors");
        vec.push_back(x.get<double>());
      }
      return vec;
    };
    for (const auto& per_text : *v) {
      if (mode == EmbedMode::sequence) {
        out.sequences.push_back(to_vector(per_text));
      } else {
        if (!per_text.is_array()) throw ProtocolError("/v1/embed", "vectors");
        std::vector<Vector> toks;
        for (const auto& t : per_text) toks.push_back(to_vector(t));
        out.tokens.push_back(std::move(toks));
      }
    }
    return out;
  }

  std::vector<AnswerSpan> spans(std::string_view sentence) override {
    const auto res = post("/v1/spans", {{"sentence", sentence}});
    const auto s = res.find("spans");
    if (s == res.end() || !s->is_array()) throw ProtocolError("/v1/spans", "spans");
    const std::size_t length = unicode::decode(sentence).size();
    std::vector<AnswerSpan> out;
    for (const auto& j : *s) {
      if (!j.is_object()) throw ProtocolError("/v1/spans", "spans");
      const auto b = j.find("start"), e = j.find("end");
      if (b == j.end() || !b->is_number_unsigned()) throw ProtocolError("/v1/spans", "start");
      if (e == j.end() || !e->is_number_unsigned()) throw ProtocolError("/v1/spans", "end");
      const auto start = b->get<std::size_t>(), end = e->get<std::size_t>();
      if (start >= end || end > length) throw ProtocolError("/v1/spans", "end");
      out.push_back(make_span(std::string(sentence), unicode::char_to_byte_offset(sentence, start),
                              unicode::char_to_byte_offset(sentence, end)));
    }
    return out;
  }

  GenerateResult generate(const std::vector<std::string>& inputs, std::size_t max_tokens) override {
    const auto res = post("/v1/generate", {{"inputs", inputs}, {"max_tokens", max_tokens}});
    GenerateResult r;
    r.text = string_field(res, "/v1/generate", "text");
    // Optional extension: servers may report that they cut the input.
    if (const auto t = res.find("truncated"); t != res.end()) {
      if (!t->is_boolean()) throw ProtocolError("/v1/generate", "truncated");
      r.truncated = t->get<bool>();
    }
    return r;
  }

  std::string key_question(std::string_view entity, std::string_view key) override {
    const std::string prompt = "question: [Entity] " + std::string(entity) + " [Key] " + std::string(key);
    return generate({prompt}, 64).text;
  }

 private:
  static std::string string_field(const nlohmann::json& res, const char* endpoint, const char* field) {
    const auto it = res.find(field);
    if (it == res.end() || !it->is_string()) throw ProtocolError(endpoint, field);
    return it->get<std::string>();
  }

  nlohmann::json post(const std::string& endpoint, const nlohmann::json& body) {
    slots_.acquire();
    struct Release {
      detail::Semaphore& s;
      ~Release() { s.release(); }
    } release{slots_};

    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::duration<double>(config_.timeout_seconds));
    const std::string payload = body.dump();
    std::string last_error;
    for (std::size_t attempt = 0; attempt <= config_.retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(50 * attempt));
      httplib::Client client(origin_);
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_write_timeout(timeout);
      auto res = client.Post(prefix_ + endpoint, payload, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
        continue;
      }
      if (res->status != 200) throw BackendError(endpoint, "HTTP " + std::to_string(res->status) + ": " + res->body);
      try {
        auto j = nlohmann::json::parse(res->body);
        if (!j.is_object()) throw ProtocolError(endpoint, "<body>");
        return j;
      } catch (const nlohmann::json::parse_error&) {
        throw ProtocolError(endpoint, "<body>");
      }
    }
    throw BackendError(endpoint, last_error + " (after " + std::to_string(config_.retries + 1) + " attempts)");
  }

  BackendConfig config_;
  detail::Semaphore slots_;
  std::string origin_;
  std::string prefix_;
};

/// Mock or remote backend for every role.
inline Backends make_backends(const BackendConfig& config) {
  config.validate();
  if (config.is_mock()) return Backends::all(std::make_shared<MockBackend>(config.mock));
  return Backends::all(std::make_shared<RemoteBackend>(config));
}

}  // namespace keydesc

#endif  // KEYDESC_REMOTE_BACKEND_HPP
