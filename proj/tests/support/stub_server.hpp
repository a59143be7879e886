#ifndef KEYDESC_TESTS_STUB_SERVER_HPP
#define KEYDESC_TESTS_STUB_SERVER_HPP

// In-process /v1 server backed by MockBackend, with knobs for injecting
// failures, delays and malformed bodies.

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "keydesc/backends.hpp"
#include "keydesc/unicode.hpp"

namespace keydesc::test_support {

class StubServer {
 public:
  using Json = nlohmann::json;

  explicit StubServer(MockOptions opts = {}) : mock_(opts) {
    route("/v1/qg", [this](const Json& b) {
      const std::string s = b.at("sentence");
      const auto start = unicode::char_to_byte_offset(s, b.at("answer_start").get<std::size_t>());
      const auto end = unicode::char_to_byte_offset(s, b.at("answer_end").get<std::size_t>());
      return Json{{"question", mock_.qg(make_span(s, start, end))}};
    });
    route("/v1/qa", [this](const Json& b) {
      const auto r = mock_.qa(b.at("question").get<std::string>(), b.at("context").get<std::string>());
      return Json{{"answer", r.answer}, {"unanswerable", r.unanswerable}, {"confidence", r.confidence}};
    });
    route("/v1/nli", [this](const Json& b) {
      const auto v = mock_.nli(b.at("premise").get<std::string>(), b.at("hypothesis").get<std::string>());
      return Json{{"label", to_string(v.label)}, {"probs", v.probs}};
    });
    route("/v1/embed", [this](const Json& b) {
      const auto mode = b.at("mode") == "token" ? EmbedMode::token : EmbedMode::sequence;
      const auto e = mock_.embed(b.at("texts").get<std::vector<std::string>>(), mode);
      Json vectors = Json::array();
      if (mode == EmbedMode::token)
        for (const auto& t : e.tokens) vectors.push_back(t);
      else
        for (const auto& s : e.sequences) vectors.push_back(s);
      return Json{{"vectors", vectors}, {"dim", e.dim}};
    });
    route("/v1/spans", [this](const Json& b) {
      const std::string s = b.at("sentence");
      Json spans = Json::array();
      for (const auto& sp : mock_.spans(s))
        spans.push_back({{"start", unicode::byte_to_char_offset(s, sp.start)}, {"end", unicode::byte_to_char_offset(s, sp.end)}});
      return Json{{"spans", spans}};
    });
    route("/v1/generate", [this](const Json& b) {
      const auto r = mock_.generate(b.at("inputs").get<std::vector<std::string>>(), b.at("max_tokens").get<std::size_t>());
      Json out{{"text", r.text}};
      if (report_truncation) out["truncated"] = r.truncated;
      return out;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  StubServer(const StubServer&) = delete;
  StubServer& operator=(const StubServer&) = delete;

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  /// The next n requests answer with this status.
  void fail_next(int n, int status) {
    std::lock_guard lock(m_);
    fail_count_ = n;
    fail_status_ = status;
  }

  /// Replace the body for one endpoint.
  void override_body(const std::string& path, std::string body) {
    std::lock_guard lock(m_);
    overrides_[path] = std::move(body);
  }

  std::atomic<int> delay_ms{0};
  std::atomic<int> requests{0};
  std::atomic<int> max_in_flight{0};
  std::atomic<bool> report_truncation{true};

 private:
  void route(const std::string& path, std::function<Json(const Json&)> fn) {
    server_.Post(path, [this, path, fn](const httplib::Request& req, httplib::Response& res) {
      ++requests;
      const int now = ++in_flight_;
      int prev = max_in_flight.load();
      while (now > prev && !max_in_flight.compare_exchange_weak(prev, now)) {
      }
      if (const int d = delay_ms.load(); d > 0) std::this_thread::sleep_for(std::chrono::milliseconds(d));
      std::optional<std::string> body;
      int status = 200;
      {
        std::lock_guard lock(m_);
        if (fail_count_ > 0) {
          --fail_count_;
          status = fail_status_;
        } else if (auto it = overrides_.find(path); it != overrides_.end()) {
          body = it->second;
        }
      }
      if (status != 200) {
        res.status = status;
        if (status == 429) res.set_header("Retry-After", "0");
        res.set_content(R"({"error":"injected"})", "application/json");
      } else if (body) {
        res.set_content(*body, "application/json");
      } else {
        try {
          res.set_content(fn(Json::parse(req.body)).dump(), "application/json");
        } catch (const std::exception& e) {
          res.status = 400;
          res.set_content(Json{{"error", e.what()}}.dump(), "application/json");
        }
      }
      --in_flight_;
    });
  }

  MockBackend mock_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex m_;
  int fail_count_ = 0;
  int fail_status_ = 500;
  std::map<std::string, std::string> overrides_;
  std::atomic<int> in_flight_{0};
};

}  // namespace keydesc::test_support

#endif  // KEYDESC_TESTS_STUB_SERVER_HPP
