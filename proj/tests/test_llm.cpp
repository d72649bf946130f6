#include <httplib.h>

#include <atomic>
#include <thread>

#include "helpers.hpp"
#include "phenokg/llm.hpp"

using namespace phenokg;
using namespace std::chrono_literals;

namespace {

ChatRequest req(std::string user, std::string tag = "t") {
  return ChatRequest{"system text", std::move(user), 0.0, 256, std::move(tag)};
}

/// Local chat-completions stub: replies with `statuses[i]` on call i, then
/// 200 once the list runs out.
class StubServer {
 public:
  explicit StubServer(std::vector<int> statuses) : statuses_(std::move(statuses)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& rq, httplib::Response& rs) {
      const int i = calls_++;
      last_body_ = rq.body;
      const int status = i < static_cast<int>(statuses_.size()) ? statuses_[i] : 200;
      rs.status = status;
      if (status == 200) {
        json body{{"choices", json::array({json{{"message", {{"role", "assistant"}, {"content", "ok"}}}}})},
                  {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 2}}}};
        rs.set_content(body.dump(), "application/json");
      } else {
        rs.set_content("{\"error\":\"busy\"}", "application/json");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
  int calls() const { return calls_; }
  std::string last_body() const { return last_body_; }

 private:
  std::vector<int> statuses_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<int> calls_{0};
  std::string last_body_;
};

BackendConfig http_config(const std::string& url, int max_attempts) {
  BackendConfig c;
  c.kind = BackendKind::Http;
  c.endpoint_url = url;
  c.model_name = "stub-model";
  c.retry.max_attempts = max_attempts;
  c.retry.base_backoff = 10ms;
  c.timeout = 5000ms;
  return c;
}

}  // namespace

TEST_SUITE("llm") {
  TEST_CASE("replay returns the recorded text") {
    Cassette c;
    c.add(req("P"), "ok");
    ReplayBackend backend(c);
    CHECK(backend.complete(req("P")).text == "ok");
    CHECK(backend.complete(req("P", "other-tag")).text == "ok");
  }

  TEST_CASE("replay miss names the hash") {
    ReplayBackend backend{Cassette{}};
    const auto r = req("never recorded");
    CHECK_KIND(backend.complete(r), ErrorKind::ReplayMiss);
    CHECK(testutil::error_message([&] { backend.complete(r); }).find(request_hash(r)) != std::string::npos);
  }

  TEST_CASE("request hash covers system and user but not sampling settings") {
    auto a = req("x");
    auto b = a;
    b.temperature = 0.7;
    b.max_tokens = 10;
    CHECK(request_hash(a) == request_hash(b));
    b.system = "different";
    CHECK(request_hash(a) != request_hash(b));
    CHECK(request_hash(ChatRequest{"ab", "c", 0.0, 1, ""}) != request_hash(ChatRequest{"a", "bc", 0.0, 1, ""}));
  }

  TEST_CASE("request validation") {
    CHECK_KIND(validate(req("")), ErrorKind::Domain);
    auto r = req("x");
    r.temperature = -1;
    CHECK_KIND(validate(r), ErrorKind::Domain);
    r = req("x");
    r.max_tokens = 0;
    CHECK_KIND(validate(r), ErrorKind::Domain);
  }

  TEST_CASE("http stub 500, 500, 200 succeeds on the third attempt") {
    StubServer stub({500, 500});
    std::vector<std::chrono::milliseconds> slept;
    HttpBackend backend(http_config(stub.url(), 3), [&](std::chrono::milliseconds d) { slept.push_back(d); });
    const auto resp = backend.complete(req("hello"));
    CHECK(resp.text == "ok");
    CHECK(resp.attempts == 3);
    CHECK(resp.usage.prompt_tokens == 11);
    CHECK(stub.calls() == 3);
    CHECK(slept == std::vector{10ms, 20ms});
    const json sent = json::parse(stub.last_body());
    CHECK(sent["model"] == "stub-model");
    CHECK(sent["messages"].size() == 2);
  }

  TEST_CASE("http stub always 500 exhausts attempts") {
    StubServer stub({500, 500, 500, 500});
    HttpBackend backend(http_config(stub.url(), 2), [](std::chrono::milliseconds) {});
    try {
      backend.complete(req("hello"));
      FAIL("expected BackendError");
    } catch (const BackendError& e) {
      CHECK(e.kind() == ErrorKind::BackendUnavailable);
      CHECK(e.last_status() == 500);
      CHECK(e.attempts() == 2);
    }
    CHECK(stub.calls() == 2);
  }

  TEST_CASE("client errors are not retried") {
    StubServer stub({400, 400});
    HttpBackend backend(http_config(stub.url(), 3), [](std::chrono::milliseconds) {});
    CHECK_KIND(backend.complete(req("hello")), ErrorKind::BackendUnavailable);
    CHECK(stub.calls() == 1);
  }

  TEST_CASE("unreachable endpoint reports status 0") {
    HttpBackend backend(http_config("http://127.0.0.1:1/v1/chat/completions", 2), [](std::chrono::milliseconds) {});
    try {
      backend.complete(req("hello"));
      FAIL("expected BackendError");
    } catch (const BackendError& e) {
      CHECK(e.last_status() == 0);
      CHECK(e.attempts() == 2);
    }
  }

  TEST_CASE("backoff schedule doubles and never decreases") {
    for (int attempts = 1; attempts <= 8; ++attempts) {
      const auto s = backoff_schedule(RetryPolicy{attempts, 250ms});
      CHECK(s.size() == static_cast<std::size_t>(attempts - 1));
      for (std::size_t i = 1; i < s.size(); ++i) {
        CHECK(s[i] >= s[i - 1]);
        CHECK(s[i] == 2 * s[i - 1]);
      }
    }
  }

  TEST_CASE("config problems are all listed") {
    BackendConfig c;
    c.kind = BackendKind::Http;
    c.max_in_flight = 0;
    c.retry.max_attempts = 0;
    CHECK(config_problems(c).size() >= 3);
    CHECK_KIND(validate(c), ErrorKind::Config);
  }

  TEST_CASE("batch keeps order and isolates failures") {
    ScriptedBackend backend([](const ChatRequest& r) -> std::string {
      if (r.user == "u1") throw Error(ErrorKind::BackendUnavailable, "boom");
      return "re:" + r.user;
    });
    const auto out = complete_batch(backend, {req("u0"), req("u1"), req("u2")}, 2);
    REQUIRE(out.size() == 3);
    CHECK(out[0].ok());
    CHECK(out[0].response->text == "re:u0");
    CHECK_FALSE(out[1].ok());
    CHECK(out[1].error->kind() == ErrorKind::BackendUnavailable);
    CHECK(out[2].response->text == "re:u2");
    CHECK_KIND(complete_batch(backend, {}, 0), ErrorKind::Domain);
  }

  TEST_CASE("batch never exceeds max_in_flight") {
    std::atomic<int> live{0}, peak{0};
    ScriptedBackend backend([&](const ChatRequest& r) {
      const int now = ++live;
      int p = peak.load();
      while (now > p && !peak.compare_exchange_weak(p, now)) {
      }
      std::this_thread::sleep_for(2ms);
      --live;
      return r.user;
    });
    std::vector<ChatRequest> reqs;
    for (int i = 0; i < 10; ++i) reqs.push_back(req("u" + std::to_string(i)));
    const auto out = complete_batch(backend, reqs, 3);
    CHECK(peak.load() <= 3);
    for (int i = 0; i < 10; ++i) CHECK(out[i].response->text == "u" + std::to_string(i));
  }

  TEST_CASE("record then replay yields the same texts") {
    testutil::TempDir dir("llm_record");
    ScriptedBackend live([](const ChatRequest& r) { return "answer to " + r.user; });
    std::vector<ChatRequest> reqs{req("a"), req("b"), req("c")};
    record_cassette(live, reqs, dir / "c.jsonl", 2);
    ReplayBackend replay(Cassette::load(dir / "c.jsonl"));
    for (const auto& r : reqs) CHECK(replay.complete(r).text == live.complete(r).text);
    CHECK_KIND(replay.complete(req("a ")), ErrorKind::ReplayMiss);
  }

  TEST_CASE("empty request list writes an empty valid cassette") {
    testutil::TempDir dir("llm_empty");
    ScriptedBackend live([](const ChatRequest&) { return std::string("x"); });
    record_cassette(live, {}, dir / "c.jsonl");
    CHECK(Cassette::load(dir / "c.jsonl").size() == 0);
  }

  TEST_CASE("failed recording writes nothing") {
    testutil::TempDir dir("llm_fail");
    ScriptedBackend live([](const ChatRequest& r) -> std::string {
      if (r.user == "b") throw Error(ErrorKind::BackendUnavailable, "down");
      return "x";
    });
    CHECK_KIND(record_cassette(live, {req("a"), req("b")}, dir / "c.jsonl"), ErrorKind::BackendUnavailable);
    CHECK_FALSE(std::filesystem::exists(dir / "c.jsonl"));
  }

  TEST_CASE("cassette text round-trips and is sorted") {
    Cassette c;
    c.add("bbb", "two");
    c.add("aaa", "one\nwith newline");
    const auto text = c.to_jsonl();
    CHECK(text.find("aaa") < text.find("bbb"));
    const Cassette back = Cassette::parse(text);
    CHECK(*back.find("aaa") == "one\nwith newline");
    CHECK(back.to_jsonl() == text);
    CHECK_KIND(Cassette::parse("{\"hash\":1}\n"), ErrorKind::Parse);
  }

  TEST_CASE("recording backend captures exchanges") {
    ScriptedBackend inner([](const ChatRequest& r) { return r.user + "!"; });
    RecordingBackend rec(inner);
    rec.complete(req("x"));
    rec.complete(req("y"));
    ReplayBackend replay(rec.cassette());
    CHECK(replay.complete(req("y")).text == "y!");
  }
}
