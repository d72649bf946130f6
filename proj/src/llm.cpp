#include "phenokg/llm.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

namespace phenokg {

void validate(const ChatRequest& request) {
  if (request.user.empty()) throw Error(ErrorKind::Domain, "chat request has an empty user message");
  if (!std::isfinite(request.temperature) || request.temperature < 0)
    throw Error(ErrorKind::Domain, "temperature must be finite and >= 0");
  if (request.max_tokens <= 0) throw Error(ErrorKind::Domain, "max_tokens must be positive");
}

std::vector<std::chrono::milliseconds> backoff_schedule(const RetryPolicy& policy) {
  std::vector<std::chrono::milliseconds> delays;
  auto d = policy.base_backoff;
  for (int attempt = 2; attempt <= policy.max_attempts; ++attempt) {
    delays.push_back(d);
    d *= 2;
  }
  return delays;
}

std::vector<std::string> config_problems(const BackendConfig& c) {
  std::vector<std::string> problems;
  if (c.kind == BackendKind::Http && c.endpoint_url.empty()) problems.push_back("http backend requires endpoint_url");
  if (c.kind == BackendKind::Http && !c.endpoint_url.empty() && c.endpoint_url.rfind("http://", 0) != 0 &&
      c.endpoint_url.rfind("https://", 0) != 0)
    problems.push_back("endpoint_url must start with http:// or https://");
  if (c.kind == BackendKind::Replay && c.cassette_path.empty())
    problems.push_back("replay backend requires cassette_path");
  if (c.retry.max_attempts < 1) problems.push_back("retry.max_attempts must be >= 1");
  if (c.retry.base_backoff.count() < 0) problems.push_back("retry.base_backoff must be >= 0");
  if (c.timeout.count() <= 0) problems.push_back("timeout must be positive");
  if (c.max_in_flight < 1) problems.push_back("max_in_flight must be >= 1");
  return problems;
}

void validate(const BackendConfig& config) {
  auto problems = config_problems(config);
  if (problems.empty()) return;
  std::string msg = "invalid backend config:";
  for (const auto& p : problems) msg += "\n  - " + p;
  throw Error(ErrorKind::Config, msg);
}

BackendConfig apply_env_overrides(BackendConfig config) {
  if (const char* url = std::getenv("PHENOKG_LLM_URL"); url && *url) config.endpoint_url = url;
  if (const char* key = std::getenv("PHENOKG_LLM_API_KEY"); key && *key) config.api_key = key;
  return config;
}

std::string request_hash(const ChatRequest& request) {
  // length-prefixed so ("ab","c") and ("a","bc") differ
  std::string material = std::to_string(request.system.size()) + ":" + request.system +
                         std::to_string(request.user.size()) + ":" + request.user;
  return hex64(fnv1a64(material)) + hex64(fnv1a64(material, 0x84222325cbf29ce4ULL));
}

Sleeper real_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

// ---- HTTP ----

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorKind::Config, "malformed url " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool retryable(int status) { return status == 429 || status >= 500; }

}  // namespace

HttpResult post_json_with_retry(const std::string& url, const std::string& api_key, const json& body,
                                const RetryPolicy& retry, std::chrono::milliseconds timeout,
                                const Sleeper& sleeper) {
  const SplitUrl target = split_url(url);
  const auto delays = backoff_schedule(retry);
  const std::string payload = body.dump();
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

  int last_status = 0;
  std::string last_detail;
  for (int attempt = 1; attempt <= retry.max_attempts; ++attempt) {
    if (attempt > 1) sleeper(delays[static_cast<std::size_t>(attempt - 2)]);
    httplib::Client client(target.origin);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    auto res = client.Post(target.path, headers, payload, "application/json");
    if (!res) {
      last_status = 0;
      last_detail = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    last_status = res->status;
    if (res->status >= 200 && res->status < 300) {
      try {
        return HttpResult{json::parse(res->body), attempt};
      } catch (const json::parse_error& e) {
        throw BackendError(ErrorKind::BackendUnavailable, "non-JSON response body from " + url + ": " + e.what(),
                           res->status, attempt);
      }
    }
    last_detail = "HTTP " + std::to_string(res->status);
    if (!retryable(res->status)) {
      throw BackendError(ErrorKind::BackendUnavailable, url + " rejected request: " + last_detail, last_status,
                         attempt);
    }
  }
  throw BackendError(ErrorKind::BackendUnavailable,
                     url + " unavailable after " + std::to_string(retry.max_attempts) + " attempts (" +
                         last_detail + ")",
                     last_status, retry.max_attempts);
}

HttpBackend::HttpBackend(BackendConfig config, Sleeper sleeper)
    : config_(std::move(config)), sleeper_(std::move(sleeper)) {
  if (config_.kind != BackendKind::Http) throw Error(ErrorKind::Config, "HttpBackend needs an http config");
  validate(config_);
}

json HttpBackend::request_body(const std::string& model, const ChatRequest& request) {
  json messages = json::array();
  if (!request.system.empty()) messages.push_back({{"role", "system"}, {"content", request.system}});
  messages.push_back({{"role", "user"}, {"content", request.user}});
  return json{{"model", model},
              {"messages", messages},
              {"temperature", request.temperature},
              {"max_tokens", request.max_tokens}};
}

ChatResponse HttpBackend::complete(const ChatRequest& request) {
  validate(request);
  auto result = post_json_with_retry(config_.endpoint_url, config_.api_key,
                                     request_body(config_.model_name, request), config_.retry, config_.timeout,
                                     sleeper_);
  const json& body = result.body;
  ChatResponse out;
  out.attempts = result.attempts;
  try {
    out.text = body.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw BackendError(ErrorKind::BackendUnavailable,
                       "response lacks choices[0].message.content: " + std::string(e.what()), 200, result.attempts);
  }
  if (body.contains("usage") && body["usage"].is_object()) {
    out.usage.prompt_tokens = body["usage"].value("prompt_tokens", 0);
    out.usage.completion_tokens = body["usage"].value("completion_tokens", 0);
  }
  return out;
}

// ---- cassettes ----

Cassette Cassette::parse(std::string_view text) {
  Cassette c;
  for_each_jsonl_text(text, [&](std::size_t line, const json& j) {
    if (!j.is_object() || !j.contains("hash") || !j["hash"].is_string() || !j.contains("response") ||
        !j["response"].is_string())
      throw Error(ErrorKind::Parse, "cassette line " + std::to_string(line) + ": expected {hash, response}");
    c.add(j["hash"].get<std::string>(), j["response"].get<std::string>());
  });
  return c;
}

Cassette Cassette::load(const std::filesystem::path& path) {
  try {
    return parse(read_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Io) throw;
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void Cassette::add(const ChatRequest& request, std::string response) {
  add(request_hash(request), std::move(response));
}

void Cassette::add(std::string hash, std::string response) { entries_[std::move(hash)] = std::move(response); }

const std::string* Cassette::find(const std::string& hash) const {
  auto it = entries_.find(hash);
  return it == entries_.end() ? nullptr : &it->second;
}

std::string Cassette::to_jsonl() const {
  std::string out;
  for (const auto& [hash, response] : entries_) out += json{{"hash", hash}, {"response", response}}.dump() + "\n";
  return out;
}

void Cassette::save(const std::filesystem::path& path) const { write_file(path, to_jsonl()); }

ChatResponse ReplayBackend::complete(const ChatRequest& request) {
  validate(request);
  const std::string hash = request_hash(request);
  const std::string* hit = cassette_.find(hash);
  if (!hit) throw BackendError(ErrorKind::ReplayMiss, "replay miss for request hash " + hash);
  return ChatResponse{*hit, {}, 1};
}

ChatResponse ScriptedBackend::complete(const ChatRequest& request) {
  validate(request);
  return ChatResponse{script_(request), {}, 1};
}

ChatResponse RecordingBackend::complete(const ChatRequest& request) {
  ChatResponse resp = inner_.complete(request);
  std::lock_guard lock(mu_);
  cassette_.add(request, resp.text);
  return resp;
}

Cassette RecordingBackend::cassette() const {
  std::lock_guard lock(mu_);
  return cassette_;
}

std::unique_ptr<ChatBackend> make_backend(const BackendConfig& config) {
  validate(config);
  if (config.kind == BackendKind::Http) return std::make_unique<HttpBackend>(config);
  return std::make_unique<ReplayBackend>(Cassette::load(config.cassette_path));
}

ChatResponse complete(const BackendConfig& config, const ChatRequest& request) {
  return make_backend(config)->complete(request);
}

// ---- batching ----

std::vector<BatchEntry> complete_batch(ChatBackend& backend, const std::vector<ChatRequest>& requests,
                                       int max_in_flight) {
  if (max_in_flight < 1) throw Error(ErrorKind::Domain, "max_in_flight must be >= 1");
  std::vector<BatchEntry> results(requests.size());
  if (requests.empty()) return results;

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= requests.size()) return;
      try {
        results[i].response = backend.complete(requests[i]);
      } catch (const Error& e) {
        results[i].error = e;
      } catch (const std::exception& e) {
        results[i].error = Error(ErrorKind::BackendUnavailable, e.what());
      }
    }
  };
  const std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(max_in_flight), requests.size());
  if (n_workers == 1) {
    worker();
    return results;
  }
  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return results;
}

Cassette record_cassette(ChatBackend& live, const std::vector<ChatRequest>& requests,
                         const std::filesystem::path& output_path, int max_in_flight) {
  auto results = complete_batch(live, requests, max_in_flight);
  Cassette cassette;
  std::size_t failures = 0;
  std::string first_failure;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (results[i].ok()) {
      cassette.add(requests[i], results[i].response->text);
    } else {
      if (failures++ == 0) first_failure = results[i].error->what();
    }
  }
  if (failures > 0)
    throw Error(ErrorKind::BackendUnavailable, std::to_string(failures) + " of " + std::to_string(requests.size()) +
                                                   " requests failed while recording; first: " + first_failure);
  cassette.save(output_path);
  return cassette;
}

}  // namespace phenokg
