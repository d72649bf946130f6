#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "phenokg/error.hpp"
#include "phenokg/util.hpp"

namespace phenokg {

struct ChatRequest {
  std::string system;
  std::string user;
  double temperature = 0.0;
  int max_tokens = 2048;
  std::string request_tag;
};

/// Throws Error(Domain) for an empty user message, a non-finite or negative
/// temperature, or a non-positive token budget.
void validate(const ChatRequest& request);

struct TokenUsage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct ChatResponse {
  std::string text;
  TokenUsage usage;
  int attempts = 1;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_backoff{500};
};

/// Delay slept before attempt 2, 3, ...: base * 2^(n-1). Non-decreasing.
std::vector<std::chrono::milliseconds> backoff_schedule(const RetryPolicy& policy);

enum class BackendKind { Http, Replay };

struct BackendConfig {
  BackendKind kind = BackendKind::Replay;
  std::string endpoint_url;  // http only, e.g. http://localhost:8000/v1/chat/completions
  std::string api_key;
  std::string model_name;
  RetryPolicy retry;
  std::chrono::milliseconds timeout{120000};
  int max_in_flight = 4;
  std::filesystem::path cassette_path;  // replay only
};

/// Every problem with the config, empty when valid.
std::vector<std::string> config_problems(const BackendConfig& config);
/// Throws Error(Config) listing all problems.
void validate(const BackendConfig& config);

/// PHENOKG_LLM_URL and PHENOKG_LLM_API_KEY override the file settings.
BackendConfig apply_env_overrides(BackendConfig config);

/// Stable 128-bit hex digest of (system, user). Cassettes key on this.
std::string request_hash(const ChatRequest& request);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// Must be safe to call from several threads at once.
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;
Sleeper real_sleeper();

/// Outcome of one POST with retries: parsed JSON body and attempts used.
struct HttpResult {
  json body;
  int attempts = 0;
};

/// POSTs `body` to `url`, retrying transport failures, 429 and 5xx with the
/// policy's backoff. Other statuses fail immediately. Throws
/// BackendError(BackendUnavailable) carrying the last status.
HttpResult post_json_with_retry(const std::string& url, const std::string& api_key, const json& body,
                                const RetryPolicy& retry, std::chrono::milliseconds timeout,
                                const Sleeper& sleeper);

/// OpenAI-compatible chat-completions client.
class HttpBackend : public ChatBackend {
 public:
  explicit HttpBackend(BackendConfig config, Sleeper sleeper = real_sleeper());
  ChatResponse complete(const ChatRequest& request) override;

  /// Request body as sent on the wire.
  static json request_body(const std::string& model, const ChatRequest& request);

 private:
  BackendConfig config_;
  Sleeper sleeper_;
};

/// Recorded (request hash -> response text) pairs. JSON Lines `{hash, response}`.
class Cassette {
 public:
  static Cassette load(const std::filesystem::path& path);
  static Cassette parse(std::string_view text);

  void add(const ChatRequest& request, std::string response);
  void add(std::string hash, std::string response);
  const std::string* find(const std::string& hash) const;
  std::size_t size() const { return entries_.size(); }

  /// Entries sorted by hash, one per line.
  std::string to_jsonl() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string> entries_;
};

class ReplayBackend : public ChatBackend {
 public:
  explicit ReplayBackend(Cassette cassette) : cassette_(std::move(cassette)) {}
  /// Throws BackendError(ReplayMiss) naming the request hash.
  ChatResponse complete(const ChatRequest& request) override;

 private:
  Cassette cassette_;
};

/// Answers through a caller-supplied function; the function may throw to
/// simulate failures.
class ScriptedBackend : public ChatBackend {
 public:
  using Script = std::function<std::string(const ChatRequest&)>;
  explicit ScriptedBackend(Script script) : script_(std::move(script)) {}
  ChatResponse complete(const ChatRequest& request) override;

 private:
  Script script_;
};

/// Forwards to another backend and keeps every successful exchange as a
/// cassette.
class RecordingBackend : public ChatBackend {
 public:
  explicit RecordingBackend(ChatBackend& inner) : inner_(inner) {}
  ChatResponse complete(const ChatRequest& request) override;
  Cassette cassette() const;

 private:
  ChatBackend& inner_;
  mutable std::mutex mu_;
  Cassette cassette_;
};

std::unique_ptr<ChatBackend> make_backend(const BackendConfig& config);

/// One-shot helper: builds the configured backend and completes one request.
ChatResponse complete(const BackendConfig& config, const ChatRequest& request);

struct BatchEntry {
  std::optional<ChatResponse> response;
  std::optional<Error> error;

  bool ok() const { return response.has_value(); }
};

/// Runs every request with at most `max_in_flight` outstanding. Results are
/// positional; a failing entry never affects the others.
std::vector<BatchEntry> complete_batch(ChatBackend& backend, const std::vector<ChatRequest>& requests,
                                       int max_in_flight);

/// Runs `requests` against `live` and writes their responses as a cassette.
/// Throws if any request fails; nothing is written in that case.
Cassette record_cassette(ChatBackend& live, const std::vector<ChatRequest>& requests,
                         const std::filesystem::path& output_path, int max_in_flight = 1);

}  // namespace phenokg
