#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "phenokg/llm.hpp"
#include "phenokg/util.hpp"

namespace phenokg::cli {

inline constexpr const char* kVersion = "phenokg 0.1.0";

/// Collects configuration problems so they can be reported together.
class Problems {
 public:
  void add(std::string problem) { items_.push_back(std::move(problem)); }
  bool empty() const { return items_.empty(); }
  /// Throws Error(Config) listing every problem.
  void raise_if_any(std::string_view what = "invalid configuration") const;

 private:
  std::vector<std::string> items_;
};

/// Reads a JSON config file; an absent path yields an empty object.
json load_config(const std::optional<std::string>& path);

/// Flag value when given, else config value under `key`, else `fallback`.
template <typename T>
T pick(const std::optional<T>& flag, const json& config, const char* key, T fallback, Problems& problems) {
  if (flag) return *flag;
  if (!config.contains(key)) return fallback;
  try {
    return config.at(key).get<T>();
  } catch (const json::exception&) {
    problems.add(std::string("config field '") + key + "' has the wrong type");
    return fallback;
  }
}

void require_file(const std::string& path, const char* what, Problems& problems);

/// Backend settings from the config's "backend" object, flags and the
/// environment (PHENOKG_LLM_URL, PHENOKG_LLM_API_KEY), in increasing priority
/// for flags over config and env over both for url/key.
struct BackendFlags {
  std::optional<std::string> kind, endpoint, model, cassette;
  std::optional<int> max_in_flight, max_attempts, timeout_ms, backoff_ms;
};
BackendConfig backend_config(const BackendFlags& flags, const json& config, Problems& problems);
json to_json(const BackendConfig& c);

/// Output directory with a manifest: command, arguments, effective
/// settings, and FNV-1a hashes of every input and output file.
class RunDir {
 public:
  RunDir(std::filesystem::path dir, std::string command, std::vector<std::string> argv);

  void input(const std::filesystem::path& path);
  std::filesystem::path write(const std::string& name, std::string_view content);
  json& settings() { return settings_; }
  const std::filesystem::path& dir() const { return dir_; }
  void finish();

 private:
  std::filesystem::path dir_;
  std::string command_;
  std::vector<std::string> argv_;
  json settings_ = json::object();
  json inputs_ = json::array();
  json outputs_ = json::array();
};

}  // namespace phenokg::cli
