#include "run_dir.hpp"

namespace phenokg::cli {

void Problems::raise_if_any(std::string_view what) const {
  if (items_.empty()) return;
  std::string msg(what);
  msg += ":";
  for (const auto& p : items_) msg += "\n  - " + p;
  throw Error(ErrorKind::Config, msg);
}

json load_config(const std::optional<std::string>& path) {
  if (!path) return json::object();
  json j;
  try {
    j = json::parse(read_file(*path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Config, "config " + *path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::Config, "config " + *path + " must hold a JSON object");
  return j;
}

void require_file(const std::string& path, const char* what, Problems& problems) {
  if (path.empty()) problems.add(std::string(what) + " is required");
  else if (!std::filesystem::is_regular_file(path)) problems.add(std::string(what) + " not found: " + path);
}

BackendConfig backend_config(const BackendFlags& flags, const json& config, Problems& problems) {
  const json b = config.contains("backend") && config["backend"].is_object() ? config["backend"] : json::object();
  BackendConfig c;
  const std::string kind = pick(flags.kind, b, "kind", std::string("replay"), problems);
  if (kind == "http") c.kind = BackendKind::Http;
  else if (kind == "replay") c.kind = BackendKind::Replay;
  else problems.add("backend kind must be http or replay, got '" + kind + "'");
  c.endpoint_url = pick(flags.endpoint, b, "endpoint_url", std::string(), problems);
  c.api_key = pick(std::optional<std::string>{}, b, "api_key", std::string(), problems);
  c.model_name = pick(flags.model, b, "model_name", std::string(), problems);
  c.cassette_path = pick(flags.cassette, b, "cassette_path", std::string(), problems);
  c.max_in_flight = pick(flags.max_in_flight, b, "max_in_flight", 4, problems);
  c.retry.max_attempts = pick(flags.max_attempts, b, "max_attempts", 3, problems);
  c.retry.base_backoff = std::chrono::milliseconds(pick(flags.backoff_ms, b, "base_backoff_ms", 500, problems));
  c.timeout = std::chrono::milliseconds(pick(flags.timeout_ms, b, "timeout_ms", 120000, problems));
  c = apply_env_overrides(c);
  for (auto& p : config_problems(c)) problems.add(p);
  if (c.kind == BackendKind::Replay && !c.cassette_path.empty() && !std::filesystem::is_regular_file(c.cassette_path))
    problems.add("cassette not found: " + c.cassette_path.string());
  return c;
}

json to_json(const BackendConfig& c) {
  // the API key is never written out
  return json{{"kind", c.kind == BackendKind::Http ? "http" : "replay"},
              {"endpoint_url", c.endpoint_url},
              {"model_name", c.model_name},
              {"cassette_path", c.cassette_path},
              {"max_in_flight", c.max_in_flight},
              {"max_attempts", c.retry.max_attempts},
              {"base_backoff_ms", c.retry.base_backoff.count()},
              {"timeout_ms", c.timeout.count()}};
}

namespace {

json file_entry(const std::filesystem::path& path, std::string_view content) {
  return json{{"path", path.string()}, {"bytes", content.size()}, {"fnv1a64", hex64(fnv1a64(content))}};
}

}  // namespace

RunDir::RunDir(std::filesystem::path dir, std::string command, std::vector<std::string> argv)
    : dir_(std::move(dir)), command_(std::move(command)), argv_(std::move(argv)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create output directory " + dir_.string() + ": " + ec.message());
}

void RunDir::input(const std::filesystem::path& path) { inputs_.push_back(file_entry(path, read_file(path))); }

std::filesystem::path RunDir::write(const std::string& name, std::string_view content) {
  auto path = dir_ / name;
  write_file(path, content);
  outputs_.push_back(file_entry(name, content));
  return path;
}

void RunDir::finish() {
  json manifest{{"version", kVersion},
                {"command", command_},
                {"argv", argv_},
                {"settings", settings_},
                {"inputs", inputs_},
                {"outputs", outputs_}};
  write_file(dir_ / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace phenokg::cli
