#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace phenokg {

using json = nlohmann::json;

// ---- text ----

std::string to_lower_ascii(std::string_view s);
std::string to_upper_ascii(std::string_view s);
std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

/// ASCII case fold, collapse whitespace runs to one space, strip both ends.
/// Used wherever labels or mention surfaces are compared.
std::string normalize_text(std::string_view s);

bool icontains(std::string_view haystack, std::string_view needle);

/// Positions (byte offsets) where `needle` occurs in `haystack` with no
/// alphanumeric character directly before or after it. Both sides are
/// expected to be case-folded already.
std::vector<std::size_t> find_word_bounded(std::string_view haystack, std::string_view needle);

// ---- UTF-8 ----

/// Number of Unicode code points; throws Error(Parse) on invalid UTF-8.
std::size_t utf8_length(std::string_view s);
/// Substring by code-point offsets [start, end).
std::string utf8_slice(std::string_view s, std::size_t start, std::size_t end);

// ---- hashing ----

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// ---- numbers ----

/// Fixed-point rendering at `decimals` places; never emits "-0.000".
std::string format_fixed(double v, int decimals = 3);

// ---- files ----

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// Calls `fn(line_no, object)` for every non-blank line of a JSON Lines file.
/// Line numbers are 1-based. Non-JSON lines raise Error(Parse) with the line.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const json&)>& fn);
void for_each_jsonl_text(std::string_view text,
                         const std::function<void(std::size_t, const json&)>& fn);

// ---- deterministic RNG ----

/// SplitMix64, so fixtures are byte-identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  /// Uniform double in [0, 1).
  double unit();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace phenokg
