#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "phenokg/corpus.hpp"
#include "phenokg/llm.hpp"

namespace phenokg {

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

double l2_norm(const EmbeddingVector& v);
/// 0 when either side has zero norm; otherwise clamped to [-1, 1].
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;
};

/// Offline embedder: ASCII-case-folded alphanumeric tokens hashed (FNV-1a)
/// into a fixed number of count buckets, then L2-normalized. Text without
/// tokens maps to the zero vector.
class HashingEmbedder : public Embedder {
 public:
  static constexpr std::size_t kDefaultDim = 256;

  explicit HashingEmbedder(std::size_t dim = kDefaultDim);
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
  EmbeddingVector embed_one(std::string_view text) const;

  static std::vector<std::string> tokenize(std::string_view text);
  std::size_t bucket(std::string_view token) const;

 private:
  std::size_t dim_;
};

/// OpenAI-compatible embeddings endpoint (`{model, input}` -> `data[i].embedding`).
class HttpEmbedder : public Embedder {
 public:
  HttpEmbedder(std::string endpoint_url, std::string api_key, std::string model, RetryPolicy retry = {},
               std::chrono::milliseconds timeout = std::chrono::seconds(60), Sleeper sleeper = real_sleeper());
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;

 private:
  std::string url_, api_key_, model_;
  RetryPolicy retry_;
  std::chrono::milliseconds timeout_;
  Sleeper sleeper_;
};

/// Throws Error(Domain) on an empty input list.
std::vector<EmbeddingVector> embed(Embedder& embedder, const std::vector<std::string>& texts);

struct ScoredItem {
  std::string item_id;
  double score = 0.0;

  bool operator==(const ScoredItem&) const = default;
};

class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;

  /// Throws Error(DuplicateId) for a repeated id, Error(Domain) for a
  /// dimension mismatch, empty vector, or non-finite entry.
  void add(std::string item_id, EmbeddingVector vector);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t dim() const { return dim_; }
  bool contains(const std::string& id) const { return entries_.count(id) != 0; }
  const EmbeddingVector& at(const std::string& id) const;
  const std::map<std::string, EmbeddingVector>& entries() const { return entries_; }

  /// JSON Lines `{item_id, vector}` in id order.
  std::string to_jsonl() const;
  static EmbeddingIndex parse_jsonl(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static EmbeddingIndex load(const std::filesystem::path& path);

  bool operator==(const EmbeddingIndex&) const = default;

 private:
  std::map<std::string, EmbeddingVector> entries_;
  std::size_t dim_ = 0;
};

EmbeddingIndex build_index(Embedder& embedder, const std::vector<Document>& docs);

using ItemFilter = std::function<bool(const std::string& item_id)>;

/// Exact search: descending cosine, ties by ascending id, at most k entries.
/// Scores are ranked at 1e-12 resolution so rounding noise cannot split a tie.
/// Items rejected by `keep` are skipped before truncation.
std::vector<ScoredItem> top_k(const EmbeddingIndex& index, const EmbeddingVector& query, std::size_t k = 5,
                              const ItemFilter& keep = {});

}  // namespace phenokg
