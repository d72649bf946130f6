#include "phenokg/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace phenokg {

double l2_norm(const EmbeddingVector& v) {
  double ss = 0.0;
  for (double x : v.values) ss += x * x;
  return std::sqrt(ss);
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim())
    throw Error(ErrorKind::Domain, "dimension mismatch: " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  double dot = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) dot += a.values[i] * b.values[i];
  const double denom = l2_norm(a) * l2_norm(b);
  if (denom == 0.0) return 0.0;
  return std::clamp(dot / denom, -1.0, 1.0);
}

// ---- hashing embedder ----

HashingEmbedder::HashingEmbedder(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw Error(ErrorKind::Domain, "embedding dimension must be positive");
}

std::vector<std::string> HashingEmbedder::tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::size_t HashingEmbedder::bucket(std::string_view token) const {
  return static_cast<std::size_t>(fnv1a64(token) % dim_);
}

EmbeddingVector HashingEmbedder::embed_one(std::string_view text) const {
  EmbeddingVector v{std::vector<double>(dim_, 0.0)};
  for (const auto& tok : tokenize(text)) v.values[bucket(tok)] += 1.0;
  const double n = l2_norm(v);
  if (n > 0) {
    for (double& x : v.values) x /= n;
  }
  return v;
}

std::vector<EmbeddingVector> HashingEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

// ---- remote embedder ----

HttpEmbedder::HttpEmbedder(std::string endpoint_url, std::string api_key, std::string model, RetryPolicy retry,
                           std::chrono::milliseconds timeout, Sleeper sleeper)
    : url_(std::move(endpoint_url)),
      api_key_(std::move(api_key)),
      model_(std::move(model)),
      retry_(retry),
      timeout_(timeout),
      sleeper_(std::move(sleeper)) {}

std::vector<EmbeddingVector> HttpEmbedder::embed(const std::vector<std::string>& texts) {
  json body{{"model", model_}, {"input", texts}};
  auto result = post_json_with_retry(url_, api_key_, body, retry_, timeout_, sleeper_);
  std::vector<EmbeddingVector> out(texts.size());
  std::vector<bool> filled(texts.size(), false);
  try {
    const auto& data = result.body.at("data");
    for (std::size_t pos = 0; pos < data.size(); ++pos) {
      const auto& item = data[pos];
      std::size_t idx = item.value("index", pos);
      if (idx >= texts.size()) throw Error(ErrorKind::Schema, "embedding index out of range");
      out[idx].values = item.at("embedding").get<std::vector<double>>();
      filled[idx] = true;
    }
  } catch (const json::exception& e) {
    throw BackendError(ErrorKind::BackendUnavailable, "malformed embeddings response: " + std::string(e.what()), 200,
                       result.attempts);
  }
  if (std::find(filled.begin(), filled.end(), false) != filled.end())
    throw BackendError(ErrorKind::BackendUnavailable, "embeddings response is missing entries", 200, result.attempts);
  return out;
}

std::vector<EmbeddingVector> embed(Embedder& embedder, const std::vector<std::string>& texts) {
  if (texts.empty()) throw Error(ErrorKind::Domain, "embed needs at least one text");
  auto out = embedder.embed(texts);
  if (out.size() != texts.size()) throw Error(ErrorKind::Schema, "embedder returned the wrong number of vectors");
  return out;
}

// ---- index ----

void EmbeddingIndex::add(std::string item_id, EmbeddingVector vector) {
  if (vector.dim() == 0) throw Error(ErrorKind::Domain, "empty embedding for " + item_id);
  for (double x : vector.values)
    if (!std::isfinite(x)) throw Error(ErrorKind::Domain, "non-finite embedding entry for " + item_id);
  if (!entries_.empty() && vector.dim() != dim_)
    throw Error(ErrorKind::Domain, "embedding for " + item_id + " has dim " + std::to_string(vector.dim()) +
                                       ", index has " + std::to_string(dim_));
  if (entries_.count(item_id)) throw Error(ErrorKind::DuplicateId, "duplicate item id " + item_id);
  dim_ = vector.dim();
  entries_.emplace(std::move(item_id), std::move(vector));
}

const EmbeddingVector& EmbeddingIndex::at(const std::string& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw Error(ErrorKind::Domain, "no item " + id + " in index");
  return it->second;
}

std::string EmbeddingIndex::to_jsonl() const {
  std::string out;
  for (const auto& [id, v] : entries_) out += json{{"item_id", id}, {"vector", v.values}}.dump() + "\n";
  return out;
}

EmbeddingIndex EmbeddingIndex::parse_jsonl(std::string_view text) {
  EmbeddingIndex index;
  for_each_jsonl_text(text, [&](std::size_t line, const json& j) {
    if (!j.is_object() || !j.contains("item_id") || !j["item_id"].is_string() || !j.contains("vector") ||
        !j["vector"].is_array())
      throw Error(ErrorKind::Parse, "index line " + std::to_string(line) + ": expected {item_id, vector}");
    EmbeddingVector v;
    for (const auto& x : j["vector"]) {
      if (!x.is_number()) throw Error(ErrorKind::Parse, "index line " + std::to_string(line) + ": non-numeric entry");
      v.values.push_back(x.get<double>());
    }
    index.add(j["item_id"].get<std::string>(), std::move(v));
  });
  return index;
}

void EmbeddingIndex::save(const std::filesystem::path& path) const { write_file(path, to_jsonl()); }

EmbeddingIndex EmbeddingIndex::load(const std::filesystem::path& path) { return parse_jsonl(read_file(path)); }

EmbeddingIndex build_index(Embedder& embedder, const std::vector<Document>& docs) {
  EmbeddingIndex index;
  if (docs.empty()) return index;
  std::vector<std::string> texts;
  texts.reserve(docs.size());
  for (const auto& d : docs) texts.push_back(d.text);
  auto vectors = embed(embedder, texts);
  for (std::size_t i = 0; i < docs.size(); ++i) index.add(docs[i].doc_id, std::move(vectors[i]));
  return index;
}

std::vector<ScoredItem> top_k(const EmbeddingIndex& index, const EmbeddingVector& query, std::size_t k,
                              const ItemFilter& keep) {
  if (k == 0) throw Error(ErrorKind::Domain, "k must be >= 1");
  if (index.empty()) throw Error(ErrorKind::Domain, "top_k on an empty index");
  if (query.dim() != index.dim())
    throw Error(ErrorKind::Domain, "query dim " + std::to_string(query.dim()) + " != index dim " +
                                       std::to_string(index.dim()));
  const double qn = l2_norm(query);
  std::vector<ScoredItem> scored;
  scored.reserve(index.size());
  for (const auto& [id, v] : index.entries()) {
    if (keep && !keep(id)) continue;
    double dot = 0.0;
    for (std::size_t i = 0; i < v.dim(); ++i) dot += query.values[i] * v.values[i];
    const double denom = qn * l2_norm(v);
    scored.push_back({id, denom == 0.0 ? 0.0 : std::clamp(dot / denom, -1.0, 1.0)});
  }
  const std::size_t n = std::min(k, scored.size());
  // cosines equal up to rounding noise count as ties and fall back to the id
  auto rank_key = [](double score) { return std::llround(score * 1e12); };
  auto better = [&](const ScoredItem& a, const ScoredItem& b) {
    const auto ka = rank_key(a.score);
    const auto kb = rank_key(b.score);
    if (ka != kb) return ka > kb;
    return a.item_id < b.item_id;
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), better);
  scored.resize(n);
  return scored;
}

}  // namespace phenokg
