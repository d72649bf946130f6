#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "phenokg/error.hpp"
#include "phenokg/ontology.hpp"
#include "phenokg/util.hpp"

namespace phenokg {

struct Document {
  std::string doc_id;
  std::string text;

  bool operator==(const Document&) const = default;
};

enum class EntityType { Chemical, Disease };

std::string_view to_string(EntityType t);
std::optional<EntityType> parse_entity_type(std::string_view s);

/// Offsets are Unicode code points into the document text.
struct SpanAnnotation {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string surface;
  EntityType entity_type = EntityType::Chemical;
  std::optional<std::string> concept_id;

  bool operator==(const SpanAnnotation&) const = default;
};

struct SpanDocument {
  Document doc;
  std::vector<SpanAnnotation> spans;

  bool operator==(const SpanDocument&) const = default;
};

struct HpoGoldDoc {
  Document doc;
  std::set<TermId> terms;

  bool operator==(const HpoGoldDoc&) const = default;
};

struct MultiLabelDoc {
  Document doc;
  std::set<std::string> labels;

  bool operator==(const MultiLabelDoc&) const = default;
};

/// The 15 note-level categories: 13 phenotypes plus NONE and UNSURE.
const std::array<std::string, 15>& multilabel_universe();
bool in_multilabel_universe(std::string_view label);

// ---- loaders ----

/// PubTator: `id|t|title`, `id|a|abstract`, then tab-separated annotation
/// lines. Document text is title + " " + abstract. Relation lines (4 columns)
/// are ignored.
std::vector<SpanDocument> parse_span_corpus(std::string_view text, std::string_view source = "<memory>");
std::vector<SpanDocument> load_span_corpus(const std::filesystem::path& path);
std::string to_pubtator(const std::vector<SpanDocument>& corpus);

/// JSON Lines `{doc_id, text, hpo_ids}`. When `ontology` is given every id
/// must resolve in it.
std::vector<HpoGoldDoc> parse_hpo_gold(std::string_view text, const Ontology* ontology = nullptr);
std::vector<HpoGoldDoc> load_hpo_gold(const std::filesystem::path& path, const Ontology* ontology = nullptr);
std::string to_jsonl(const std::vector<HpoGoldDoc>& corpus);

/// JSON Lines `{doc_id, text, labels}`.
std::vector<MultiLabelDoc> parse_multilabel_gold(std::string_view text);
std::vector<MultiLabelDoc> load_multilabel_gold(const std::filesystem::path& path);
std::string to_jsonl(const std::vector<MultiLabelDoc>& corpus);

// ---- splitting ----

/// Deterministic for a fixed seed. Both halves keep the input order.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_train_test(const std::vector<T>& corpus,
                                                           std::size_t test_size, std::uint64_t seed) {
  if (test_size > corpus.size())
    throw Error(ErrorKind::Domain, "test_size " + std::to_string(test_size) + " exceeds corpus size " +
                                       std::to_string(corpus.size()));
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<bool> is_test(corpus.size(), false);
  for (std::size_t i = 0; i < test_size; ++i) is_test[order[i]] = true;
  std::pair<std::vector<T>, std::vector<T>> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) (is_test[i] ? out.second : out.first).push_back(corpus[i]);
  return out;
}

// ---- synthetic fixtures ----

/// Terms whose names can be embedded in generated text and recovered by an
/// exact word-bounded dictionary scan: no other term name occurs inside them,
/// they occur inside no other term name, and they do not collide with the
/// generator's filler vocabulary.
std::vector<TermId> dictionary_safe_terms(const Ontology& ontology);

/// Term ids whose names occur word-bounded (case-folded) in `text`.
std::set<TermId> dictionary_scan(const Ontology& ontology, std::string_view text);

/// Notes whose text embeds the names of `labels_per_doc` sampled terms; gold is
/// exactly those terms. Byte-identical for equal inputs.
std::vector<HpoGoldDoc> synthesize_fixture(std::uint64_t seed, const Ontology& ontology, std::size_t n_docs,
                                           std::size_t labels_per_doc);

/// Abstract-like documents with Chemical/Disease spans from a fixed vocabulary.
std::vector<SpanDocument> synthesize_span_fixture(std::uint64_t seed, std::size_t n_docs,
                                                  std::size_t mentions_per_doc);

/// Notes labelled with 1..3 categories of the multilabel universe.
std::vector<MultiLabelDoc> synthesize_multilabel_fixture(std::uint64_t seed, std::size_t n_docs);

}  // namespace phenokg
