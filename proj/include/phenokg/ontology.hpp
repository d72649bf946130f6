#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace phenokg {

/// Phenotype identifier of the form `HP:` followed by exactly seven digits.
class TermId {
 public:
  /// Accepts any case for the prefix and surrounding whitespace; throws
  /// Error(Parse) for anything else.
  static TermId parse(std::string_view text);
  static std::optional<TermId> try_parse(std::string_view text);

  const std::string& str() const noexcept { return value_; }

  auto operator<=>(const TermId&) const = default;
  bool operator==(const TermId&) const = default;

 private:
  explicit TermId(std::string v) : value_(std::move(v)) {}
  std::string value_;
};

struct OntologyTerm {
  TermId id;
  std::string name;
  std::vector<std::string> synonyms;
  std::string definition;
  std::vector<TermId> parents;

  bool operator==(const OntologyTerm&) const = default;
};

/// Ordinal values double as the scale used for bin deltas.
enum class FrequencyCategory : int {
  Absent = 0,
  VeryRare = 1,
  Occasional = 2,
  Frequent = 3,
  VeryFrequent = 4,
  Obligate = 5,
};

std::string_view to_string(FrequencyCategory c);
/// Accepts enum names, HPO display labels ("Very frequent"), "Excluded" as an
/// alias of Absent, and the HPO frequency term ids HP:0040280..HP:0040285.
std::optional<FrequencyCategory> parse_frequency_category(std::string_view label);
inline int ordinal(FrequencyCategory c) { return static_cast<int>(c); }

/// Exact non-negative rational for bin boundary comparisons.
struct Fraction {
  std::uint64_t numerator = 0;
  std::uint64_t denominator = 1;

  double value() const { return static_cast<double>(numerator) / static_cast<double>(denominator); }
  bool operator==(const Fraction&) const = default;
};

/// Bins: Absent = 0, VeryRare (0, 5%), Occasional [5%, 30%), Frequent
/// [30%, 80%), VeryFrequent [80%, 100%), Obligate = 100%. Fractions under 1%
/// clamp into VeryRare. Throws Error(Domain) outside [0, 1].
FrequencyCategory frequency_bin(Fraction fraction);
FrequencyCategory frequency_bin(double fraction);

struct DiseaseAnnotation {
  std::string disease_id;
  TermId phenotype;
  FrequencyCategory expected;

  bool operator==(const DiseaseAnnotation&) const = default;
};

class Ontology {
 public:
  Ontology() = default;

  /// Builds the indexes; throws Error(DuplicateId) or Error(Validation) when
  /// ids collide or parents do not resolve.
  explicit Ontology(std::vector<OntologyTerm> terms);

  std::size_t term_count() const noexcept { return terms_.size(); }
  const std::vector<OntologyTerm>& terms() const noexcept { return terms_; }

  const OntologyTerm* find(const TermId& id) const;
  const OntologyTerm& at(const TermId& id) const;
  bool contains(const TermId& id) const { return find(id) != nullptr; }

  /// Exact match on normalized names first, then normalized synonyms. All
  /// matches are returned in ascending id order; no fuzzy matching.
  std::vector<TermId> resolve_label(std::string_view text) const;

  /// The term and every `is_a` ancestor.
  std::set<TermId> ancestors(const TermId& id) const;

  /// OBO-subset text that `parse_ontology` reads back to an equal ontology.
  std::string to_obo() const;

  bool operator==(const Ontology& other) const { return terms_ == other.terms_; }

 private:
  std::vector<OntologyTerm> terms_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::vector<TermId>> by_name_;
  std::unordered_map<std::string, std::vector<TermId>> by_synonym_;
};

Ontology parse_ontology(std::string_view text, std::string_view source = "<memory>");
Ontology load_ontology(const std::filesystem::path& path);

/// TSV: disease_id, hpo_id, frequency label. A header row and `#` comments
/// are skipped.
std::vector<DiseaseAnnotation> parse_annotations(std::string_view text, const Ontology& ontology,
                                                 std::string_view source = "<memory>");
std::vector<DiseaseAnnotation> load_annotations(const std::filesystem::path& path,
                                                const Ontology& ontology);

}  // namespace phenokg

template <>
struct std::hash<phenokg::TermId> {
  std::size_t operator()(const phenokg::TermId& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};
