#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "phenokg/kg.hpp"
#include "phenokg/ontology.hpp"

namespace phenokg {

struct TermFrequency {
  std::size_t count = 0;
  std::size_t cohort_size = 0;

  Fraction fraction() const { return Fraction{count, cohort_size}; }
  bool operator==(const TermFrequency&) const = default;
};

using FrequencyTable = std::map<TermId, TermFrequency>;

/// Patients in `cohort` with at least one assertion of each term whose
/// confidence is >= min_confidence. Every requested term gets a row.
/// Throws Error(Domain) for an empty cohort, an unknown patient or
/// min_confidence outside [0,1]; Error(Validation) for terms outside the
/// ontology.
FrequencyTable phenotype_frequency(const Graph& graph, const std::set<std::string>& cohort,
                                   const std::set<TermId>& terms, const Ontology& ontology,
                                   double min_confidence = 0.0);

/// term,name,count,cohort_size,fraction in term order.
std::string frequency_csv(const FrequencyTable& table, const Ontology& ontology);

struct FrequencyComparison {
  TermId term;
  std::size_t observed_count = 0;
  std::size_t cohort_size = 0;
  Fraction observed_fraction;
  FrequencyCategory observed_bin = FrequencyCategory::Absent;
  FrequencyCategory expected_bin = FrequencyCategory::Absent;
  int bin_delta = 0;  // observed - expected on the ordinal scale

  bool operator==(const FrequencyComparison&) const = default;
};

/// One row per annotation, in annotation order. Throws Error(Domain) when an
/// annotated term has no frequency row.
std::vector<FrequencyComparison> compare_to_ontology(const FrequencyTable& frequencies,
                                                     const std::vector<DiseaseAnnotation>& annotations);

using Grouping = std::map<TermId, std::string>;

/// TSV `term_id<TAB>group`; `#` comments and blank lines skipped.
Grouping parse_grouping(std::string_view text, std::string_view source = "<memory>");
Grouping load_grouping(const std::filesystem::path& path);

/// Assigns each term the label of the first root (in the given order) among
/// its ancestors. Terms under none of the roots are left out.
Grouping group_by_ancestors(const Ontology& ontology, const std::set<TermId>& terms,
                            const std::vector<std::pair<TermId, std::string>>& roots);

/// Columns term,name,group,observed_fraction,observed_bin,expected_bin,bin_delta;
/// rows sorted by (group, term). Ungrouped terms go to group "ungrouped".
std::string heatmap_csv(const std::vector<FrequencyComparison>& comparisons, const Ontology& ontology,
                        const Grouping& grouping);

}  // namespace phenokg
