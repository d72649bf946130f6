#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "phenokg/cohortstats.hpp"
#include "phenokg/discovery.hpp"
#include "phenokg/extraction.hpp"
#include "phenokg/kg.hpp"
#include "phenokg/llm.hpp"
#include "phenokg/ontology.hpp"

/// Built-in synthetic data: a small HPO slice, a Dravet-like cohort whose
/// phenotype counts are fixed in advance, and a BPAN-like discovery graph.
namespace phenokg::fixtures {

struct CohortTermCount {
  const char* id;
  const char* name;
  std::size_t patients;  // out of dravet_cohort_size()
};

/// The 46 phenotype terms of the Dravet cohort with their patient counts.
const std::vector<CohortTermCount>& dravet_term_counts();
constexpr std::size_t dravet_cohort_size() { return 38; }
constexpr std::size_t dravet_graph_size() { return 100; }

/// Dravet terms, a few BPAN terms and the organ-system terms above them.
Ontology fixture_ontology();
std::set<TermId> dravet_allowed_terms();
std::string dravet_disease_context();
/// Expected frequency per term for the synthetic disease entry "DRAVET:FIXTURE".
std::vector<DiseaseAnnotation> dravet_annotations(const Ontology& ontology);
/// Organ-system subtree roots, most specific first, for group_by_ancestors.
std::vector<std::pair<TermId, std::string>> organ_system_roots();

std::set<std::string> dravet_icd_codes();  // G40.83, G40.833, G40.834
/// The only patient carrying both G40.833 and G40.834.
std::string dravet_joint_patient();

/// 100 patients, 38 with Dravet codes. Every term's assertions cover exactly
/// its tabulated number of cohort patients; some patients carry repeated
/// assertions of a term from different notes, and a few non-cohort patients
/// carry assertions too.
Graph dravet_graph(const Ontology& ontology, std::uint64_t seed = 38);

// ---- discovery ----

std::set<std::string> bpan_generic_icd();
std::set<TermId> bpan_allowed_terms();
ScoringRubric bpan_rubric();

struct BpanFixture {
  Graph graph;
  std::set<std::string> planted;       // the true positives
  std::set<std::string> keyword_hits;  // planted patients whose notes name the disease
};

/// `n_patients` patients: `n_planted` positives, weaker candidates sharing
/// generic codes, and unrelated background patients.
BpanFixture bpan_fixture(std::uint64_t seed = 7, std::size_t n_patients = 1000, std::size_t n_planted = 12);

/// Rubric-weighted keyword score in 0..9 over a patient record.
int bpan_oracle_score(std::string_view record);

/// Answers score prompts with bpan_oracle_score and HPO prompts with a
/// word-bounded scan for the allowed term names in the patient record.
ScriptedBackend bpan_oracle_backend(const Ontology& ontology);

// ---- oracle cassettes ----

/// Cassette whose every reply (first round and gleaning rounds) renders the
/// example's gold result, for the prompts `extract` will send.
Cassette oracle_cassette(const TaskSpec& spec, const std::vector<FewShotExample>& docs, const FewShotPolicy& policy,
                         GleanConfig glean);

}  // namespace phenokg::fixtures
