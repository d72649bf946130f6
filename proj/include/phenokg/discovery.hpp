#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "phenokg/extraction.hpp"
#include "phenokg/kg.hpp"
#include "phenokg/llm.hpp"
#include "phenokg/ontology.hpp"

namespace phenokg {

struct RubricCriterion {
  std::string description;
  double weight = 1.0;

  bool operator==(const RubricCriterion&) const = default;
};

/// User-authored scoring instructions: what the disease looks like and which
/// findings should raise a patient's score.
struct ScoringRubric {
  std::string disease_name;
  std::string disease_context;
  std::vector<RubricCriterion> criteria;
  std::string scale_note;

  static ScoringRubric from_json(const json& j);
  static ScoringRubric load(const std::filesystem::path& path);
  json to_json() const;
  bool operator==(const ScoringRubric&) const = default;
};

/// Throws Error(Validation) listing every problem.
void validate(const ScoringRubric& rubric);
std::string render_rubric(const ScoringRubric& rubric);

struct LikelihoodScore {
  std::string patient;
  int score = 0;
  std::string rationale;

  bool operator==(const LikelihoodScore&) const = default;
};

ChatRequest build_score_prompt(const ScoringRubric& rubric, const std::string& patient_key,
                               const std::string& record, const PromptTemplates& templates = PromptTemplates::defaults());
/// The original prompt plus a note on why the previous reply was rejected.
ChatRequest build_score_retry_prompt(const ChatRequest& first, const std::string& problem);

/// One retry on an unusable reply; a second failure throws Error(Scoring)
/// and is audited. Backend failures are audited and rethrown unchanged.
LikelihoodScore score_patient(const std::string& patient_key, const std::string& record,
                              const ScoringRubric& rubric, ChatBackend& backend, AuditLog* audit = nullptr);

/// Union of keyword_search patients and ICD any-match patients. Throws
/// Error(Domain) when both inputs are empty.
std::set<std::string> candidate_cohort(const Graph& graph, const std::set<std::string>& keywords,
                                       const std::set<std::string>& generic_icd);

struct FunnelConfig {
  std::set<std::string> keywords;
  std::set<std::string> generic_icd;
  int threshold = 7;
  std::set<TermId> allowed_terms;
  GleanConfig glean;
  double high_confidence = 0.5;
  /// Drop phenotyped patients with fewer high-confidence assertions. Off by default.
  std::optional<std::size_t> min_assertions;
  std::size_t top_assertions = 5;
  int max_in_flight = 4;
  PromptTemplates templates = PromptTemplates::defaults();
};

void validate(const FunnelConfig& config);

struct Finalist {
  std::string patient;
  int score = 0;
  std::string rationale;
  std::size_t high_confidence_count = 0;
  std::vector<HpoAssertion> top_assertions;  // confidence desc, then term
  std::vector<HpoAssertion> assertions;      // all, in term order
};

struct FunnelReport {
  std::vector<std::pair<std::string, std::size_t>> stage_counts;
  std::vector<Finalist> finalists;
  std::vector<LikelihoodScore> scores;  // every scored candidate, by key
  std::vector<std::string> failed;      // patients skipped after an error, by key
};

/// candidates -> scored -> filtered (score >= threshold) -> phenotyped ->
/// finalists, ranked by score desc, high-confidence assertion count desc,
/// key asc. Per-patient failures are audited and skipped.
FunnelReport run_funnel(const Graph& graph, const Ontology& ontology, const ScoringRubric& rubric,
                        const FunnelConfig& config, ChatBackend& backend, AuditLog* audit = nullptr);

json to_json(const FunnelReport& report);
std::string to_markdown(const FunnelReport& report, const ScoringRubric& rubric, const Ontology& ontology);

}  // namespace phenokg
