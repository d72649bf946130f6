#pragma once

#include <compare>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "phenokg/corpus.hpp"
#include "phenokg/llm.hpp"
#include "phenokg/ontology.hpp"
#include "phenokg/retrieval.hpp"

namespace phenokg {

enum class Task { Ner, Hpo, MultiLabel };

std::string_view to_string(Task t);
std::optional<Task> parse_task(std::string_view s);

// ---- results ----

struct NerMention {
  std::string surface;  // normalized
  EntityType type = EntityType::Chemical;

  auto operator<=>(const NerMention&) const = default;
};

struct NerResult {
  std::string doc_id;
  std::set<NerMention> mentions;

  bool operator==(const NerResult&) const = default;
};

struct HpoAssertion {
  TermId term;
  double confidence = 0.0;
  std::string reasoning;

  bool operator==(const HpoAssertion&) const = default;
};

/// Assertions are kept sorted by term with at most one entry per term.
struct HpoExtraction {
  std::string key;
  std::vector<HpoAssertion> assertions;

  std::set<TermId> terms() const;
  bool operator==(const HpoExtraction&) const = default;
};

struct MultiLabelResult {
  std::string doc_id;
  std::set<std::string> labels;

  bool operator==(const MultiLabelResult&) const = default;
};

using TaskResult = std::variant<NerResult, HpoExtraction, MultiLabelResult>;

std::string result_key(const TaskResult& r);
Task result_task(const TaskResult& r);
/// Number of entities (mentions, terms, labels).
std::size_t result_size(const TaskResult& r);
TaskResult empty_result(Task task, std::string key);

/// Gold annotations as results, e.g. for few-shot examples. HPO gold gets
/// confidence 1.
TaskResult gold_result(const SpanDocument& gold);
TaskResult gold_result(const HpoGoldDoc& gold);
TaskResult gold_result(const MultiLabelDoc& gold);

/// The model-output JSON for a result, keyed by its document key. Used for
/// few-shot examples, gleaning context and oracle cassettes.
json render_output(const TaskResult& r);

/// Set union on the entity key; for a repeated HPO term the higher confidence
/// (and its reasoning) wins. Throws Error(Domain) when keys or tasks differ.
NerResult merge_gleaned(const NerResult& prev, const NerResult& next);
HpoExtraction merge_gleaned(const HpoExtraction& prev, const HpoExtraction& next);
MultiLabelResult merge_gleaned(const MultiLabelResult& prev, const MultiLabelResult& next);
TaskResult merge_gleaned(const TaskResult& prev, const TaskResult& next);

// ---- model output parsing ----

enum class OutputSchema { Ner, Hpo, MultiLabel, Score };

/// Pulls the single JSON object out of a model reply. Accepted: a bare object,
/// an object wrapped in one fenced code block, or prose before/after exactly
/// one object. Everything else throws OutputError(Parse).
json extract_json_object(std::string_view raw);

struct RawHpoAssertion {
  std::string category;
  double confidence = 0.0;
  std::string reasoning;

  bool operator==(const RawHpoAssertion&) const = default;
};

struct ScoreOutput {
  int score = 0;
  std::string rationale;

  bool operator==(const ScoreOutput&) const = default;
};

using KeyedNer = std::map<std::string, std::vector<NerMention>>;
using KeyedHpo = std::map<std::string, std::vector<RawHpoAssertion>>;
using KeyedLabels = std::map<std::string, std::vector<std::string>>;
using ParsedOutput = std::variant<KeyedNer, KeyedHpo, KeyedLabels, ScoreOutput>;

/// extract_json_object plus schema validation. Unknown fields, missing
/// fields, wrong types and out-of-range values throw OutputError(Schema)
/// naming the field. Numeric strings are accepted for `confidence`.
ParsedOutput parse_model_output(std::string_view raw, OutputSchema schema);

// ---- audit ----

struct AuditEntry {
  std::string key;
  int round = 0;
  std::string kind;  // invalid_term, term_not_allowed, unknown_label, parse_error, ...
  std::string detail;

  bool operator==(const AuditEntry&) const = default;
};

class AuditLog {
 public:
  void record(AuditEntry entry);
  std::vector<AuditEntry> entries() const;
  std::size_t count(std::string_view kind) const;
  std::size_t size() const;
  std::string to_jsonl() const;

 private:
  mutable std::mutex mu_;
  std::vector<AuditEntry> entries_;
};

// ---- prompts ----

/// Plain-text templates with named placeholders: {document}, {doc_key},
/// {examples}, {allowed_terms}, {disease_context}, {previous_result},
/// {rubric}, {labels}.
struct PromptTemplates {
  std::string ner_system;
  std::string hpo_system;
  std::string multilabel_system;
  std::string score_system;
  std::string user;
  std::string glean;

  static PromptTemplates defaults();
  /// Defaults overridden by ner.txt, hpo.txt, multilabel.txt, score.txt,
  /// user.txt and glean.txt when present in `dir`.
  static PromptTemplates load(const std::filesystem::path& dir);
};

/// Replaces `{name}` for every name in `values`; other braces are left alone.
std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

enum class FewShotMode { ZeroShot, StaticFewShot, DynamicFewShot };

std::string_view to_string(FewShotMode m);
std::optional<FewShotMode> parse_few_shot_mode(std::string_view s);

struct FewShotExample {
  Document doc;
  TaskResult gold;
};

/// Non-owning views; the pool, index and embedder must outlive the policy.
struct FewShotPolicy {
  FewShotMode mode = FewShotMode::ZeroShot;
  std::size_t k = 5;
  const std::vector<FewShotExample>* example_pool = nullptr;
  const EmbeddingIndex* index = nullptr;  // over example_pool doc ids (dynamic only)
  Embedder* embedder = nullptr;           // embeds the query document (dynamic only)
};

void validate(const FewShotPolicy& policy);

struct TaskSpec {
  Task task = Task::Hpo;
  const Ontology* ontology = nullptr;  // required for Hpo
  std::set<TermId> allowed_terms;      // empty = whole ontology
  std::string disease_context;
  PromptTemplates templates = PromptTemplates::defaults();
  double temperature = 0.0;
  int max_tokens = 2048;
};

/// Examples placed in the prompt, best first. Pool items sharing the
/// document's id or its exact text are skipped in both few-shot modes.
std::vector<const FewShotExample*> select_examples(const Document& document, const FewShotPolicy& policy);

ChatRequest build_prompt(const TaskSpec& spec, const Document& document, const FewShotPolicy& policy);
/// Same system text; the user message carries the cumulative result and asks
/// for entities the earlier rounds missed.
ChatRequest build_glean_prompt(const TaskSpec& spec, const Document& document, const FewShotPolicy& policy,
                               const TaskResult& cumulative);

// ---- extraction ----

struct GleanConfig {
  int iterations = 1;
  static constexpr int kMaxIterations = 8;
};

void validate(const GleanConfig& glean);

/// Turns one model reply into a typed result for `key`, dropping (and
/// auditing) invalid term ids, terms outside the allowed set and unknown
/// labels. Throws OutputError for unparseable replies or a foreign key.
TaskResult interpret_output(const TaskSpec& spec, const std::string& key, std::string_view raw, int round,
                            AuditLog* audit);

/// Round 0 plus `glean.iterations` gleaning rounds, merged. Errors carry the
/// round number in their message.
TaskResult extract(const TaskSpec& spec, const Document& document, ChatBackend& backend,
                   const FewShotPolicy& policy, GleanConfig glean, AuditLog* audit = nullptr);

/// Per-round history of `extract`; element r is the cumulative result after
/// round r.
std::vector<TaskResult> extract_rounds(const TaskSpec& spec, const Document& document, ChatBackend& backend,
                                       const FewShotPolicy& policy, GleanConfig glean, AuditLog* audit = nullptr);

struct ExtractionOutcome {
  std::optional<TaskResult> result;
  std::optional<Error> error;

  bool ok() const { return result.has_value(); }
};

/// Extracts every document; each round is one complete_batch call. A failing
/// document is audited and reported positionally without stopping the rest.
std::vector<ExtractionOutcome> extract_batch(const TaskSpec& spec, const std::vector<Document>& documents,
                                             ChatBackend& backend, const FewShotPolicy& policy, GleanConfig glean,
                                             int max_in_flight, AuditLog* audit = nullptr);

/// Lines of `HP:####### \t Name` for the allowed terms, in id order.
std::string render_allowed_terms(const Ontology& ontology, const std::set<TermId>& allowed);

/// Patient-level phenotype extraction restricted to `allowed_terms`, with the
/// curated disease description in the prompt.
HpoExtraction extract_hpo_for_patient(const std::string& patient_key, const std::string& patient_record,
                                      const std::string& disease_context, const std::set<TermId>& allowed_terms,
                                      const Ontology& ontology, ChatBackend& backend, GleanConfig glean,
                                      AuditLog* audit = nullptr);

/// The TaskSpec and document extract_hpo_for_patient uses; exposed so callers
/// can batch or pre-record the same prompts.
TaskSpec patient_hpo_spec(const Ontology& ontology, const std::set<TermId>& allowed_terms,
                          const std::string& disease_context);

}  // namespace phenokg
