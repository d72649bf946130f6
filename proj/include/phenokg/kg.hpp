#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "phenokg/error.hpp"
#include "phenokg/ontology.hpp"
#include "phenokg/util.hpp"

namespace phenokg {

struct Demographics {
  std::optional<unsigned> age_years;
  std::optional<std::string> race;
  std::optional<std::string> state;
  std::optional<std::string> zip;

  bool operator==(const Demographics&) const = default;
};

/// Code sets hold normalized codes (see normalize_code).
struct PatientNode {
  std::string key;
  Demographics demographics;
  std::set<std::string> icd10;
  std::set<std::string> cpt;
  std::set<std::string> rxnorm;

  bool operator==(const PatientNode&) const = default;
};

enum class NoteKind { ClinicalNote, History, VisitPurpose, GeneticsReport, Other };

std::string_view to_string(NoteKind k);
std::optional<NoteKind> parse_note_kind(std::string_view s);

struct NoteNode {
  std::string note_id;
  std::string patient;
  std::string text;
  NoteKind kind = NoteKind::ClinicalNote;

  bool operator==(const NoteNode&) const = default;
};

struct PhenotypeAssertion {
  std::string patient;
  TermId term;
  double confidence = 0.0;
  std::string reasoning;
  std::optional<std::string> source_note;
  std::string extractor_version;

  bool operator==(const PhenotypeAssertion&) const = default;
};

/// Uppercased with all whitespace removed; throws Error(Validation) when
/// nothing is left.
std::string normalize_code(std::string_view code);

/// Property graph of patients, their notes and phenotype assertions. Writers
/// are serialized; readers share a lock and get copies, so every query sees
/// a consistent snapshot.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph& other);
  Graph& operator=(const Graph& other);

  /// Codes are normalized on insert. Throws Error(DuplicateId).
  void add_patient(PatientNode patient);
  /// Throws Error(DuplicateId) for a reused note id and Error(Integrity) when
  /// the patient is unknown.
  void add_note(NoteNode note);
  /// Inserts or replaces the assertion identified by (patient, term,
  /// source_note, extractor_version). Returns false when an identical
  /// assertion was already present.
  bool upsert_assertion(PhenotypeAssertion assertion, const Ontology& ontology);

  std::size_t patient_count() const;
  std::size_t note_count() const;
  std::size_t assertion_count() const;
  /// patient-note plus patient-phenotype edges.
  std::size_t edge_count() const;

  bool has_patient(const std::string& key) const;
  std::optional<PatientNode> patient(const std::string& key) const;
  std::vector<PatientNode> patients() const;
  std::vector<NoteNode> notes() const;
  std::vector<NoteNode> notes_for(const std::string& patient) const;
  std::vector<PhenotypeAssertion> assertions() const;
  std::vector<PhenotypeAssertion> assertions_for(const std::string& patient) const;

  /// Re-runs every referential check; used after loading.
  void verify(const Ontology* ontology) const;

  bool operator==(const Graph& other) const;

 private:
  using AssertionKey = std::tuple<std::string, TermId, std::string, std::string>;

  static AssertionKey key_of(const PhenotypeAssertion& a);
  void check_assertion(const PhenotypeAssertion& a, const Ontology& ontology) const;

  mutable std::shared_mutex mu_;
  std::map<std::string, PatientNode> patients_;
  std::map<std::string, NoteNode> notes_;
  std::map<std::string, std::set<std::string>> notes_by_patient_;
  std::map<AssertionKey, PhenotypeAssertion> assertions_;
};

struct GraphRecords {
  std::vector<PatientNode> patients;
  std::vector<NoteNode> notes;
  std::vector<PhenotypeAssertion> assertions;
};

/// Patients first, then notes, then assertions. Assertions need an ontology;
/// passing assertions without one throws Error(Domain).
Graph build_graph(const GraphRecords& records, const Ontology* ontology = nullptr);

/// JSON Lines, one `{kind: "patient"|"note"|"assertion", ...}` record per
/// line. Records may appear in any order.
GraphRecords parse_records(std::string_view text, std::string_view source = "<memory>");
std::string to_jsonl(const Graph& graph);
void save_graph(const Graph& graph, const std::filesystem::path& path);
Graph load_graph(const std::filesystem::path& path, const Ontology* ontology = nullptr);

enum class CodeMatch { Any, All };

/// Exact match on normalized codes. Throws Error(Domain) for an empty set.
std::set<std::string> cohort_by_icd(const Graph& graph, const std::set<std::string>& codes,
                                    CodeMatch mode = CodeMatch::Any);

/// Every ICD-10 code present in the graph that starts with `prefix`.
std::set<std::string> expand_icd_prefix(const Graph& graph, std::string_view prefix);

/// Case-insensitive substring search over note text, as (patient, note_id)
/// pairs in order. Throws Error(Domain) for an empty pattern.
std::vector<std::pair<std::string, std::string>> keyword_search(const Graph& graph, std::string_view pattern);

/// Plain-text view of one patient (demographics, codes, notes) for prompts.
std::string render_patient_record(const Graph& graph, const std::string& key);

json to_json(const PatientNode& p);
json to_json(const NoteNode& n);
json to_json(const PhenotypeAssertion& a);

}  // namespace phenokg
