#include "phenokg/kg.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <mutex>

namespace phenokg {

std::string_view to_string(NoteKind k) {
  switch (k) {
    case NoteKind::ClinicalNote: return "clinical_note";
    case NoteKind::History: return "history";
    case NoteKind::VisitPurpose: return "visit_purpose";
    case NoteKind::GeneticsReport: return "genetics_report";
    case NoteKind::Other: return "other";
  }
  return "?";
}

std::optional<NoteKind> parse_note_kind(std::string_view s) {
  std::string k = to_lower_ascii(trim(s));
  for (auto kind : {NoteKind::ClinicalNote, NoteKind::History, NoteKind::VisitPurpose, NoteKind::GeneticsReport,
                    NoteKind::Other}) {
    if (k == to_string(kind)) return kind;
  }
  return std::nullopt;
}

std::string normalize_code(std::string_view code) {
  std::string out;
  for (char c : code) {
    if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  if (out.empty()) throw Error(ErrorKind::Validation, "empty code");
  return out;
}

namespace {

std::set<std::string> normalize_codes(const std::set<std::string>& codes, const std::string& patient) {
  std::set<std::string> out;
  for (const auto& c : codes) {
    try {
      out.insert(normalize_code(c));
    } catch (const Error&) {
      throw Error(ErrorKind::Validation, "patient " + patient + " has an empty code");
    }
  }
  return out;
}

}  // namespace

// ---- Graph ----

Graph::Graph(const Graph& other) {
  std::shared_lock lock(other.mu_);
  patients_ = other.patients_;
  notes_ = other.notes_;
  notes_by_patient_ = other.notes_by_patient_;
  assertions_ = other.assertions_;
}

Graph& Graph::operator=(const Graph& other) {
  if (this == &other) return *this;
  Graph copy(other);
  std::unique_lock lock(mu_);
  patients_ = std::move(copy.patients_);
  notes_ = std::move(copy.notes_);
  notes_by_patient_ = std::move(copy.notes_by_patient_);
  assertions_ = std::move(copy.assertions_);
  return *this;
}

void Graph::add_patient(PatientNode p) {
  if (trim(p.key).empty()) throw Error(ErrorKind::Validation, "patient key must be nonempty");
  p.icd10 = normalize_codes(p.icd10, p.key);
  p.cpt = normalize_codes(p.cpt, p.key);
  p.rxnorm = normalize_codes(p.rxnorm, p.key);
  std::unique_lock lock(mu_);
  if (patients_.count(p.key)) throw Error(ErrorKind::DuplicateId, "duplicate patient key " + p.key);
  notes_by_patient_[p.key];
  std::string key = p.key;
  patients_.emplace(std::move(key), std::move(p));
}

void Graph::add_note(NoteNode n) {
  if (trim(n.note_id).empty()) throw Error(ErrorKind::Validation, "note id must be nonempty");
  std::unique_lock lock(mu_);
  if (notes_.count(n.note_id)) throw Error(ErrorKind::DuplicateId, "duplicate note id " + n.note_id);
  if (!patients_.count(n.patient))
    throw Error(ErrorKind::Integrity, "note " + n.note_id + " references unknown patient " + n.patient);
  notes_by_patient_[n.patient].insert(n.note_id);
  std::string id = n.note_id;
  notes_.emplace(std::move(id), std::move(n));
}

Graph::AssertionKey Graph::key_of(const PhenotypeAssertion& a) {
  return {a.patient, a.term, a.source_note.value_or(""), a.extractor_version};
}

void Graph::check_assertion(const PhenotypeAssertion& a, const Ontology& ontology) const {
  const std::string what = "assertion " + a.patient + "/" + a.term.str();
  if (!patients_.count(a.patient)) throw Error(ErrorKind::Integrity, what + " references unknown patient");
  if (!ontology.contains(a.term)) throw Error(ErrorKind::Validation, what + " uses a term not in the ontology");
  if (!std::isfinite(a.confidence) || a.confidence < 0.0 || a.confidence > 1.0)
    throw Error(ErrorKind::Domain, what + " has confidence outside [0,1]");
  if (a.extractor_version.empty()) throw Error(ErrorKind::Validation, what + " lacks an extractor_version");
  if (a.source_note) {
    auto it = notes_.find(*a.source_note);
    if (it == notes_.end())
      throw Error(ErrorKind::Integrity, what + " cites unknown note " + *a.source_note);
    if (it->second.patient != a.patient)
      throw Error(ErrorKind::Integrity, what + " cites note " + *a.source_note + " of another patient");
  }
}

bool Graph::upsert_assertion(PhenotypeAssertion a, const Ontology& ontology) {
  std::unique_lock lock(mu_);
  check_assertion(a, ontology);
  auto key = key_of(a);
  auto it = assertions_.find(key);
  if (it != assertions_.end() && it->second == a) return false;
  assertions_.insert_or_assign(std::move(key), std::move(a));
  return true;
}

std::size_t Graph::patient_count() const {
  std::shared_lock lock(mu_);
  return patients_.size();
}

std::size_t Graph::note_count() const {
  std::shared_lock lock(mu_);
  return notes_.size();
}

std::size_t Graph::assertion_count() const {
  std::shared_lock lock(mu_);
  return assertions_.size();
}

std::size_t Graph::edge_count() const {
  std::shared_lock lock(mu_);
  return notes_.size() + assertions_.size();
}

bool Graph::has_patient(const std::string& key) const {
  std::shared_lock lock(mu_);
  return patients_.count(key) != 0;
}

std::optional<PatientNode> Graph::patient(const std::string& key) const {
  std::shared_lock lock(mu_);
  auto it = patients_.find(key);
  if (it == patients_.end()) return std::nullopt;
  return it->second;
}

std::vector<PatientNode> Graph::patients() const {
  std::shared_lock lock(mu_);
  std::vector<PatientNode> out;
  out.reserve(patients_.size());
  for (const auto& [_, p] : patients_) out.push_back(p);
  return out;
}

std::vector<NoteNode> Graph::notes() const {
  std::shared_lock lock(mu_);
  std::vector<NoteNode> out;
  out.reserve(notes_.size());
  for (const auto& [_, n] : notes_) out.push_back(n);
  return out;
}

std::vector<NoteNode> Graph::notes_for(const std::string& patient) const {
  std::shared_lock lock(mu_);
  std::vector<NoteNode> out;
  auto it = notes_by_patient_.find(patient);
  if (it == notes_by_patient_.end()) return out;
  for (const auto& id : it->second) out.push_back(notes_.at(id));
  return out;
}

std::vector<PhenotypeAssertion> Graph::assertions() const {
  std::shared_lock lock(mu_);
  std::vector<PhenotypeAssertion> out;
  out.reserve(assertions_.size());
  for (const auto& [_, a] : assertions_) out.push_back(a);
  return out;
}

std::vector<PhenotypeAssertion> Graph::assertions_for(const std::string& patient) const {
  std::shared_lock lock(mu_);
  std::vector<PhenotypeAssertion> out;
  auto it = assertions_.lower_bound(AssertionKey{patient, TermId::parse("HP:0000000"), "", ""});
  for (; it != assertions_.end() && std::get<0>(it->first) == patient; ++it) out.push_back(it->second);
  return out;
}

void Graph::verify(const Ontology* ontology) const {
  std::shared_lock lock(mu_);
  for (const auto& [id, n] : notes_) {
    if (!patients_.count(n.patient))
      throw Error(ErrorKind::Integrity, "note " + id + " references unknown patient " + n.patient);
  }
  if (!assertions_.empty() && !ontology)
    throw Error(ErrorKind::Domain, "verifying assertions needs an ontology");
  for (const auto& [_, a] : assertions_) check_assertion(a, *ontology);
}

bool Graph::operator==(const Graph& other) const {
  if (this == &other) return true;
  std::shared_lock a(mu_, std::defer_lock);
  std::shared_lock b(other.mu_, std::defer_lock);
  std::lock(a, b);
  return patients_ == other.patients_ && notes_ == other.notes_ && assertions_ == other.assertions_;
}

Graph build_graph(const GraphRecords& records, const Ontology* ontology) {
  if (!records.assertions.empty() && !ontology)
    throw Error(ErrorKind::Domain, "graph records carry assertions but no ontology was given");
  Graph g;
  for (const auto& p : records.patients) g.add_patient(p);
  for (const auto& n : records.notes) g.add_note(n);
  for (const auto& a : records.assertions) g.upsert_assertion(a, *ontology);
  return g;
}

// ---- JSON Lines ----

json to_json(const PatientNode& p) {
  json demo = json::object();
  if (p.demographics.age_years) demo["age_years"] = *p.demographics.age_years;
  if (p.demographics.race) demo["race"] = *p.demographics.race;
  if (p.demographics.state) demo["state"] = *p.demographics.state;
  if (p.demographics.zip) demo["zip"] = *p.demographics.zip;
  return json{{"kind", "patient"}, {"key", p.key},      {"demographics", demo},
              {"icd10", p.icd10},  {"cpt", p.cpt},      {"rxnorm", p.rxnorm}};
}

json to_json(const NoteNode& n) {
  return json{{"kind", "note"}, {"note_id", n.note_id}, {"patient", n.patient},
              {"note_kind", to_string(n.kind)}, {"text", n.text}};
}

json to_json(const PhenotypeAssertion& a) {
  return json{{"kind", "assertion"},
              {"patient", a.patient},
              {"term", a.term.str()},
              {"confidence", a.confidence},
              {"reasoning", a.reasoning},
              {"source_note", a.source_note ? json(*a.source_note) : json(nullptr)},
              {"extractor_version", a.extractor_version}};
}

namespace {

class RecordReader {
 public:
  RecordReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {}

  [[noreturn]] void fail(const std::string& why) const { throw Error(ErrorKind::Parse, where_ + ": " + why); }

  void only(std::initializer_list<std::string_view> fields) const {
    for (const auto& [k, _] : j_.items()) {
      if (std::find(fields.begin(), fields.end(), k) == fields.end()) fail("unexpected field '" + k + "'");
    }
  }

  std::string str(const char* field) const {
    if (!j_.contains(field) || !j_[field].is_string()) fail(std::string("missing string field '") + field + "'");
    return j_[field].get<std::string>();
  }

  std::optional<std::string> opt_str(const json& obj, const char* field) const {
    if (!obj.contains(field) || obj[field].is_null()) return std::nullopt;
    if (!obj[field].is_string()) fail(std::string("field '") + field + "' must be a string");
    return obj[field].get<std::string>();
  }

  std::set<std::string> codes(const char* field) const {
    std::set<std::string> out;
    if (!j_.contains(field)) return out;
    if (!j_[field].is_array()) fail(std::string("field '") + field + "' must be an array");
    for (const auto& c : j_[field]) {
      if (!c.is_string()) fail(std::string("field '") + field + "' must hold strings");
      out.insert(c.get<std::string>());
    }
    return out;
  }

  const json& raw() const { return j_; }

 private:
  const json& j_;
  std::string where_;
};

}  // namespace

GraphRecords parse_records(std::string_view text, std::string_view source) {
  GraphRecords out;
  for_each_jsonl_text(text, [&](std::size_t line, const json& j) {
    RecordReader r(j, std::string(source) + ":" + std::to_string(line));
    if (!j.is_object()) r.fail("expected an object");
    const std::string kind = r.str("kind");
    if (kind == "patient") {
      r.only({"kind", "key", "demographics", "icd10", "cpt", "rxnorm"});
      PatientNode p;
      p.key = r.str("key");
      if (j.contains("demographics")) {
        const json& d = j["demographics"];
        if (!d.is_object()) r.fail("demographics must be an object");
        for (const auto& [k, _] : d.items()) {
          if (k != "age_years" && k != "race" && k != "state" && k != "zip")
            r.fail("unexpected demographics field '" + k + "'");
        }
        if (d.contains("age_years") && !d["age_years"].is_null()) {
          if (!d["age_years"].is_number_unsigned()) r.fail("age_years must be a non-negative integer");
          p.demographics.age_years = d["age_years"].get<unsigned>();
        }
        p.demographics.race = r.opt_str(d, "race");
        p.demographics.state = r.opt_str(d, "state");
        p.demographics.zip = r.opt_str(d, "zip");
      }
      p.icd10 = r.codes("icd10");
      p.cpt = r.codes("cpt");
      p.rxnorm = r.codes("rxnorm");
      out.patients.push_back(std::move(p));
    } else if (kind == "note") {
      r.only({"kind", "note_id", "patient", "note_kind", "text"});
      NoteNode n;
      n.note_id = r.str("note_id");
      n.patient = r.str("patient");
      n.text = r.str("text");
      if (auto k = r.opt_str(j, "note_kind")) {
        auto parsed = parse_note_kind(*k);
        if (!parsed) r.fail("unknown note_kind '" + *k + "'");
        n.kind = *parsed;
      }
      out.notes.push_back(std::move(n));
    } else if (kind == "assertion") {
      r.only({"kind", "patient", "term", "confidence", "reasoning", "source_note", "extractor_version"});
      PhenotypeAssertion a{r.str("patient"), TermId::parse("HP:0000000"), 0.0, "", std::nullopt, ""};
      auto term = TermId::try_parse(r.str("term"));
      if (!term) r.fail("malformed term id '" + r.str("term") + "'");
      a.term = *term;
      if (!j.contains("confidence") || !j["confidence"].is_number()) r.fail("missing numeric field 'confidence'");
      a.confidence = j["confidence"].get<double>();
      a.reasoning = j.contains("reasoning") ? r.str("reasoning") : "";
      a.source_note = r.opt_str(j, "source_note");
      a.extractor_version = r.str("extractor_version");
      out.assertions.push_back(std::move(a));
    } else {
      r.fail("unknown record kind '" + kind + "'");
    }
  });
  return out;
}

std::string to_jsonl(const Graph& graph) {
  std::string out;
  auto line = [&](const json& j) { out += j.dump(-1, ' ', false, json::error_handler_t::replace) + "\n"; };
  for (const auto& p : graph.patients()) line(to_json(p));
  for (const auto& n : graph.notes()) line(to_json(n));
  for (const auto& a : graph.assertions()) line(to_json(a));
  return out;
}

void save_graph(const Graph& graph, const std::filesystem::path& path) { write_file(path, to_jsonl(graph)); }

Graph load_graph(const std::filesystem::path& path, const Ontology* ontology) {
  try {
    Graph g = build_graph(parse_records(read_file(path), path.string()), ontology);
    g.verify(ontology);
    return g;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Io || e.kind() == ErrorKind::Parse) throw;
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

// ---- queries ----

std::set<std::string> cohort_by_icd(const Graph& graph, const std::set<std::string>& codes, CodeMatch mode) {
  if (codes.empty()) throw Error(ErrorKind::Domain, "cohort_by_icd needs at least one code");
  std::set<std::string> wanted;
  for (const auto& c : codes) wanted.insert(normalize_code(c));
  std::set<std::string> out;
  for (const auto& p : graph.patients()) {
    std::size_t hits = 0;
    for (const auto& c : wanted) hits += p.icd10.count(c);
    if (mode == CodeMatch::Any ? hits > 0 : hits == wanted.size()) out.insert(p.key);
  }
  return out;
}

std::set<std::string> expand_icd_prefix(const Graph& graph, std::string_view prefix) {
  const std::string norm = normalize_code(prefix);
  std::set<std::string> out;
  for (const auto& p : graph.patients()) {
    for (const auto& c : p.icd10)
      if (c.rfind(norm, 0) == 0) out.insert(c);
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> keyword_search(const Graph& graph, std::string_view pattern) {
  if (pattern.empty()) throw Error(ErrorKind::Domain, "keyword_search needs a nonempty pattern");
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& n : graph.notes()) {
    if (icontains(n.text, pattern)) out.emplace_back(n.patient, n.note_id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string render_patient_record(const Graph& graph, const std::string& key) {
  auto p = graph.patient(key);
  if (!p) throw Error(ErrorKind::Domain, "unknown patient " + key);
  auto join = [](const std::set<std::string>& s) {
    std::string out;
    for (const auto& x : s) out += (out.empty() ? "" : ", ") + x;
    return out.empty() ? std::string("none") : out;
  };
  std::string out = "Patient " + p->key + "\n";
  const auto& d = p->demographics;
  if (d.age_years) out += "Age: " + std::to_string(*d.age_years) + "\n";
  if (d.race) out += "Race: " + *d.race + "\n";
  if (d.state) out += "State: " + *d.state + "\n";
  out += "ICD-10: " + join(p->icd10) + "\n";
  out += "CPT: " + join(p->cpt) + "\n";
  out += "RxNorm: " + join(p->rxnorm) + "\n";
  for (const auto& n : graph.notes_for(key)) {
    out += "\n[" + std::string(to_string(n.kind)) + " " + n.note_id + "]\n" + n.text + "\n";
  }
  return out;
}

}  // namespace phenokg
