#include "phenokg/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace phenokg::fixtures {

const std::vector<CohortTermCount>& dravet_term_counts() {
  static const std::vector<CohortTermCount> rows = {
      {"HP:0011172", "Complex febrile seizure", 34},
      {"HP:0002373", "Febrile seizure (within the age range of 3 months to 6 years)", 24},
      {"HP:0100543", "Cognitive impairment", 23},
      {"HP:0006813", "Focal hemiclonic seizure", 16},
      {"HP:0010818", "Generalized tonic seizure", 13},
      {"HP:0007010", "Poor fine motor coordination", 12},
      {"HP:0011185", "EEG with focal epileptiform discharges", 11},
      {"HP:0008947", "Infantile muscular hypotonia", 9},
      {"HP:0011198", "EEG with generalized epileptiform discharges", 8},
      {"HP:0000729", "Autistic behavior", 6},
      {"HP:0002376", "Developmental regression", 6},
      {"HP:0000736", "Short attention span", 4},
      {"HP:0012847", "Epilepsia partialis continua", 4},
      {"HP:0100710", "Impulsivity", 4},
      {"HP:0001763", "Pes planus", 3},
      {"HP:0011468", "Facial tics", 3},
      {"HP:0031475", "Status epilepticus without prominent motor symptoms", 3},
      {"HP:0001300", "Parkinsonism", 2},
      {"HP:0002063", "Rigidity", 2},
      {"HP:0002311", "Incoordination", 2},
      {"HP:0002396", "Cogwheel rigidity", 2},
      {"HP:0000739", "Anxiety", 1},
      {"HP:0001336", "Myoclonus", 1},
      {"HP:0002067", "Bradykinesia", 1},
      {"HP:0002307", "Drooling", 1},
      {"HP:0002349", "Focal aware seizure", 1},
      {"HP:0007207", "Photosensitive tonic-clonic seizure", 1},
      {"HP:0007240", "Progressive gait ataxia", 1},
      {"HP:0007359", "Focal-onset seizure", 1},
      {"HP:0010841", "Multifocal epileptiform discharges", 1},
      {"HP:0011169", "Generalized clonic seizure", 1},
      {"HP:0011182", "Interictal epileptiform activity", 1},
      {"HP:0000466", "Limited neck range of motion", 0},
      {"HP:0000980", "Pallor", 0},
      {"HP:0001327", "Photosensitive myoclonic seizure", 0},
      {"HP:0002123", "Generalized myoclonic seizure", 0},
      {"HP:0002283", "Global brain atrophy", 0},
      {"HP:0002345", "Action tremor", 0},
      {"HP:0002384", "Focal impaired awareness seizure", 0},
      {"HP:0003066", "Limited knee extension", 0},
      {"HP:0007270", "Atypical absence seizure", 0},
      {"HP:0008081", "Pes valgus", 0},
      {"HP:0008770", "Obsessive-compulsive trait", 0},
      {"HP:0025101", "Dysgenesis of the hippocampus", 0},
      {"HP:0100694", "Tibial torsion", 0},
      {"HP:0200048", "Cyanotic episode", 0},
  };
  return rows;
}

namespace {

struct TermSpec {
  const char* id;
  const char* name;
  std::vector<const char*> parents;
  std::vector<const char*> synonyms = {};
};

const std::vector<TermSpec>& ontology_specs() {
  static const std::vector<TermSpec> specs = {
      {"HP:0000001", "All", {}},
      {"HP:0000118", "Phenotypic abnormality", {"HP:0000001"}},
      {"HP:0000707", "Abnormality of the nervous system", {"HP:0000118"}},
      {"HP:0000152", "Abnormality of head or neck", {"HP:0000118"}},
      {"HP:0040064", "Abnormality of limbs", {"HP:0000118"}},
      {"HP:0001574", "Abnormality of the integument", {"HP:0000118"}},
      {"HP:0001626", "Abnormality of the cardiovascular system", {"HP:0000118"}},
      {"HP:0001250", "Seizure", {"HP:0000707"}, {"Seizures", "Epileptic seizure"}},
      {"HP:0002353", "EEG abnormality", {"HP:0000707"}},
      {"HP:0000708", "Behavioral abnormality", {"HP:0000707"}},
      {"HP:0012759", "Neurodevelopmental abnormality", {"HP:0000707"}},
      {"HP:0100022", "Abnormality of movement", {"HP:0000707"}},

      {"HP:0002373", "Febrile seizure (within the age range of 3 months to 6 years)", {"HP:0001250"},
       {"Febrile seizures", "Febrile convulsion"}},
      {"HP:0011172", "Complex febrile seizure", {"HP:0002373"}},
      {"HP:0006813", "Focal hemiclonic seizure", {"HP:0001250"}},
      {"HP:0010818", "Generalized tonic seizure", {"HP:0001250"}},
      {"HP:0012847", "Epilepsia partialis continua", {"HP:0001250"}},
      {"HP:0031475", "Status epilepticus without prominent motor symptoms", {"HP:0001250"}},
      {"HP:0001327", "Photosensitive myoclonic seizure", {"HP:0001250"}},
      {"HP:0002123", "Generalized myoclonic seizure", {"HP:0001250"}},
      {"HP:0002349", "Focal aware seizure", {"HP:0001250"}},
      {"HP:0002384", "Focal impaired awareness seizure", {"HP:0001250"}},
      {"HP:0007207", "Photosensitive tonic-clonic seizure", {"HP:0001250"}},
      {"HP:0007270", "Atypical absence seizure", {"HP:0001250"}},
      {"HP:0007359", "Focal-onset seizure", {"HP:0001250"}},
      {"HP:0011169", "Generalized clonic seizure", {"HP:0001250"}},

      {"HP:0011185", "EEG with focal epileptiform discharges", {"HP:0002353"}},
      {"HP:0011198", "EEG with generalized epileptiform discharges", {"HP:0002353"}},
      {"HP:0010841", "Multifocal epileptiform discharges", {"HP:0002353"}},
      {"HP:0011182", "Interictal epileptiform activity", {"HP:0002353"}},

      {"HP:0000729", "Autistic behavior", {"HP:0000708"}},
      {"HP:0000736", "Short attention span", {"HP:0000708"}},
      {"HP:0100710", "Impulsivity", {"HP:0000708"}},
      {"HP:0000739", "Anxiety", {"HP:0000708"}},
      {"HP:0008770", "Obsessive-compulsive trait", {"HP:0000708"}},

      {"HP:0100543", "Cognitive impairment", {"HP:0012759"}},
      {"HP:0002376", "Developmental regression", {"HP:0012759"}},
      {"HP:0001263", "Global developmental delay", {"HP:0012759"}},
      {"HP:0001249", "Intellectual disability", {"HP:0012759"}},
      {"HP:0000750", "Delayed speech and language development", {"HP:0012759"}},

      {"HP:0001300", "Parkinsonism", {"HP:0100022"}},
      {"HP:0002063", "Rigidity", {"HP:0100022"}},
      {"HP:0002396", "Cogwheel rigidity", {"HP:0002063"}},
      {"HP:0002311", "Incoordination", {"HP:0100022"}},
      {"HP:0002067", "Bradykinesia", {"HP:0100022"}},
      {"HP:0001336", "Myoclonus", {"HP:0100022"}},
      {"HP:0007240", "Progressive gait ataxia", {"HP:0100022"}},
      {"HP:0002345", "Action tremor", {"HP:0100022"}},
      {"HP:0011468", "Facial tics", {"HP:0100022"}},
      {"HP:0007010", "Poor fine motor coordination", {"HP:0100022"}},
      {"HP:0001332", "Dystonia", {"HP:0100022"}},

      {"HP:0008947", "Infantile muscular hypotonia", {"HP:0000707"}},
      {"HP:0002283", "Global brain atrophy", {"HP:0000707"}},
      {"HP:0025101", "Dysgenesis of the hippocampus", {"HP:0000707"}},

      {"HP:0000466", "Limited neck range of motion", {"HP:0000152"}},
      {"HP:0002307", "Drooling", {"HP:0000152"}},
      {"HP:0001763", "Pes planus", {"HP:0040064"}, {"Flat feet"}},
      {"HP:0008081", "Pes valgus", {"HP:0040064"}},
      {"HP:0003066", "Limited knee extension", {"HP:0040064"}},
      {"HP:0100694", "Tibial torsion", {"HP:0040064"}},
      {"HP:0000980", "Pallor", {"HP:0001574"}},
      {"HP:0200048", "Cyanotic episode", {"HP:0001626"}},
  };
  return specs;
}

// Expected frequency for the synthetic disease entry. Constructed so the
// heat map shows agreement, over- and under-representation.
const std::map<std::string, FrequencyCategory>& expected_categories() {
  using F = FrequencyCategory;
  static const std::map<std::string, FrequencyCategory> m = {
      {"HP:0011172", F::VeryFrequent}, {"HP:0002373", F::Occasional},  {"HP:0100543", F::VeryFrequent},
      {"HP:0006813", F::Frequent},     {"HP:0010818", F::Occasional},  {"HP:0007010", F::Occasional},
      {"HP:0011185", F::Frequent},     {"HP:0008947", F::Frequent},    {"HP:0011198", F::Frequent},
      {"HP:0000729", F::Frequent},     {"HP:0002376", F::Frequent},    {"HP:0000736", F::Frequent},
      {"HP:0012847", F::Occasional},   {"HP:0100710", F::Occasional},  {"HP:0001763", F::Occasional},
      {"HP:0011468", F::Occasional},   {"HP:0031475", F::Frequent},    {"HP:0025101", F::VeryRare},
      {"HP:0100694", F::VeryRare},     {"HP:0003066", F::VeryRare},
  };
  return m;
}

}  // namespace

Ontology fixture_ontology() {
  std::vector<OntologyTerm> terms;
  for (const auto& s : ontology_specs()) {
    OntologyTerm t{TermId::parse(s.id), s.name, {}, "", {}};
    for (auto syn : s.synonyms) t.synonyms.emplace_back(syn);
    for (auto p : s.parents) t.parents.push_back(TermId::parse(p));
    terms.push_back(std::move(t));
  }
  return Ontology(std::move(terms));
}

std::set<TermId> dravet_allowed_terms() {
  std::set<TermId> out;
  for (const auto& r : dravet_term_counts()) out.insert(TermId::parse(r.id));
  return out;
}

std::string dravet_disease_context() {
  return "Dravet syndrome is a developmental and epileptic encephalopathy that usually begins in the first year "
         "of life, most often with prolonged seizures triggered by fever. Over early childhood several seizure "
         "types appear (myoclonic, focal, generalized tonic-clonic, atypical absence) together with slowing of "
         "development, behavioral problems, motor incoordination and, in older patients, a crouched gait. Most "
         "patients carry a pathogenic SCN1A variant.";
}

std::vector<DiseaseAnnotation> dravet_annotations(const Ontology& ontology) {
  std::vector<DiseaseAnnotation> out;
  const auto& expected = expected_categories();
  for (const auto& r : dravet_term_counts()) {
    auto it = expected.find(r.id);
    DiseaseAnnotation a{"DRAVET:FIXTURE", TermId::parse(r.id),
                        it == expected.end() ? FrequencyCategory::Occasional : it->second};
    if (!ontology.contains(a.phenotype))
      throw Error(ErrorKind::Validation, "fixture annotation term " + a.phenotype.str() + " missing from ontology");
    out.push_back(a);
  }
  return out;
}

std::vector<std::pair<TermId, std::string>> organ_system_roots() {
  return {
      {TermId::parse("HP:0001250"), "seizures"},
      {TermId::parse("HP:0002353"), "eeg"},
      {TermId::parse("HP:0012759"), "cognition and development"},
      {TermId::parse("HP:0000708"), "behavior"},
      {TermId::parse("HP:0100022"), "movement"},
      {TermId::parse("HP:0000707"), "nervous system"},
      {TermId::parse("HP:0000152"), "head and neck"},
      {TermId::parse("HP:0040064"), "limbs"},
      {TermId::parse("HP:0001574"), "skin"},
      {TermId::parse("HP:0001626"), "cardiovascular"},
  };
}

std::set<std::string> dravet_icd_codes() { return {"G40.83", "G40.833", "G40.834"}; }

namespace {

std::string padded(const char* prefix, std::size_t n, int width) {
  std::string digits = std::to_string(n);
  return prefix + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(digits.size()))), '0') +
         digits;
}

const std::vector<std::string> kStates = {"CA", "TX", "NY", "FL", "IL", "OH", "WA", "GA"};
const std::vector<std::string> kRaces = {"White", "Black", "Asian", "Other"};

Demographics random_demographics(Rng& rng, unsigned min_age, unsigned max_age) {
  Demographics d;
  d.age_years = min_age + static_cast<unsigned>(rng.below(max_age - min_age + 1));
  d.state = kStates[rng.below(kStates.size())];
  if (rng.below(4) != 0) d.race = kRaces[rng.below(kRaces.size())];
  d.zip = std::to_string(10000 + rng.below(89999));
  return d;
}

double confidence(Rng& rng) { return std::round((0.55 + 0.45 * rng.unit()) * 100.0) / 100.0; }

}  // namespace

std::string dravet_joint_patient() { return "D001"; }

Graph dravet_graph(const Ontology& ontology, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = dravet_graph_size();
  const std::size_t cohort_n = dravet_cohort_size();

  std::vector<std::string> cohort;
  std::vector<std::string> others;
  Graph g;
  const std::vector<std::string> codes = {"G40.833", "G40.834", "G40.83"};
  const std::vector<std::string> other_codes = {"G40.909", "R56.9", "F84.0", "G40.309", "R62.50", "G80.9"};
  for (std::size_t i = 1; i <= n; ++i) {
    PatientNode p;
    p.key = padded("D", i, 3);
    if (i <= cohort_n) {
      p.demographics = random_demographics(rng, 1, 40);
      if (p.key == dravet_joint_patient()) p.icd10 = {"G40.833", "G40.834"};
      else p.icd10 = {codes[i % codes.size()]};
      p.rxnorm = {"RX" + std::to_string(100 + rng.below(5))};
      cohort.push_back(p.key);
    } else {
      p.demographics = random_demographics(rng, 1, 80);
      p.icd10 = {other_codes[rng.below(other_codes.size())]};
      others.push_back(p.key);
    }
    p.cpt = {"95816"};
    g.add_patient(std::move(p));
  }

  // which cohort patients carry each term, and which of those repeat it
  std::map<std::string, std::vector<std::pair<TermId, bool>>> by_patient;
  std::size_t pick = 0;
  for (const auto& row : dravet_term_counts()) {
    std::vector<std::string> pool = cohort;
    rng.shuffle(pool);
    for (std::size_t k = 0; k < row.patients; ++k) by_patient[pool[k]].emplace_back(TermId::parse(row.id), ++pick % 5 == 0);
  }
  std::map<std::string, std::vector<TermId>> other_terms;
  const auto allowed = dravet_allowed_terms();
  const std::vector<TermId> allowed_list(allowed.begin(), allowed.end());
  for (std::size_t i = 0; i < 10 && i < others.size(); ++i) {
    other_terms[others[i]].push_back(allowed_list[rng.below(allowed_list.size())]);
  }

  for (const auto& key : cohort) {
    std::string findings;
    for (const auto& [term, _] : by_patient[key]) findings += " Findings include " + to_lower_ascii(ontology.at(term).name) + ".";
    g.add_note({key + "-n1", key, "Neurology follow-up for refractory epilepsy." + findings, NoteKind::ClinicalNote});
    g.add_note({key + "-n2", key, "Seizure onset in the first year of life, initially with fever.", NoteKind::History});
    if (rng.below(3) == 0)
      g.add_note({key + "-n3", key, "Sequencing report: heterozygous SCN1A variant classified as pathogenic.",
                  NoteKind::GeneticsReport});
  }
  for (const auto& key : others) {
    std::string text = "General clinic visit.";
    for (const auto& t : other_terms[key]) text += " Noted " + to_lower_ascii(ontology.at(t).name) + ".";
    g.add_note({key + "-n1", key, text, NoteKind::VisitPurpose});
  }

  for (const auto& key : cohort) {
    for (const auto& [term, repeat] : by_patient[key]) {
      g.upsert_assertion({key, term, confidence(rng), "documented in clinic note", key + "-n1", "fixture-1"}, ontology);
      if (repeat)
        g.upsert_assertion({key, term, confidence(rng), "mentioned in history", key + "-n2", "fixture-1"}, ontology);
    }
  }
  for (const auto& [key, terms] : other_terms) {
    for (const auto& t : terms) g.upsert_assertion({key, t, confidence(rng), "noted at visit", key + "-n1", "fixture-1"}, ontology);
  }
  return g;
}

// ---- discovery ----

std::set<std::string> bpan_generic_icd() { return {"R62.50", "G40.219", "G23.8", "F79", "G40.824", "G31.9"}; }

std::set<TermId> bpan_allowed_terms() {
  std::set<TermId> out;
  for (auto id : {"HP:0001263", "HP:0001249", "HP:0000750", "HP:0001332", "HP:0001300", "HP:0002067", "HP:0002063",
                  "HP:0001250"})
    out.insert(TermId::parse(id));
  return out;
}

namespace {

struct WeightedCue {
  const char* keyword;
  const char* description;
  double weight;
};

const std::vector<WeightedCue>& bpan_cues() {
  static const std::vector<WeightedCue> cues = {
      {"wdr45", "Pathogenic variant in WDR45 on genetic testing", 3},
      {"iron accumulation", "Brain MRI with iron accumulation in the globus pallidus or substantia nigra", 2},
      {"developmental delay", "Global developmental delay or intellectual disability from early childhood", 2},
      {"dystonia", "Dystonia appearing in adolescence or adulthood", 2},
      {"parkinsonism", "Parkinsonism (bradykinesia, rigidity) in adolescence or adulthood", 2},
      {"seizure", "Seizures in childhood", 1},
  };
  return cues;
}

enum Cue { kWdr45, kIron, kDelay, kDystonia, kParkinsonism, kSeizure };

std::string cue_sentence(int cue) {
  switch (cue) {
    case kWdr45: return "Genetic testing found a de novo WDR45 variant.";
    case kIron: return "MRI showed iron accumulation in the globus pallidus and substantia nigra.";
    case kDelay:
      return "Early history of global developmental delay and intellectual disability with delayed speech and "
             "language development.";
    case kDystonia: return "Dystonia noted since late adolescence.";
    case kParkinsonism: return "Now shows parkinsonism with bradykinesia and rigidity.";
    case kSeizure: return "Recurrent seizure activity in early childhood.";
  }
  return "";
}

const std::vector<std::string> kFiller = {
    "Routine follow-up, no new concerns.",
    "Medication list reviewed and reconciled.",
    "Discussed sleep hygiene and school support.",
    "Physical therapy continues twice weekly.",
    "Family reports stable behavior at home.",
};

}  // namespace

ScoringRubric bpan_rubric() {
  ScoringRubric r;
  r.disease_name = "Beta-propeller protein-associated neurodegeneration (BPAN)";
  r.disease_context =
      "BPAN is a rare X-linked disorder of brain iron accumulation caused by WDR45 variants. Children show global "
      "developmental delay, intellectual disability and often seizures; in adolescence or early adulthood a "
      "progressive dystonia-parkinsonism appears. MRI shows iron deposition in the globus pallidus and "
      "substantia nigra. There is no dedicated ICD-10 code.";
  for (const auto& c : bpan_cues()) r.criteria.push_back({c.description, c.weight});
  r.scale_note = "0 means nothing in the record suggests the disease; 9 means the record is nearly diagnostic. "
                 "Weigh findings by the criteria weights.";
  return r;
}

int bpan_oracle_score(std::string_view record) {
  const std::string text = to_lower_ascii(record);
  double total = 0;
  double hit = 0;
  for (const auto& c : bpan_cues()) {
    total += c.weight;
    if (text.find(c.keyword) != std::string::npos) hit += c.weight;
  }
  return static_cast<int>(std::floor(9.0 * hit / total));
}

BpanFixture bpan_fixture(std::uint64_t seed, std::size_t n_patients, std::size_t n_planted) {
  if (n_planted < 2 || n_planted > n_patients)
    throw Error(ErrorKind::Domain, "bpan_fixture needs 2 <= n_planted <= n_patients");
  Rng rng(seed);
  std::vector<std::size_t> order(n_patients);
  for (std::size_t i = 0; i < n_patients; ++i) order[i] = i + 1;
  rng.shuffle(order);
  const std::size_t n_weak = (n_patients - n_planted) / 4;

  const auto generic_set = bpan_generic_icd();
  const std::vector<std::string> generic(generic_set.begin(), generic_set.end());
  const std::vector<std::string> background = {"I10", "E11.9", "J45.909", "M54.5", "K21.9", "F41.1"};
  // weak cue subsets reach at most 6 of 12 weight points, planted at least 10
  const std::vector<std::vector<int>> planted_sets = {
      {kDelay, kDystonia, kParkinsonism, kSeizure}, {kDelay, kDystonia, kParkinsonism}, {kDelay, kDystonia, kSeizure},
      {kDelay, kParkinsonism, kSeizure},            {kDystonia, kParkinsonism, kSeizure}};
  const std::vector<int> weak_cues = {kDelay, kDystonia, kParkinsonism, kSeizure};

  BpanFixture fx;
  std::vector<PatientNode> patients;
  std::vector<NoteNode> notes;
  for (std::size_t pos = 0; pos < n_patients; ++pos) {
    const std::size_t idx = order[pos];
    PatientNode p;
    p.key = padded("P", idx, 4);
    std::vector<int> cues;
    if (pos < n_planted) {
      fx.planted.insert(p.key);
      cues = {kWdr45, kIron};
      const auto& extra = planted_sets[pos % planted_sets.size()];
      cues.insert(cues.end(), extra.begin(), extra.end());
      p.demographics = random_demographics(rng, 14, 45);
      if (pos != 0) {
        p.icd10.insert(generic[rng.below(generic.size())]);
        p.icd10.insert(generic[rng.below(generic.size())]);
      }
    } else if (pos < n_planted + n_weak) {
      std::vector<int> pool = weak_cues;
      rng.shuffle(pool);
      pool.resize(rng.below(4));
      cues = pool;
      p.demographics = random_demographics(rng, 2, 60);
      p.icd10.insert(generic[rng.below(generic.size())]);
      if (rng.below(3) == 0) p.icd10.insert(background[rng.below(background.size())]);
    } else {
      p.demographics = random_demographics(rng, 2, 85);
      p.icd10.insert(background[rng.below(background.size())]);
    }
    std::sort(cues.begin(), cues.end());
    std::string text;
    for (int c : cues) text += (text.empty() ? "" : " ") + cue_sentence(c);
    text += (text.empty() ? "" : " ") + kFiller[rng.below(kFiller.size())];
    notes.push_back({p.key + "-n1", p.key, text, NoteKind::ClinicalNote});
    if (pos < 2) {
      fx.keyword_hits.insert(p.key);
      notes.push_back({p.key + "-n2", p.key, "Referred to movement disorders clinic, suspected BPAN.",
                       NoteKind::VisitPurpose});
    }
    patients.push_back(std::move(p));
  }
  std::sort(patients.begin(), patients.end(), [](const PatientNode& a, const PatientNode& b) { return a.key < b.key; });
  fx.graph = build_graph(GraphRecords{std::move(patients), std::move(notes), {}});
  return fx;
}

namespace {

// Key from a request tag "<task>:<key>[:...]".
std::string tag_key(const std::string& tag) {
  auto first = tag.find(':');
  if (first == std::string::npos) return "";
  auto second = tag.find(':', first + 1);
  return tag.substr(first + 1, second == std::string::npos ? std::string::npos : second - first - 1);
}

}  // namespace

ScriptedBackend bpan_oracle_backend(const Ontology& ontology) {
  const auto allowed = bpan_allowed_terms();
  std::vector<std::pair<TermId, std::string>> names;
  for (const auto& t : allowed) names.emplace_back(t, to_lower_ascii(ontology.at(t).name));
  return ScriptedBackend([names](const ChatRequest& req) -> std::string {
    const std::string key = tag_key(req.request_tag);
    if (req.request_tag.rfind("score:", 0) == 0) {
      const int s = bpan_oracle_score(req.user);
      return json{{"score", s}, {"rationale", "weighted rubric cues: " + std::to_string(s)}}.dump();
    }
    if (req.request_tag.rfind("hpo:", 0) == 0) {
      if (req.request_tag.find(":glean") != std::string::npos) return "{}";
      const std::string text = to_lower_ascii(req.user);
      json items = json::array();
      for (const auto& [id, name] : names) {
        if (!find_word_bounded(text, name).empty())
          items.push_back({{"category", id.str()}, {"confidence", 0.9}, {"reasoning", "named in the record"}});
      }
      return json{{key, items}}.dump();
    }
    throw Error(ErrorKind::Domain, "oracle backend cannot answer request tagged '" + req.request_tag + "'");
  });
}

Cassette oracle_cassette(const TaskSpec& spec, const std::vector<FewShotExample>& docs, const FewShotPolicy& policy,
                         GleanConfig glean) {
  validate(glean);
  Cassette c;
  for (const auto& ex : docs) {
    const std::string reply = render_output(ex.gold).dump();
    c.add(build_prompt(spec, ex.doc, policy), reply);
    if (glean.iterations > 0) c.add(build_glean_prompt(spec, ex.doc, policy, ex.gold), reply);
  }
  return c;
}

}  // namespace phenokg::fixtures
