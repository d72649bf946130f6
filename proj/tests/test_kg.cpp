#include "helpers.hpp"
#include "phenokg/fixtures.hpp"
#include "phenokg/kg.hpp"

using namespace phenokg;

namespace {

TermId tid(const char* s) { return TermId::parse(s); }

PatientNode patient(std::string key, std::set<std::string> icd = {}) {
  PatientNode p;
  p.key = std::move(key);
  p.icd10 = std::move(icd);
  return p;
}

PhenotypeAssertion assertion(std::string patient, const char* term, double confidence = 0.9,
                             std::optional<std::string> note = std::nullopt) {
  return PhenotypeAssertion{std::move(patient), tid(term), confidence, "r", std::move(note), "v1"};
}

}  // namespace

TEST_SUITE("kg") {
  TEST_CASE("Dravet fixture yields a cohort of 38 among 100 patients") {
    const Ontology ont = fixtures::fixture_ontology();
    const Graph g = fixtures::dravet_graph(ont);
    CHECK(g.patient_count() == 100);
    CHECK(cohort_by_icd(g, fixtures::dravet_icd_codes()).size() == 38);
  }

  TEST_CASE("build_graph over the 38 cohort patients gives 38 nodes") {
    const Ontology ont = fixtures::fixture_ontology();
    const Graph full = fixtures::dravet_graph(ont);
    const auto cohort = cohort_by_icd(full, fixtures::dravet_icd_codes());
    GraphRecords rec;
    for (const auto& key : cohort) {
      rec.patients.push_back(*full.patient(key));
      for (auto& n : full.notes_for(key)) rec.notes.push_back(n);
      for (auto& a : full.assertions_for(key)) rec.assertions.push_back(a);
    }
    const Graph g = build_graph(rec, &ont);
    CHECK(g.patient_count() == 38);
  }

  TEST_CASE("empty input is an empty valid graph") {
    const Graph g = build_graph(GraphRecords{});
    CHECK(g.patient_count() == 0);
    CHECK(g.edge_count() == 0);
    CHECK(to_jsonl(g).empty());
    CHECK(parse_records("").patients.empty());
  }

  TEST_CASE("note for an unknown patient names the note") {
    GraphRecords rec;
    rec.notes.push_back(NoteNode{"n-42", "ghost", "text", NoteKind::ClinicalNote});
    CHECK_KIND(build_graph(rec), ErrorKind::Integrity);
    CHECK(testutil::error_message([&] { build_graph(rec); }).find("n-42") != std::string::npos);
  }

  TEST_CASE("duplicate patient and note ids are rejected") {
    Graph g;
    g.add_patient(patient("p1"));
    CHECK_KIND(g.add_patient(patient("p1")), ErrorKind::DuplicateId);
    g.add_note(NoteNode{"n1", "p1", "x", NoteKind::History});
    CHECK_KIND(g.add_note(NoteNode{"n1", "p1", "y", NoteKind::History}), ErrorKind::DuplicateId);
  }

  TEST_CASE("codes are normalized on insert and in queries") {
    Graph g;
    g.add_patient(patient("p1", {" g40.833 "}));
    CHECK(g.patient("p1")->icd10 == std::set<std::string>{"G40.833"});
    CHECK(cohort_by_icd(g, {"g40.833"}) == std::set<std::string>{"p1"});
    CHECK_KIND(normalize_code("   "), ErrorKind::Validation);
  }

  TEST_CASE("cohort queries") {
    Graph g;
    g.add_patient(patient("a", {"G40.833", "G40.834"}));
    g.add_patient(patient("b", {"G40.833"}));
    g.add_patient(patient("c", {"G40.834", "R56.00"}));
    CHECK(cohort_by_icd(g, {"Z99.99"}).empty());
    CHECK(cohort_by_icd(g, {"G40.833", "G40.834"}, CodeMatch::Any) == std::set<std::string>{"a", "b", "c"});
    CHECK(cohort_by_icd(g, {"G40.833", "G40.834"}, CodeMatch::All) == std::set<std::string>{"a"});
    CHECK(expand_icd_prefix(g, "G40.83") == std::set<std::string>{"G40.833", "G40.834"});
    CHECK_KIND(cohort_by_icd(g, {}), ErrorKind::Domain);
  }

  TEST_CASE("all-mode on the fixture finds the single joint patient") {
    const Ontology ont = fixtures::fixture_ontology();
    const Graph g = fixtures::dravet_graph(ont);
    CHECK(cohort_by_icd(g, {"G40.833", "G40.834"}, CodeMatch::All) ==
          std::set<std::string>{fixtures::dravet_joint_patient()});
  }

  TEST_CASE("any-mode grows and all-mode shrinks as codes are added") {
    const Ontology ont = fixtures::fixture_ontology();
    const Graph g = fixtures::dravet_graph(ont);
    const std::vector<std::string> codes{"G40.83", "G40.833", "G40.834", "R56.00", "G40.909"};
    std::set<std::string> query;
    std::size_t last_any = 0, last_all = g.patient_count();
    for (const auto& c : codes) {
      query.insert(c);
      const auto any = cohort_by_icd(g, query, CodeMatch::Any).size();
      const auto all = cohort_by_icd(g, query, CodeMatch::All).size();
      CHECK(any >= last_any);
      CHECK(all <= last_all);
      CHECK(all <= any);
      last_any = any;
      last_all = all;
    }
  }

  TEST_CASE("keyword search finds the two planted BPAN patients in any case") {
    const auto fx = fixtures::bpan_fixture();
    CHECK(fx.keyword_hits.size() == 2);
    for (const char* pattern : {"BPAN", "bpan", "BpAn"}) {
      std::set<std::string> patients;
      for (const auto& [p, note] : keyword_search(fx.graph, pattern)) patients.insert(p);
      CHECK(patients == fx.keyword_hits);
    }
    CHECK(keyword_search(fx.graph, "florgle-absent-term").empty());
    CHECK_KIND(keyword_search(fx.graph, ""), ErrorKind::Domain);
  }

  TEST_CASE("upserting the same assertion twice keeps the edge count") {
    const Ontology ont = fixtures::fixture_ontology();
    Graph g;
    g.add_patient(patient("p1"));
    CHECK(g.upsert_assertion(assertion("p1", "HP:0011172"), ont));
    const auto edges = g.edge_count();
    CHECK_FALSE(g.upsert_assertion(assertion("p1", "HP:0011172"), ont));
    CHECK(g.edge_count() == edges);
    CHECK(g.upsert_assertion(assertion("p1", "HP:0011172", 0.4), ont));
    CHECK(g.assertion_count() == 1);
    CHECK(g.assertions()[0].confidence == 0.4);
  }

  TEST_CASE("assertions are validated") {
    const Ontology ont = fixtures::fixture_ontology();
    Graph g;
    g.add_patient(patient("p1"));
    CHECK_KIND(g.upsert_assertion(assertion("p1", "HP:0000000"), ont), ErrorKind::Validation);
    CHECK_KIND(g.upsert_assertion(assertion("ghost", "HP:0011172"), ont), ErrorKind::Integrity);
    CHECK_KIND(g.upsert_assertion(assertion("p1", "HP:0011172", 1.5), ont), ErrorKind::Domain);
    CHECK_KIND(g.upsert_assertion(assertion("p1", "HP:0011172", 0.5, "missing-note"), ont), ErrorKind::Integrity);
    CHECK(g.assertion_count() == 0);
  }

  TEST_CASE("save then load gives an equal graph") {
    testutil::TempDir dir("kg_roundtrip");
    const Ontology ont = fixtures::fixture_ontology();
    const Graph g = fixtures::dravet_graph(ont);
    save_graph(g, dir / "g.jsonl");
    const Graph back = load_graph(dir / "g.jsonl", &ont);
    CHECK(back == g);
    CHECK(to_jsonl(back) == to_jsonl(g));
    CHECK(back.edge_count() == g.edge_count());
  }

  TEST_CASE("records may appear in any order in the file") {
    const Ontology ont = fixtures::fixture_ontology();
    Graph g;
    g.add_patient(patient("p1", {"G40.833"}));
    g.add_note(NoteNode{"n1", "p1", "febrile seizure", NoteKind::ClinicalNote});
    g.upsert_assertion(assertion("p1", "HP:0011172", 0.9, "n1"), ont);
    auto lines = split(to_jsonl(g), '\n');
    std::reverse(lines.begin(), lines.end());
    std::string reversed;
    for (const auto& l : lines)
      if (!l.empty()) reversed += l + "\n";
    CHECK(build_graph(parse_records(reversed), &ont) == g);
  }

  TEST_CASE("malformed records report their line") {
    const auto msg = testutil::error_message([] { parse_records("{\"kind\":\"patient\",\"key\":\"a\"}\n{\"kind\":\"alien\"}\n"); });
    CHECK(msg.find("2") != std::string::npos);
    CHECK_KIND(parse_records("{\"kind\":\"alien\"}\n"), ErrorKind::Parse);
  }

  TEST_CASE("patient record rendering includes codes and notes") {
    Graph g;
    g.add_patient(patient("p1", {"G40.833"}));
    g.add_note(NoteNode{"n1", "p1", "onset with febrile seizure", NoteKind::ClinicalNote});
    const auto text = render_patient_record(g, "p1");
    CHECK(text.find("G40.833") != std::string::npos);
    CHECK(text.find("onset with febrile seizure") != std::string::npos);
  }
}
