#include "helpers.hpp"
#include "oracles.hpp"
#include "phenokg/cohortstats.hpp"
#include "phenokg/fixtures.hpp"

using namespace phenokg;

namespace {

TermId tid(const char* s) { return TermId::parse(s); }

struct DravetSetup {
  Ontology ont = fixtures::fixture_ontology();
  Graph graph = fixtures::dravet_graph(ont);
  std::set<std::string> cohort = cohort_by_icd(graph, fixtures::dravet_icd_codes());
  std::set<TermId> terms = fixtures::dravet_allowed_terms();
};

}  // namespace

TEST_SUITE("cohortstats") {
  TEST_CASE("fixture reproduces the tabulated counts over 38 patients") {
    DravetSetup s;
    const auto table = phenotype_frequency(s.graph, s.cohort, s.terms, s.ont);
    CHECK(table.at(tid("HP:0011172")) == TermFrequency{34, 38});
    CHECK(table.at(tid("HP:0002373")) == TermFrequency{24, 38});
    for (const auto& row : fixtures::dravet_term_counts()) CHECK(table.at(tid(row.id)).count == row.patients);
  }

  TEST_CASE("repeated assertions count a patient once") {
    const Ontology ont = fixtures::fixture_ontology();
    Graph g;
    g.add_patient(PatientNode{"p1", {}, {}, {}, {}});
    g.add_patient(PatientNode{"p2", {}, {}, {}, {}});
    for (const char* note : {"n1", "n2", "n3"}) {
      g.add_note(NoteNode{note, "p1", "x", NoteKind::ClinicalNote});
      g.upsert_assertion(PhenotypeAssertion{"p1", tid("HP:0011172"), 0.8, "", note, "v"}, ont);
    }
    CHECK(g.assertion_count() == 3);
    const auto t = phenotype_frequency(g, {"p1", "p2"}, {tid("HP:0011172"), tid("HP:0001336")}, ont);
    CHECK(t.at(tid("HP:0011172")) == TermFrequency{1, 2});
    CHECK(t.at(tid("HP:0001336")) == TermFrequency{0, 2});
    CHECK(t.at(tid("HP:0001336")).fraction().value() == 0.0);
  }

  TEST_CASE("argument errors") {
    DravetSetup s;
    CHECK_KIND(phenotype_frequency(s.graph, {}, s.terms, s.ont), ErrorKind::Domain);
    CHECK_KIND(phenotype_frequency(s.graph, {"nobody"}, s.terms, s.ont), ErrorKind::Domain);
    CHECK_KIND(phenotype_frequency(s.graph, s.cohort, {tid("HP:0000000")}, s.ont), ErrorKind::Validation);
    CHECK_KIND(phenotype_frequency(s.graph, s.cohort, s.terms, s.ont, 1.5), ErrorKind::Domain);
  }

  TEST_CASE("raising min_confidence never raises a count") {
    DravetSetup s;
    std::map<TermId, std::size_t> last;
    for (const auto& t : s.terms) last.emplace(t, s.cohort.size());
    for (double c = 0.0; c <= 1.0; c += 0.05) {
      const auto table = phenotype_frequency(s.graph, s.cohort, s.terms, s.ont, c);
      std::size_t total = 0, biggest = 0;
      for (const auto& [term, f] : table) {
        CHECK(f.count <= last.at(term));
        CHECK(f.count <= f.cohort_size);
        last.at(term) = f.count;
        total += f.count;
        biggest = std::max(biggest, f.count);
      }
      CHECK(total >= biggest);
    }
  }

  TEST_CASE("bin deltas: 34/38 vs VeryFrequent, 0/38 vs Occasional, 1.0 vs Obligate") {
    FrequencyTable table;
    table[tid("HP:0011172")] = {34, 38};
    table[tid("HP:0001336")] = {0, 38};
    table[tid("HP:0002373")] = {38, 38};
    const std::vector<DiseaseAnnotation> ann{{"D", tid("HP:0011172"), FrequencyCategory::VeryFrequent},
                                             {"D", tid("HP:0001336"), FrequencyCategory::Occasional},
                                             {"D", tid("HP:0002373"), FrequencyCategory::Obligate}};
    const auto rows = compare_to_ontology(table, ann);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].bin_delta == 0);
    CHECK(rows[0].observed_bin == FrequencyCategory::VeryFrequent);
    CHECK(rows[1].bin_delta == -2);
    CHECK(rows[1].observed_bin == FrequencyCategory::Absent);
    CHECK(rows[2].bin_delta == 0);
    CHECK_KIND(compare_to_ontology({}, ann), ErrorKind::Domain);
  }

  TEST_CASE("one comparison row per annotation with deltas from the oracle") {
    DravetSetup s;
    const auto table = phenotype_frequency(s.graph, s.cohort, s.terms, s.ont);
    const auto ann = fixtures::dravet_annotations(s.ont);
    const auto rows = compare_to_ontology(table, ann);
    REQUIRE(rows.size() == ann.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& f = table.at(ann[i].phenotype);
      const int observed = oracle::bin_fraction(long(f.count), long(f.cohort_size));
      CHECK(rows[i].bin_delta == observed - ordinal(ann[i].expected));
    }
  }

  TEST_CASE("heatmap rows sort by group then term") {
    const Ontology ont = fixtures::fixture_ontology();
    FrequencyTable table;
    table[tid("HP:0011172")] = {34, 38};
    table[tid("HP:0001763")] = {3, 38};
    table[tid("HP:0002373")] = {24, 38};
    const std::vector<DiseaseAnnotation> ann{{"D", tid("HP:0011172"), FrequencyCategory::VeryFrequent},
                                             {"D", tid("HP:0001763"), FrequencyCategory::Occasional},
                                             {"D", tid("HP:0002373"), FrequencyCategory::Frequent}};
    const Grouping grouping{{tid("HP:0011172"), "nervous"}, {tid("HP:0002373"), "nervous"}, {tid("HP:0001763"), "limb"}};
    const auto csv = heatmap_csv(compare_to_ontology(table, ann), ont, grouping);
    const auto lines = split(csv, '\n');
    REQUIRE(lines.size() >= 4);
    CHECK(lines[0] == "term,name,group,observed_fraction,observed_bin,expected_bin,bin_delta");
    CHECK(lines[1].starts_with("HP:0001763,"));
    CHECK(lines[2].starts_with("HP:0002373,"));
    CHECK(lines[3].starts_with("HP:0011172,Complex febrile seizure,nervous,0.895,"));
    CHECK(heatmap_csv(compare_to_ontology(table, ann), ont, grouping) == csv);
  }

  TEST_CASE("terms without a group land in ungrouped") {
    const Ontology ont = fixtures::fixture_ontology();
    FrequencyTable table;
    table[tid("HP:0011172")] = {1, 2};
    const auto rows = compare_to_ontology(table, {{"D", tid("HP:0011172"), FrequencyCategory::Frequent}});
    CHECK(heatmap_csv(rows, ont, {}).find(",ungrouped,") != std::string::npos);
  }

  TEST_CASE("grouping file and ancestor grouping") {
    const Ontology ont = fixtures::fixture_ontology();
    const auto g = parse_grouping("# comment\nHP:0011172\tnervous\n\n");
    CHECK(g.at(tid("HP:0011172")) == "nervous");
    CHECK_KIND(parse_grouping("HP:0011172\n"), ErrorKind::Parse);
    const auto by_anc = group_by_ancestors(ont, fixtures::dravet_allowed_terms(), fixtures::organ_system_roots());
    CHECK(by_anc.count(tid("HP:0011172")) == 1);
  }

  TEST_CASE("frequency csv renders three-decimal fractions") {
    const Ontology ont = fixtures::fixture_ontology();
    FrequencyTable table;
    table[tid("HP:0011172")] = {34, 38};
    const auto csv = frequency_csv(table, ont);
    CHECK(csv.find("HP:0011172,Complex febrile seizure,34,38,0.895") != std::string::npos);
  }
}
