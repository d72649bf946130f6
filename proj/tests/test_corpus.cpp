#include "helpers.hpp"
#include "phenokg/corpus.hpp"
#include "phenokg/fixtures.hpp"

using namespace phenokg;

namespace {

std::vector<int> numbered(int n) {
  std::vector<int> v;
  for (int i = 0; i < n; ++i) v.push_back(i);
  return v;
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("minimal PubTator record loads with one span") {
    const auto corpus = parse_span_corpus("d1|t|aspirin causes nausea\nd1|a|\nd1\t0\t7\taspirin\tChemical\tD001241\n\n");
    REQUIRE(corpus.size() == 1);
    REQUIRE(corpus[0].spans.size() == 1);
    const auto& s = corpus[0].spans[0];
    CHECK(s.surface == "aspirin");
    CHECK(s.entity_type == EntityType::Chemical);
    CHECK(s.concept_id == std::optional<std::string>("D001241"));
  }

  TEST_CASE("offsets covering the wrong text are an integrity error naming the doc") {
    const std::string text = "d1|t|aspirin causes nausea\nd1|a|\nd1\t8\t15\taspirin\tChemical\tD001241\n";
    CHECK_KIND(parse_span_corpus(text), ErrorKind::Integrity);
    CHECK(testutil::error_message([&] { parse_span_corpus(text); }).find("d1") != std::string::npos);
    CHECK_KIND(parse_span_corpus("d1|t|aspirin\nd1|a|\nd1\t0\t99\taspirin\tChemical\tX\n"), ErrorKind::Integrity);
  }

  TEST_CASE("repeated doc_id is a duplicate-id error") {
    CHECK_KIND(parse_span_corpus("d1|t|one\nd1|a|\n\nd1|t|two\nd1|a|\n"), ErrorKind::DuplicateId);
    CHECK_KIND(parse_hpo_gold("{\"doc_id\":\"a\",\"text\":\"x\",\"hpo_ids\":[]}\n"
                              "{\"doc_id\":\"a\",\"text\":\"y\",\"hpo_ids\":[]}\n"),
               ErrorKind::DuplicateId);
  }

  TEST_CASE("offsets count code points") {
    const auto corpus = parse_span_corpus("d1|t|caf\xC3\xA9 aspirin\nd1|a|\nd1\t5\t12\taspirin\tChemical\t-\n");
    CHECK(corpus[0].spans.at(0).start == 5);
  }

  TEST_CASE("PubTator round-trip") {
    const auto corpus = synthesize_span_fixture(3, 20, 4);
    CHECK(parse_span_corpus(to_pubtator(corpus)) == corpus);
  }

  TEST_CASE("HPO gold loader validates ids against the ontology") {
    const Ontology ont = fixtures::fixture_ontology();
    const std::string good = "{\"doc_id\":\"a\",\"text\":\"x\",\"hpo_ids\":[\"HP:0011172\"]}\n";
    CHECK(parse_hpo_gold(good, &ont).at(0).terms.size() == 1);
    CHECK_KIND(parse_hpo_gold("{\"doc_id\":\"a\",\"text\":\"x\",\"hpo_ids\":[\"HP:0000000\"]}\n", &ont),
               ErrorKind::Validation);
    CHECK_KIND(parse_hpo_gold("{\"doc_id\":\"a\",\"text\":\"x\"}\n"), ErrorKind::Parse);
    CHECK_KIND(parse_hpo_gold("{\"doc_id\":\"a\",\"text\":\"  \",\"hpo_ids\":[]}\n"), ErrorKind::Integrity);
  }

  TEST_CASE("multilabel loader rejects labels outside the universe") {
    CHECK(multilabel_universe().size() == 15);
    CHECK(in_multilabel_universe("NONE"));
    CHECK(in_multilabel_universe("UNSURE"));
    CHECK_KIND(parse_multilabel_gold("{\"doc_id\":\"a\",\"text\":\"x\",\"labels\":[\"florgle\"]}\n"),
               ErrorKind::Validation);
    const auto corpus = synthesize_multilabel_fixture(5, 30);
    CHECK(parse_multilabel_gold(to_jsonl(corpus)) == corpus);
  }

  TEST_CASE("split of 223 with test_size 23 gives 200 and 23") {
    const auto [train, test] = split_train_test(numbered(223), 23, 1);
    CHECK(train.size() == 200);
    CHECK(test.size() == 23);
    std::vector<int> all(train);
    all.insert(all.end(), test.begin(), test.end());
    std::sort(all.begin(), all.end());
    CHECK(all == numbered(223));
    CHECK(std::is_sorted(train.begin(), train.end()));
    CHECK(std::is_sorted(test.begin(), test.end()));
  }

  TEST_CASE("test_size 0 keeps the corpus whole") {
    const auto [train, test] = split_train_test(numbered(17), 0, 9);
    CHECK(train == numbered(17));
    CHECK(test.empty());
  }

  TEST_CASE("split is deterministic and seed-dependent") {
    CHECK(split_train_test(numbered(100), 10, 4) == split_train_test(numbered(100), 10, 4));
    CHECK(split_train_test(numbered(100), 10, 4).second != split_train_test(numbered(100), 10, 5).second);
    CHECK_KIND(split_train_test(numbered(5), 6, 1), ErrorKind::Domain);
  }

  TEST_CASE("synthesized notes are recoverable by a substring scan") {
    const Ontology ont = fixtures::fixture_ontology();
    const auto corpus = synthesize_fixture(1, ont, 10, 3);
    REQUIRE(corpus.size() == 10);
    for (const auto& g : corpus) {
      CHECK(g.terms.size() == 3);
      const std::string folded = normalize_text(g.doc.text);
      for (const auto& t : g.terms) CHECK(folded.find(normalize_text(ont.at(t).name)) != std::string::npos);
      CHECK(dictionary_scan(ont, g.doc.text) == g.terms);
    }
  }

  TEST_CASE("synthesis is byte-identical for a seed") {
    const Ontology ont = fixtures::fixture_ontology();
    CHECK(to_jsonl(synthesize_fixture(8, ont, 25, 2)) == to_jsonl(synthesize_fixture(8, ont, 25, 2)));
    CHECK(to_pubtator(synthesize_span_fixture(8, 5, 3)) == to_pubtator(synthesize_span_fixture(8, 5, 3)));
  }

  TEST_CASE("synthesis argument errors") {
    const Ontology ont = fixtures::fixture_ontology();
    CHECK_KIND(synthesize_fixture(1, ont, 0, 3), ErrorKind::Domain);
    CHECK_KIND(synthesize_fixture(1, ont, 5, ont.term_count() + 1), ErrorKind::Domain);
    CHECK_KIND(synthesize_span_fixture(1, 0, 3), ErrorKind::Domain);
  }
}
