#include "helpers.hpp"
#include "oracles.hpp"
#include "phenokg/fixtures.hpp"
#include "phenokg/ontology.hpp"
#include "phenokg/util.hpp"

using namespace phenokg;

namespace {

const char* kSmallObo = R"(format-version: 1.2
ontology: hp

[Term]
id: HP:0000001
name: All

[Term]
id: HP:0001250
name: Seizure
synonym: "Seizures" EXACT []
is_a: HP:0000001 ! All

[Term]
id: HP:0011172
name: Complex febrile seizure
def: "A febrile seizure with focal features." []
is_a: HP:0001250 ! Seizure
)";

}  // namespace

TEST_SUITE("util") {
  TEST_CASE("normalize_text folds case and collapses whitespace") {
    CHECK(normalize_text("  CoMpLeX \t  Febrile\nSeizure ") == "complex febrile seizure");
    CHECK(normalize_text("") == "");
  }

  TEST_CASE("find_word_bounded skips matches inside words") {
    CHECK(find_word_bounded("seizures and seizure", "seizure") == std::vector<std::size_t>{13});
    CHECK(find_word_bounded("a-seizure.", "seizure") == std::vector<std::size_t>{2});
  }

  TEST_CASE("utf8 helpers count code points") {
    const std::string s = "caf\xC3\xA9 au lait";
    CHECK(utf8_length(s) == 12);
    CHECK(utf8_slice(s, 0, 4) == "caf\xC3\xA9");
    CHECK_KIND(utf8_length("\xC3"), ErrorKind::Parse);
  }

  TEST_CASE("format_fixed rounds and never prints negative zero") {
    CHECK(format_fixed(2.0 / 3.0) == "0.667");
    CHECK(format_fixed(-0.0001) == "0.000");
    CHECK(format_fixed(34.0 / 38.0) == "0.895");
  }

  TEST_CASE("fnv1a64 matches the published test vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
  }

  TEST_CASE("Rng is reproducible and bounded") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
    Rng c(7);
    for (int i = 0; i < 1000; ++i) {
      CHECK(c.below(13) < 13);
      const double u = c.unit();
      CHECK(u >= 0.0);
      CHECK(u < 1.0);
    }
  }

  TEST_CASE("jsonl reader reports the failing line") {
    const auto msg = testutil::error_message([] { for_each_jsonl_text("{}\n\n{bad", [](std::size_t, const json&) {}); });
    CHECK(msg.find("3") != std::string::npos);
  }
}

TEST_SUITE("ontology") {
  TEST_CASE("TermId accepts canonical ids only") {
    CHECK(TermId::parse(" hp:0011172 ").str() == "HP:0011172");
    CHECK_FALSE(TermId::try_parse("HP:11172"));
    CHECK_FALSE(TermId::try_parse("HP:00111720"));
    CHECK_FALSE(TermId::try_parse("MP:0011172"));
    CHECK_KIND(TermId::parse("HP:abc"), ErrorKind::Parse);
  }

  TEST_CASE("three-term file loads") {
    testutil::TempDir dir("ont_small");
    write_file(dir / "hp.obo", R"([Term]
id: HP:0000001
name: All

[Term]
id: HP:0000118
name: Phenotypic abnormality
is_a: HP:0000001

[Term]
id: HP:0000707
name: Abnormality of the nervous system
is_a: HP:0000118
)");
    const Ontology ont = load_ontology(dir / "hp.obo");
    CHECK(ont.term_count() == 3);
    CHECK(ont.ancestors(TermId::parse("HP:0000707")).size() == 3);
  }

  TEST_CASE("lookup by name finds the febrile seizure term") {
    const Ontology ont = parse_ontology(kSmallObo);
    CHECK(ont.resolve_label("Complex febrile seizure") == std::vector{TermId::parse("HP:0011172")});
    CHECK(ont.at(TermId::parse("HP:0011172")).definition == "A febrile seizure with focal features.");
  }

  TEST_CASE("dangling parent is a validation error naming the orphan") {
    const std::string text = std::string(kSmallObo) + "\n[Term]\nid: HP:0000002\nname: Orphan\nis_a: HP:9999999\n";
    CHECK_KIND(parse_ontology(text), ErrorKind::Validation);
    CHECK(testutil::error_message([&] { parse_ontology(text); }).find("HP:9999999") != std::string::npos);
  }

  TEST_CASE("malformed stanzas report the line number") {
    const auto msg = testutil::error_message([] { parse_ontology("[Term]\nid: HP:0000001\nname: All\nnot a tag\n", "x.obo"); });
    CHECK(msg.find("x.obo:4") != std::string::npos);
    CHECK_KIND(parse_ontology("[Term]\nid: HP:1\nname: All\n"), ErrorKind::Parse);
    CHECK_KIND(parse_ontology("[Term]\nid: HP:0000001\n"), ErrorKind::Parse);
    CHECK_KIND(parse_ontology("[Term\nid: HP:0000001\n"), ErrorKind::Parse);
    CHECK_KIND(parse_ontology("[Term]\nid: HP:0000001\nname: A\n[Term]\nid: HP:0000001\nname: B\n"),
               ErrorKind::DuplicateId);
  }

  TEST_CASE("obsolete terms and other stanzas are skipped") {
    const Ontology ont = parse_ontology(
        "[Term]\nid: HP:0000001\nname: All\n\n[Term]\nid: HP:0000002\nname: Old\nis_obsolete: true\n\n"
        "[Typedef]\nid: part_of\nname: part of\n");
    CHECK(ont.term_count() == 1);
  }

  TEST_CASE("resolve_label normalizes and never guesses") {
    const Ontology ont = parse_ontology(kSmallObo);
    CHECK(ont.resolve_label("complex febrile seizure") == std::vector{TermId::parse("HP:0011172")});
    CHECK(ont.resolve_label("CoMpLeX   Febrile Seizure") == std::vector{TermId::parse("HP:0011172")});
    CHECK(ont.resolve_label("florgle").empty());
    CHECK(ont.resolve_label("seizures") == std::vector{TermId::parse("HP:0001250")});
  }

  TEST_CASE("resolve_label is idempotent under re-normalization") {
    const Ontology ont = fixtures::fixture_ontology();
    for (const auto& t : ont.terms()) {
      for (const std::string& variant : {t.name, to_upper_ascii(t.name), "  " + t.name + "  "}) {
        CHECK(ont.resolve_label(variant) == ont.resolve_label(normalize_text(variant)));
      }
    }
  }

  TEST_CASE("OBO round-trip yields the same term index") {
    const Ontology ont = fixtures::fixture_ontology();
    const Ontology back = parse_ontology(ont.to_obo());
    CHECK(back == ont);
    for (const auto& t : ont.terms()) CHECK(back.ancestors(t.id) == ont.ancestors(t.id));
  }

  TEST_CASE("frequency_bin on cohort counts") {
    CHECK(frequency_bin(Fraction{34, 38}) == FrequencyCategory::VeryFrequent);
    CHECK(frequency_bin(Fraction{24, 38}) == FrequencyCategory::Frequent);
    CHECK(frequency_bin(Fraction{1, 1}) == FrequencyCategory::Obligate);
    CHECK(frequency_bin(Fraction{0, 38}) == FrequencyCategory::Absent);
    CHECK(frequency_bin(1.0) == FrequencyCategory::Obligate);
    CHECK(frequency_bin(0.0) == FrequencyCategory::Absent);
  }

  TEST_CASE("frequency_bin rejects values outside [0,1]") {
    CHECK_KIND(frequency_bin(Fraction{3, 2}), ErrorKind::Domain);
    CHECK_KIND(frequency_bin(Fraction{1, 0}), ErrorKind::Domain);
    CHECK_KIND(frequency_bin(-0.01), ErrorKind::Domain);
    CHECK_KIND(frequency_bin(std::nan("")), ErrorKind::Domain);
  }

  TEST_CASE("frequency_bin agrees with the integer oracle for every small fraction") {
    for (long d = 1; d <= 120; ++d) {
      for (long n = 0; n <= d; ++n) {
        const int got = ordinal(frequency_bin(Fraction{static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(d)}));
        REQUIRE(got == oracle::bin_fraction(n, d));
      }
    }
  }

  TEST_CASE("frequency categories parse from names, labels and HPO ids") {
    CHECK(parse_frequency_category("VeryFrequent") == FrequencyCategory::VeryFrequent);
    CHECK(parse_frequency_category("Very frequent") == FrequencyCategory::VeryFrequent);
    CHECK(parse_frequency_category("HP:0040283") == FrequencyCategory::Occasional);
    CHECK(parse_frequency_category("Excluded") == FrequencyCategory::Absent);
    CHECK_FALSE(parse_frequency_category("sometimes"));
  }

  TEST_CASE("annotations require known terms and labels") {
    const Ontology ont = parse_ontology(kSmallObo);
    auto ann = parse_annotations("disease_id\thpo_id\tfrequency\nD:1\tHP:0011172\tVery frequent\n", ont);
    REQUIRE(ann.size() == 1);
    CHECK(ann[0].expected == FrequencyCategory::VeryFrequent);
    CHECK_KIND(parse_annotations("D:1\tHP:0000999\tFrequent\n", ont), ErrorKind::Validation);
    CHECK_KIND(parse_annotations("D:1\tHP:0011172\tsometimes\n", ont), ErrorKind::Parse);
    CHECK_KIND(parse_annotations("D:1\tHP:0011172\n", ont), ErrorKind::Parse);
  }

  TEST_CASE("fixture ontology carries the 46 Dravet terms") {
    const Ontology ont = fixtures::fixture_ontology();
    CHECK(fixtures::dravet_term_counts().size() == 46);
    for (const auto& row : fixtures::dravet_term_counts()) {
      REQUIRE(ont.contains(TermId::parse(row.id)));
      CHECK(ont.at(TermId::parse(row.id)).name == row.name);
    }
  }
}
