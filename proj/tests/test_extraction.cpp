#include "helpers.hpp"
#include "oracles.hpp"
#include "phenokg/extraction.hpp"
#include "phenokg/fixtures.hpp"

using namespace phenokg;

namespace {

TermId tid(const char* s) { return TermId::parse(s); }

HpoExtraction hpo(std::string key, std::vector<std::pair<const char*, double>> items) {
  HpoExtraction h{std::move(key), {}};
  for (auto& [id, c] : items) h.assertions.push_back(HpoAssertion{tid(id), c, "r"});
  std::sort(h.assertions.begin(), h.assertions.end(),
            [](const HpoAssertion& a, const HpoAssertion& b) { return a.term < b.term; });
  return h;
}

std::string hpo_reply(const std::string& key, const std::vector<std::string>& ids) {
  json items = json::array();
  for (const auto& id : ids) items.push_back({{"category", id}, {"confidence", 0.9}, {"reasoning", "seen"}});
  return json{{key, items}}.dump();
}

TaskSpec hpo_spec(const Ontology& ont) {
  TaskSpec spec;
  spec.task = Task::Hpo;
  spec.ontology = &ont;
  return spec;
}

std::vector<FewShotExample> pool_from(const std::vector<HpoGoldDoc>& docs) {
  std::vector<FewShotExample> pool;
  for (const auto& d : docs) pool.push_back({d.doc, gold_result(d)});
  return pool;
}

}  // namespace

TEST_SUITE("extraction") {
  TEST_CASE("parse a well-formed HPO reply") {
    const auto parsed = parse_model_output(
        R"({"d1":[{"category":"HP:0011172","confidence":0.9,"reasoning":"febrile sz"}]})", OutputSchema::Hpo);
    const auto& keyed = std::get<KeyedHpo>(parsed);
    REQUIRE(keyed.count("d1") == 1);
    REQUIRE(keyed.at("d1").size() == 1);
    CHECK(keyed.at("d1")[0] == RawHpoAssertion{"HP:0011172", 0.9, "febrile sz"});
  }

  TEST_CASE("fenced reply parses identically") {
    const std::string body = R"({"d1":[{"category":"HP:0011172","confidence":0.9,"reasoning":"febrile sz"}]})";
    CHECK(parse_model_output("```json\n" + body + "\n```", OutputSchema::Hpo) ==
          parse_model_output(body, OutputSchema::Hpo));
    CHECK(parse_model_output("Here you go:\n" + body + "\nDone.", OutputSchema::Hpo) ==
          parse_model_output(body, OutputSchema::Hpo));
  }

  TEST_CASE("out-of-range confidence and missing reasoning are schema errors") {
    try {
      parse_model_output(R"({"d1":[{"category":"HP:0011172","confidence":1.7}]})", OutputSchema::Hpo);
      FAIL("expected OutputError");
    } catch (const OutputError& e) {
      CHECK(e.kind() == ErrorKind::Schema);
      CHECK_FALSE(e.field().empty());
      CHECK(e.raw().find("1.7") != std::string::npos);
    }
  }

  TEST_CASE("unparseable replies keep the raw text") {
    try {
      parse_model_output("I could not find anything.", OutputSchema::Hpo);
      FAIL("expected OutputError");
    } catch (const OutputError& e) {
      CHECK(e.kind() == ErrorKind::Parse);
      CHECK(e.raw() == "I could not find anything.");
    }
    CHECK_KIND(extract_json_object("{\"a\":1} {\"b\":2}"), ErrorKind::Parse);
    CHECK_KIND(parse_model_output(R"({"d1":[{"category":"HP:0011172","confidence":0.5,"reasoning":"x","extra":1}]})",
                                  OutputSchema::Hpo),
               ErrorKind::Schema);
  }

  TEST_CASE("score schema enforces integer 0..9") {
    CHECK(std::get<ScoreOutput>(parse_model_output(R"({"score":8,"rationale":"x"})", OutputSchema::Score)).score == 8);
    CHECK_KIND(parse_model_output(R"({"score":12,"rationale":"x"})", OutputSchema::Score), ErrorKind::Schema);
    CHECK_KIND(parse_model_output(R"({"score":7.5,"rationale":"x"})", OutputSchema::Score), ErrorKind::Schema);
  }

  TEST_CASE("system prompt carries the JSON contract") {
    const Ontology ont = fixtures::fixture_ontology();
    const auto r = build_prompt(hpo_spec(ont), Document{"d1", "text"}, FewShotPolicy{});
    for (const char* line : {"MUST be a single JSON object", "NO explanatory text, notes, or comments",
                             "NO markdown formatting", "NO additional fields beyond the specified format"})
      CHECK(r.system.find(line) != std::string::npos);
  }

  TEST_CASE("zero-shot prompt has the schema and no examples") {
    const Ontology ont = fixtures::fixture_ontology();
    const auto r = build_prompt(hpo_spec(ont), Document{"d1", "text"}, FewShotPolicy{});
    CHECK(r.system.find("category") != std::string::npos);
    CHECK(r.system.find("Example 1") == std::string::npos);
    CHECK(r.user.find("text") != std::string::npos);
  }

  TEST_CASE("prompts are byte-deterministic") {
    const Ontology ont = fixtures::fixture_ontology();
    const auto docs = synthesize_fixture(2, ont, 30, 2);
    const auto pool = pool_from(docs);
    HashingEmbedder e;
    std::vector<Document> pool_docs;
    for (const auto& d : docs) pool_docs.push_back(d.doc);
    const auto index = build_index(e, pool_docs);
    FewShotPolicy policy{FewShotMode::DynamicFewShot, 5, &pool, &index, &e};
    const auto a = build_prompt(hpo_spec(ont), docs[0].doc, policy);
    const auto b = build_prompt(hpo_spec(ont), docs[0].doc, policy);
    CHECK(a.system == b.system);
    CHECK(a.user == b.user);
    CHECK(request_hash(a) == request_hash(b));
  }

  TEST_CASE("static few-shot uses the first k pool items") {
    const Ontology ont = fixtures::fixture_ontology();
    const auto pool = pool_from(synthesize_fixture(3, ont, 8, 2));
    FewShotPolicy policy{FewShotMode::StaticFewShot, 3, &pool, nullptr, nullptr};
    const auto picked = select_examples(Document{"q", "query"}, policy);
    REQUIRE(picked.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(picked[i] == &pool[i]);
    CHECK(build_prompt(hpo_spec(ont), Document{"q", "query"}, policy).system.find("Example 3") != std::string::npos);
  }

  TEST_CASE("dynamic few-shot skips a duplicate of the query and uses the next five") {
    const Ontology ont = fixtures::fixture_ontology();
    auto docs = synthesize_fixture(4, ont, 40, 2);
    const Document query{"query", docs[7].doc.text};
    const auto pool = pool_from(docs);
    HashingEmbedder e;
    std::vector<Document> pool_docs;
    for (const auto& d : docs) pool_docs.push_back(d.doc);
    const auto index = build_index(e, pool_docs);
    FewShotPolicy policy{FewShotMode::DynamicFewShot, 5, &pool, &index, &e};
    const auto picked = select_examples(query, policy);
    REQUIRE(picked.size() == 5);

    std::vector<std::pair<std::string, std::vector<double>>> items;
    for (const auto& d : docs)
      if (d.doc.text != query.text) items.emplace_back(d.doc.doc_id, e.embed_one(d.doc.text).values);
    const auto expected = oracle::rank_all(items, e.embed_one(query.text).values);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(picked[i]->doc.doc_id == expected[i].first);
      CHECK(picked[i]->doc.text != query.text);
    }
  }

  TEST_CASE("dynamic mode needs a pool and index") {
    std::vector<FewShotExample> empty;
    EmbeddingIndex index;
    HashingEmbedder e;
    CHECK_KIND(validate(FewShotPolicy{FewShotMode::DynamicFewShot, 5, &empty, &index, &e}), ErrorKind::Domain);
    CHECK_KIND(validate(FewShotPolicy{FewShotMode::DynamicFewShot, 5, nullptr, nullptr, nullptr}), ErrorKind::Domain);
    CHECK_KIND(validate(FewShotPolicy{FewShotMode::StaticFewShot, 0, &empty, nullptr, nullptr}), ErrorKind::Domain);
  }

  TEST_CASE("fill_template leaves unknown braces alone") {
    CHECK(fill_template("a {x} {y} {\"k\": 1}", {{"x", "1"}}) == "a 1 {y} {\"k\": 1}");
  }

  TEST_CASE("oracle backend gives back the gold") {
    const Ontology ont = fixtures::fixture_ontology();
    const auto docs = synthesize_fixture(5, ont, 6, 3);
    for (const auto& d : docs) {
      ScriptedBackend backend([&](const ChatRequest&) { return render_output(gold_result(d)).dump(); });
      const auto got = extract(hpo_spec(ont), d.doc, backend, FewShotPolicy{}, GleanConfig{0});
      CHECK(std::get<HpoExtraction>(got).terms() == d.terms);
    }
  }

  TEST_CASE("gleaning takes the union across rounds") {
    const Ontology ont = fixtures::fixture_ontology();
    ScriptedBackend backend([](const ChatRequest& r) {
      if (r.request_tag.ends_with(":r0")) return hpo_reply("d1", {"HP:0011172"});
      return hpo_reply("d1", {"HP:0011172", "HP:0002373"});
    });
    const auto rounds = extract_rounds(hpo_spec(ont), Document{"d1", "note"}, backend, FewShotPolicy{}, GleanConfig{1});
    REQUIRE(rounds.size() == 2);
    CHECK(std::get<HpoExtraction>(rounds[0]).terms() == std::set{tid("HP:0011172")});
    CHECK(std::get<HpoExtraction>(rounds[1]).terms() == std::set{tid("HP:0002373"), tid("HP:0011172")});
  }

  TEST_CASE("glean prompt carries the earlier result") {
    const Ontology ont = fixtures::fixture_ontology();
    const auto prev = TaskResult{hpo("d1", {{"HP:0011172", 0.8}})};
    const auto r = build_glean_prompt(hpo_spec(ont), Document{"d1", "note"}, FewShotPolicy{}, prev);
    CHECK(r.user.find("HP:0011172") != std::string::npos);
    CHECK(r.system == build_prompt(hpo_spec(ont), Document{"d1", "note"}, FewShotPolicy{}).system);
  }

  TEST_CASE("unknown term ids are dropped and audited") {
    const Ontology ont = fixtures::fixture_ontology();
    AuditLog audit;
    ScriptedBackend backend([](const ChatRequest&) { return hpo_reply("d1", {"HP:0000000", "HP:0011172"}); });
    const auto got = extract(hpo_spec(ont), Document{"d1", "note"}, backend, FewShotPolicy{}, GleanConfig{0}, &audit);
    CHECK(std::get<HpoExtraction>(got).terms() == std::set{tid("HP:0011172")});
    CHECK(audit.count("invalid_term") == 1);
  }

  TEST_CASE("merge keeps the higher confidence") {
    const auto merged = merge_gleaned(hpo("k", {{"HP:0011172", 0.6}}), hpo("k", {{"HP:0011172", 0.9}}));
    REQUIRE(merged.assertions.size() == 1);
    CHECK(merged.assertions[0].confidence == 0.9);
    CHECK(merge_gleaned(hpo("k", {{"HP:0011172", 0.9}}), hpo("k", {{"HP:0011172", 0.6}})).assertions[0].confidence ==
          0.9);
  }

  TEST_CASE("merge with an empty side is identity") {
    const auto x = hpo("k", {{"HP:0011172", 0.4}, {"HP:0002373", 0.7}});
    CHECK(merge_gleaned(hpo("k", {}), x) == x);
    CHECK(merge_gleaned(x, hpo("k", {})) == x);
  }

  TEST_CASE("merging disjoint sets adds their sizes") {
    const auto a = hpo("k", {{"HP:0011172", 0.4}, {"HP:0002373", 0.7}});
    const auto b = hpo("k", {{"HP:0001250", 0.5}, {"HP:0001263", 0.5}, {"HP:0001336", 0.5}});
    CHECK(merge_gleaned(a, b).assertions.size() == 5);
    CHECK_KIND(merge_gleaned(a, hpo("other", {})), ErrorKind::Domain);
  }

  TEST_CASE("merge is commutative on the term set") {
    Rng rng(3);
    const auto all = fixtures::dravet_term_counts();
    for (int trial = 0; trial < 50; ++trial) {
      HpoExtraction a{"k", {}}, b{"k", {}};
      for (const auto& row : all) {
        if (rng.below(3) == 0) a.assertions.push_back({tid(row.id), rng.unit(), "a"});
        if (rng.below(3) == 0) b.assertions.push_back({tid(row.id), rng.unit(), "b"});
      }
      auto by_term = [](const HpoAssertion& x, const HpoAssertion& y) { return x.term < y.term; };
      std::sort(a.assertions.begin(), a.assertions.end(), by_term);
      std::sort(b.assertions.begin(), b.assertions.end(), by_term);
      CHECK(merge_gleaned(a, b).terms() == merge_gleaned(b, a).terms());
    }
  }

  TEST_CASE("patient extraction keeps only allowed terms") {
    const Ontology ont = fixtures::fixture_ontology();
    const auto allowed = fixtures::dravet_allowed_terms();
    std::string outside;
    for (const auto& t : ont.terms())
      if (!allowed.count(t.id)) outside = t.id.str();
    REQUIRE_FALSE(outside.empty());
    AuditLog audit;
    ScriptedBackend backend([&](const ChatRequest&) { return hpo_reply("K", {"HP:0011172", outside}); });
    const auto got = extract_hpo_for_patient("K", "record text", fixtures::dravet_disease_context(), allowed, ont,
                                             backend, GleanConfig{0}, &audit);
    CHECK(got.key == "K");
    CHECK(got.terms() == std::set{tid("HP:0011172")});
    CHECK(audit.count("term_not_allowed") == 1);
  }

  TEST_CASE("the 46 allowed terms appear verbatim in the patient prompt") {
    const Ontology ont = fixtures::fixture_ontology();
    const auto allowed = fixtures::dravet_allowed_terms();
    CHECK(allowed.size() == 46);
    const auto spec = patient_hpo_spec(ont, allowed, fixtures::dravet_disease_context());
    const auto r = build_prompt(spec, Document{"K", "record"}, FewShotPolicy{});
    CHECK(r.system.find(render_allowed_terms(ont, allowed)) != std::string::npos);
    for (const auto& t : allowed) CHECK(r.system.find(t.str() + " \t " + ont.at(t).name) != std::string::npos);
    CHECK(r.system.find(fixtures::dravet_disease_context()) != std::string::npos);
  }

  TEST_CASE("batch extraction reports failures positionally") {
    const Ontology ont = fixtures::fixture_ontology();
    ScriptedBackend backend([](const ChatRequest& r) {
      if (r.request_tag.find(":d2:") != std::string::npos) return std::string("not json");
      return hpo_reply(r.request_tag.substr(4, 2), {"HP:0011172"});
    });
    AuditLog audit;
    const auto out = extract_batch(hpo_spec(ont), {{"d1", "a"}, {"d2", "b"}, {"d3", "c"}}, backend, FewShotPolicy{},
                                   GleanConfig{0}, 2, &audit);
    REQUIRE(out.size() == 3);
    CHECK(out[0].ok());
    CHECK_FALSE(out[1].ok());
    CHECK(out[1].error->kind() == ErrorKind::Parse);
    CHECK(out[2].ok());
    CHECK(audit.size() >= 1);
  }

  TEST_CASE("multilabel replies map labels case-insensitively and drop unknowns") {
    TaskSpec spec;
    spec.task = Task::MultiLabel;
    AuditLog audit;
    const auto got = interpret_output(spec, "n1", R"({"n1":["none","florgle"]})", 0, &audit);
    CHECK(std::get<MultiLabelResult>(got).labels == std::set<std::string>{"NONE"});
    CHECK(audit.count("unknown_label") == 1);
  }
}
