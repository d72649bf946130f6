#include <cmath>

#include "helpers.hpp"
#include "oracles.hpp"
#include "phenokg/retrieval.hpp"

using namespace phenokg;

namespace {

EmbeddingVector vec(std::vector<double> v) { return EmbeddingVector{std::move(v)}; }

std::vector<double> random_vector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.unit() * 2.0 - 1.0;
  return v;
}

}  // namespace

TEST_SUITE("retrieval") {
  TEST_CASE("hashing embedder is deterministic") {
    HashingEmbedder e;
    const auto out = embed(e, {"a b", "a b"});
    REQUIRE(out.size() == 2);
    CHECK(out[0] == out[1]);
    CHECK(out[0].dim() == HashingEmbedder::kDefaultDim);
    CHECK(HashingEmbedder(64).embed_one("Seizure onset") == HashingEmbedder(64).embed_one("seizure   ONSET"));
  }

  TEST_CASE("embeddings are unit length unless the text has no tokens") {
    HashingEmbedder e;
    for (const char* t : {"x", "febrile seizure at 7 months", "aspirin aspirin aspirin"})
      CHECK(l2_norm(e.embed_one(t)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(l2_norm(e.embed_one("  ,;. ")) == 0.0);
    CHECK_KIND(embed(e, {}), ErrorKind::Domain);
  }

  TEST_CASE("tokenizer folds case and splits on punctuation") {
    CHECK(HashingEmbedder::tokenize("Febrile-Seizure, 7mo") == std::vector<std::string>{"febrile", "seizure", "7mo"});
  }

  TEST_CASE("cosine basics") {
    CHECK(cosine(vec({1, 0}), vec({0, 1})) == 0.0);
    CHECK(cosine(vec({1, 1}), vec({2, 2})) == doctest::Approx(1.0));
    CHECK(cosine(vec({1, 0}), vec({1, 1})) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(cosine(vec({0, 0}), vec({1, 1})) == 0.0);
    CHECK(cosine(vec({1, 0}), vec({-1, 0})) == -1.0);
  }

  TEST_CASE("query equal to a stored vector ranks it first with score 1") {
    EmbeddingIndex index;
    index.add("a", vec({1, 2, 3}));
    index.add("b", vec({3, 2, 1}));
    index.add("c", vec({0, 1, 0}));
    const auto hits = top_k(index, vec({3, 2, 1}), 1);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].item_id == "b");
    CHECK(std::abs(hits[0].score - 1.0) <= 1e-9);
  }

  TEST_CASE("k beyond the index size returns the full ranking") {
    EmbeddingIndex index;
    index.add("a", vec({1, 0}));
    index.add("b", vec({0, 1}));
    const auto hits = top_k(index, vec({1, 1}), 10);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].item_id == "a");
    CHECK(hits[1].item_id == "b");
  }

  TEST_CASE("filter is applied before truncation") {
    EmbeddingIndex index;
    index.add("a", vec({1, 0}));
    index.add("b", vec({0.9, 0.1}));
    index.add("c", vec({0, 1}));
    const auto hits = top_k(index, vec({1, 0}), 2, [](const std::string& id) { return id != "a"; });
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].item_id == "b");
    CHECK(hits[1].item_id == "c");
  }

  TEST_CASE("index rejects bad entries") {
    EmbeddingIndex index;
    index.add("a", vec({1, 0}));
    CHECK_KIND(index.add("a", vec({0, 1})), ErrorKind::DuplicateId);
    CHECK_KIND(index.add("b", vec({0, 1, 0})), ErrorKind::Domain);
    CHECK_KIND(index.add("c", vec({})), ErrorKind::Domain);
    CHECK_KIND(index.add("d", vec({NAN, 1})), ErrorKind::Domain);
    CHECK_KIND(top_k(index, vec({1, 0, 0})), ErrorKind::Domain);
  }

  TEST_CASE("ranking is invariant to scaling the query") {
    Rng rng(11);
    EmbeddingIndex index;
    for (int i = 0; i < 40; ++i) index.add("i" + std::to_string(i), vec(random_vector(rng, 8)));
    for (int q = 0; q < 20; ++q) {
      const auto query = random_vector(rng, 8);
      auto scaled = query;
      for (auto& x : scaled) x *= 37.5;
      const auto a = top_k(index, vec(query), 40);
      const auto b = top_k(index, vec(scaled), 40);
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].item_id == b[i].item_id);
        CHECK(a[i].score == doctest::Approx(b[i].score).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("50 random vectors: top 5 equals the brute-force ranking") {
    Rng rng(50);
    EmbeddingIndex index;
    std::vector<std::pair<std::string, std::vector<double>>> items;
    for (int i = 0; i < 50; ++i) {
      auto v = random_vector(rng, 16);
      items.emplace_back("v" + std::to_string(i), v);
      index.add("v" + std::to_string(i), vec(v));
    }
    for (int q = 0; q < 25; ++q) {
      const auto query = random_vector(rng, 16);
      const auto expected = oracle::rank_all(items, query);
      const auto got = top_k(index, vec(query), 5);
      REQUIRE(got.size() == 5);
      for (std::size_t i = 0; i < 5; ++i) {
        CHECK(got[i].item_id == expected[i].first);
        CHECK(std::abs(got[i].score - expected[i].second) <= 1e-12);
      }
    }
  }

  TEST_CASE("index JSON Lines round-trip and build_index") {
    HashingEmbedder e(32);
    const auto index = build_index(e, {{"d1", "febrile seizure"}, {"d2", "ataxia"}});
    CHECK(index.size() == 2);
    CHECK(index.dim() == 32);
    CHECK(EmbeddingIndex::parse_jsonl(index.to_jsonl()) == index);
  }
}
