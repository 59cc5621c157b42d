#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "asktmk/error.hpp"
#include "asktmk/retrieval.hpp"
#include "support.hpp"

using namespace asktmk;
using namespace asktmk::retrieval;

namespace {

template <typename F>
Errc error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return Errc::Io;
}

// Full sort over every entry, independent of search().
std::vector<RetrievalHit> oracle(const VectorIndex& index, const EmbeddingVector& q, std::size_t k) {
  std::vector<RetrievalHit> all;
  for (const auto& e : index.entries()) {
    double dot = 0;
    for (std::size_t i = 0; i < q.dimension(); ++i) dot += q.values()[i] * e.vector.values()[i];
    all.push_back({e.key.element_id, e.key.kind, std::clamp((1.0 + dot) / 2.0, 0.0, 1.0), e.title});
  }
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.key() < b.key();
  });
  all.resize(std::min(k, all.size()));
  return all;
}

EmbeddingVector unit(std::vector<double> v) { return EmbeddingVector::normalized(std::move(v)); }

}  // namespace

TEST(Embedder, DeterministicAndUnitNorm) {
  HashingEmbedder e;
  auto a = e.embed("How do you run simulation?");
  auto b = e.embed("How do you run simulation?");
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.dimension(), 256u);
  EXPECT_NEAR(a.norm(), 1.0, 1e-9);
}

TEST(Embedder, TokenOrderAndCaseDoNotMatter) {
  HashingEmbedder e;
  EXPECT_EQ(e.embed("run the simulation"), e.embed("Simulation THE run"));
}

TEST(Embedder, BlankTextIsEmptyText) {
  HashingEmbedder e;
  EXPECT_EQ(error_of([&] { e.embed(""); }), Errc::EmptyText);
  EXPECT_EQ(error_of([&] { e.embed("  ?! "); }), Errc::EmptyText);
  EXPECT_EQ(error_of([] { EmbeddingVector::normalized({0, 0, 0}); }), Errc::EmptyText);
}

TEST(Embedder, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Similarity, IdentityOppositeOrthogonal) {
  auto v = unit({1, 2, 3});
  EXPECT_NEAR(similarity(v, v), 1.0, 1e-12);
  EXPECT_NEAR(similarity(v, -v), 0.0, 1e-12);
  EXPECT_NEAR(similarity(unit({1, 0}), unit({0, 1})), 0.5, 1e-12);
  EXPECT_EQ(error_of([] { similarity(unit({1, 0}), unit({1, 0, 0})); }), Errc::DimensionMismatch);
}

TEST(Index, BuildErrors) {
  HashingEmbedder e;
  std::vector<tmk::Document> none;
  EXPECT_EQ(error_of([&] { build_index(none, e); }), Errc::EmptyCorpus);
  std::vector<tmk::Document> dup = {{"a", tmk::Kind::task, "A", "x"}, {"a", tmk::Kind::task, "B", "y"}};
  EXPECT_EQ(error_of([&] { build_index(dup, e); }), Errc::DuplicateKey);
  std::vector<tmk::Document> same_id = {{"a", tmk::Kind::task, "A", "x"}, {"a", tmk::Kind::method, "B", "y"}};
  EXPECT_EQ(build_index(same_id, e).size(), 2u);
}

TEST(Search, KBelowOneIsInvalid) {
  HashingEmbedder e;
  std::vector<tmk::Document> docs = {{"a", tmk::Kind::task, "A", "x"}};
  auto index = build_index(docs, e);
  EXPECT_EQ(error_of([&] { search(index, e.embed("x"), 0); }), Errc::InvalidArgument);
  EXPECT_EQ(error_of([&] { search(index, HashingEmbedder(16).embed("x"), 1); }), Errc::DimensionMismatch);
}

TEST(Search, KLargerThanCorpusReturnsAll) {
  HashingEmbedder e;
  std::vector<tmk::Document> docs = {{"a", tmk::Kind::task, "A", "x"}, {"b", tmk::Kind::task, "B", "y"}};
  EXPECT_EQ(search(build_index(docs, e), e.embed("x"), 10).size(), 2u);
}

TEST(Search, TiesBreakByKey) {
  HashingEmbedder e;
  std::vector<tmk::Document> docs = {{"b", tmk::Kind::method, "T", "same"},
                                     {"z", tmk::Kind::task, "T", "same"},
                                     {"a", tmk::Kind::method, "T", "same"}};
  auto hits = search(build_index(docs, e), e.embed("same"), 3);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].element_id, "z");
  EXPECT_EQ(hits[1].element_id, "a");
  EXPECT_EQ(hits[2].element_id, "b");
}

TEST(SearchProperty, MatchesBruteForceOracle) {
  std::mt19937_64 rng(11);
  HashingEmbedder e;
  for (int round = 0; round < 30; ++round) {
    auto docs = asktmk::testing::random_corpus(rng, 1 + rng() % 120);
    auto index = build_index(docs, e);
    auto q = e.embed(docs[rng() % docs.size()].body + " graph");
    for (std::size_t k : {1u, 4u, 10u, 500u}) {
      auto got = search(index, q, k);
      auto want = oracle(index, q, k);
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_EQ(got[i].key(), want[i].key()) << round << " k=" << k << " i=" << i;
        EXPECT_NEAR(got[i].score, want[i].score, 1e-12);
      }
    }
  }
}

TEST(SearchProperty, ScoresInRangeAndNonIncreasing) {
  std::mt19937_64 rng(5);
  HashingEmbedder e;
  auto docs = asktmk::testing::random_corpus(rng, 150);
  auto index = build_index(docs, e);
  auto hits = search(index, e.embed("predator prey population"), 150);
  for (std::size_t i = 0; i < hits.size(); ++i) {
    EXPECT_GE(hits[i].score, 0.0);
    EXPECT_LE(hits[i].score, 1.0);
    if (i) EXPECT_LE(hits[i].score, hits[i - 1].score);
  }
}

TEST(SearchProperty, SmallerKIsPrefix) {
  std::mt19937_64 rng(9);
  HashingEmbedder e;
  for (int round = 0; round < 10; ++round) {
    auto docs = asktmk::testing::random_corpus(rng, 80);
    auto index = build_index(docs, e);
    auto q = e.embed("edit the model output");
    auto big = search(index, q, 40);
    for (std::size_t k = 1; k < 40; k += 7) {
      auto small = search(index, q, k);
      EXPECT_TRUE(std::equal(small.begin(), small.end(), big.begin()));
    }
  }
}

TEST(SearchProperty, CorpusOrderDoesNotMatter) {
  std::mt19937_64 rng(13);
  HashingEmbedder e;
  auto docs = asktmk::testing::random_corpus(rng, 100);
  auto q = e.embed("fox rabbit grass");
  auto base = search(build_index(docs, e), q, 10);
  for (int round = 0; round < 5; ++round) {
    std::shuffle(docs.begin(), docs.end(), rng);
    EXPECT_EQ(search(build_index(docs, e), q, 10), base);
  }
}

TEST(Dump, RoundTripIsExact) {
  HashingEmbedder e;
  auto docs = tmk::render_documents(asktmk::testing::fixture_model(), tmk::kAllKinds);
  auto index = build_index(docs, e);
  auto dump = dump_index(index);
  EXPECT_EQ(dump.rfind("asktmk-index v1", 0), 0u);
  auto back = load_index_dump(dump);
  EXPECT_EQ(back, index);
  EXPECT_EQ(dump_index(back), dump);
}

TEST(Dump, GarbageIsRejected) {
  EXPECT_EQ(error_of([] { load_index_dump("nope"); }), Errc::MalformedInput);
}
