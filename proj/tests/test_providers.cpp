#include "muse/providers.hpp"

#include "expect_error.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace muse;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "muse_test_providers";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(FakeEmbedding, RejectsTinyDim) { EXPECT_MUSE_ERROR(FakeEmbeddingProvider(1, 0), ErrorCode::InvalidArgument); }

TEST(FakeEmbedding, RejectsBlankText) {
  FakeEmbeddingProvider p(16, 0);
  EXPECT_MUSE_ERROR(p.embed_one("   "), ErrorCode::EmptyText);
}

TEST(FakeEmbedding, DeterministicUnitVectors) {
  FakeEmbeddingProvider a(32, 7);
  FakeEmbeddingProvider b(32, 7);
  const auto va = a.embed_one("cool a room");
  const auto vb = b.embed_one("cool a room");
  EXPECT_EQ(va.components().size(), 32u);
  EXPECT_NEAR(va.norm(), 1.0, 1e-12);
  EXPECT_EQ(std::vector<double>(va.components().begin(), va.components().end()),
            std::vector<double>(vb.components().begin(), vb.components().end()));
}

TEST(FakeEmbedding, StemmingMakesInflectionsIdentical) {
  FakeEmbeddingProvider p(64, 0);
  EXPECT_NEAR(cosine(p.embed_one("cooling rooms"), p.embed_one("cool room")), 1.0, 1e-12);
}

TEST(FakeEmbedding, StopWordsOnlyStillEmbeds) {
  FakeEmbeddingProvider p(16, 0);
  EXPECT_NEAR(p.embed_one("a the of").norm(), 1.0, 1e-12);
  EXPECT_NEAR(p.embed_one("1234").norm(), 1.0, 1e-12);
}

TEST(FakeEntailment, SubsetHypothesisFullyEntailed) {
  FakeEntailmentProvider p;
  EXPECT_DOUBLE_EQ(p.score("protect plants from the sun", "protect plants"), 1.0);
  EXPECT_DOUBLE_EQ(p.score("protect plants", "protect plants from the sun"), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(p.score("heat water", "protect plants"), 0.0);
}

TEST(FakeEntailment, DuplicateTokensCountOnce) {
  FakeEntailmentProvider p;
  EXPECT_DOUBLE_EQ(p.score("plants", "plants plants sun"), 0.5);
}

TEST(FakeEntailment, StopWordHypothesisIsTriviallyEntailed) {
  FakeEntailmentProvider p;
  EXPECT_DOUBLE_EQ(p.score("anything here", "I want"), 1.0);
}

TEST(FakeEntailment, EmptySideRejected) {
  FakeEntailmentProvider p;
  EXPECT_MUSE_ERROR(p.score("", "x"), ErrorCode::EmptyText);
  EXPECT_MUSE_ERROR(p.score("x", " "), ErrorCode::EmptyText);
}

TEST(FakeCompletion, EchoesFirstLineOfLastBlock) {
  FakeCompletionProvider p;
  CompletionRequest r;
  r.prompt = "Instructions here.\nMore.\n\nfirst line\nsecond line\n\n";
  EXPECT_EQ(p.complete(r), "ABSTRACT: first line");
  r.prompt = "single";
  EXPECT_EQ(p.complete(r), "ABSTRACT: single");
  r.prompt = "  \n";
  EXPECT_MUSE_ERROR(p.complete(r), ErrorCode::EmptyText);
}

TEST(KeywordClassifier, MatchesKeywordsCaseInsensitively) {
  KeywordMechanismClassifier c;
  EXPECT_DOUBLE_EQ(c.score("Cooling APPARATUS"), 1.0);
  EXPECT_DOUBLE_EQ(c.score("Air-humidification"), 0.0);
}

TEST(LabeledClassifier, LabelsOverrideKeywords) {
  LabeledMechanismClassifier c({{"air-humidification", 1.0}, {"cooling system", 0.0}});
  EXPECT_DOUBLE_EQ(c.score("  Air-Humidification "), 1.0);
  EXPECT_DOUBLE_EQ(c.score("Cooling system"), 0.0);
  EXPECT_DOUBLE_EQ(c.score("heating device"), 1.0);
}

TEST(LabeledClassifier, LoadParsesTsvAndRejectsBadScores) {
  const auto good = temp_path("labels.tsv");
  std::ofstream(good) << "# comment\nsunscreen preparations\t1\ncosmetics\t0\n";
  const auto c = LabeledMechanismClassifier::load(good);
  EXPECT_DOUBLE_EQ(c.score("Sunscreen preparations"), 1.0);
  EXPECT_DOUBLE_EQ(c.score("cosmetics"), 0.0);

  const auto bad = temp_path("bad_labels.tsv");
  std::ofstream(bad) << "cosmetics\t1.5\n";
  EXPECT_MUSE_ERROR(LabeledMechanismClassifier::load(bad), ErrorCode::MalformedRecord);
  std::ofstream(bad) << "no tab here\n";
  EXPECT_MUSE_ERROR(LabeledMechanismClassifier::load(bad), ErrorCode::MalformedRecord);
}

namespace {

class CountingEmbedding final : public EmbeddingProvider {
 public:
  std::size_t dim() const override { return inner_.dim(); }
  std::vector<Vector> embed(std::span<const std::string> texts) const override {
    calls += texts.size();
    return inner_.embed(texts);
  }
  mutable std::size_t calls = 0;

 private:
  FakeEmbeddingProvider inner_{8, 3};
};

}  // namespace

TEST(CachingEmbedding, EmbedsEachDistinctTextOnce) {
  auto inner = std::make_shared<CountingEmbedding>();
  CachingEmbeddingProvider cache(inner);
  const std::vector<std::string> texts = {"a room", "a room", "a person"};
  const auto first = cache.embed(texts);
  EXPECT_EQ(inner->calls, 2u);
  const auto second = cache.embed(texts);
  EXPECT_EQ(inner->calls, 2u);
  ASSERT_EQ(first.size(), 3u);
  EXPECT_NEAR(cosine(first[0], second[0]), 1.0, 1e-12);
  EXPECT_EQ(cache.cached(), 2u);
}

TEST(CachingEmbedding, SaveLoadRoundTripAndDimCheck) {
  const auto path = temp_path("cache.json");
  std::filesystem::remove(path);
  {
    CachingEmbeddingProvider cache(std::make_shared<FakeEmbeddingProvider>(8, 3));
    cache.embed_one("cool a room");
    cache.save(path);
  }
  auto inner = std::make_shared<CountingEmbedding>();
  CachingEmbeddingProvider reload(inner);
  reload.load(path);
  EXPECT_EQ(reload.cached(), 1u);
  reload.embed_one("cool a room");
  EXPECT_EQ(inner->calls, 0u);

  CachingEmbeddingProvider wrong(std::make_shared<FakeEmbeddingProvider>(16, 3));
  EXPECT_MUSE_ERROR(wrong.load(path), ErrorCode::DimMismatch);

  std::ofstream(path) << "{not json";
  EXPECT_MUSE_ERROR(reload.load(path), ErrorCode::CorruptFile);
}

TEST(CachingEmbedding, MissingFileIsNoop) {
  CachingEmbeddingProvider cache(std::make_shared<FakeEmbeddingProvider>(8, 3));
  EXPECT_NO_THROW(cache.load(temp_path("does_not_exist.json")));
  EXPECT_EQ(cache.cached(), 0u);
}

TEST(ProviderMode, ParsesKnownModes) {
  EXPECT_EQ(parse_provider_mode("fake"), ProviderMode::Fake);
  EXPECT_EQ(parse_provider_mode("live"), ProviderMode::Live);
  EXPECT_MUSE_ERROR(parse_provider_mode("offline"), ErrorCode::InvalidArgument);
}

TEST(ProviderMode, LiveRequiresEndpoints) {
  ProviderOptions o;
  o.mode = ProviderMode::Live;
  EXPECT_MUSE_ERROR(make_providers(o), ErrorCode::InvalidArgument);
}

TEST(ProviderMode, FakeSetIsComplete) {
  ProviderOptions o;
  o.mode = ProviderMode::Fake;
  const auto set = make_providers(o);
  EXPECT_TRUE(set.embedder && set.entailment && set.completion && set.classifier);
}
