#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "uqac/docrank.hpp"

using namespace uqac;

namespace {

Corpus toy() {
  return Corpus::from_items({{"red mouse", {0}}, {"blue mouse pad", {1}}, {"red wireless mouse", {2}}}, 3);
}

}  // namespace

TEST_SUITE("docrank") {
  TEST_CASE("profile of a doc labeled by one item holds exactly its tokens") {
    const auto r = DocRanker::train(toy(), 10);
    const auto p = r.profile(0);
    CHECK(p.size() == 2);
    CHECK(p.count("red") == 1);
    CHECK(p.count("mouse") == 1);
  }

  TEST_CASE("a token in every profile has idf 1") {
    const auto r = DocRanker::train(toy(), 10);
    CHECK(r.idf("mouse") == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r.idf("wireless") == doctest::Approx(std::log(4.0 / 2.0) + 1.0));
    CHECK(r.idf("nothing") == 0.0);
  }

  TEST_CASE("identical associated texts give identical profiles") {
    const Corpus c = Corpus::from_items({{"green lamp", {0, 1}}, {"desk", {2}}}, 3);
    const auto r = DocRanker::train(c, 10);
    CHECK(r.profile(0) == r.profile(1));
  }

  TEST_CASE("hand-computed cosines on the three-doc fixture") {
    // idf: red ln(4/3)+1, mouse 1, wireless = blue = pad ln 2 + 1.
    const double red = std::log(4.0 / 3.0) + 1.0, rare = std::log(2.0) + 1.0;
    const double q_norm = std::sqrt(red * red + rare * rare + 1.0);
    const double d0 = (red * red + 1.0) / (q_norm * std::sqrt(red * red + 1.0));
    const double d1 = 1.0 / (q_norm * std::sqrt(2.0 * rare * rare + 1.0));
    CHECK(d0 == doctest::Approx(0.693628).epsilon(1e-5));
    CHECK(d1 == doctest::Approx(0.163953).epsilon(1e-5));

    const auto r = DocRanker::train(toy(), 10);
    const auto ranked = r.rank("red wireless mouse");
    REQUIRE(ranked.entries.size() == 3);
    CHECK(ranked.entries[0].doc == 2);
    CHECK(ranked.entries[1].doc == 0);
    CHECK(ranked.entries[2].doc == 1);
    CHECK(ranked.entries[0].score == doctest::Approx(1.0));
    CHECK(ranked.entries[1].score == doctest::Approx(d0).epsilon(1e-12));
    CHECK(ranked.entries[2].score == doctest::Approx(d1).epsilon(1e-12));
  }

  TEST_CASE("query equal to the only associated text scores 1") {
    const auto r = DocRanker::train(toy(), 10);
    const auto ranked = r.rank("red mouse");
    REQUIRE_FALSE(ranked.entries.empty());
    CHECK(ranked.entries[0].doc == 0);
    CHECK(ranked.entries[0].score == doctest::Approx(1.0));
  }

  TEST_CASE("no shared token gives an empty ranking") {
    const auto r = DocRanker::train(toy(), 10);
    CHECK(r.rank("green lamp").entries.empty());
    CHECK_FALSE(r.rank_of("green lamp", 0).is_finite());
  }

  TEST_CASE("rank_of agrees with the ranking and top_k truncates") {
    SyntheticCorpusConfig cfg;
    cfg.num_queries = 300;
    cfg.num_docs = 200;
    const Corpus c = generate_synthetic_corpus(cfg);
    const auto r = DocRanker::train(c, 7);
    RankCache cache(r);
    for (std::size_t i = 0; i < 40; ++i) {
      const auto& q = c.items[i].query_text;
      const auto ranked = r.rank(q);
      CHECK(ranked.entries.size() <= 7);
      for (std::size_t k = 0; k < ranked.entries.size(); ++k) {
        CHECK(r.rank_of(q, ranked.entries[k].doc) == Rank(static_cast<std::uint32_t>(k + 1)));
        CHECK(cache.rank_of(q, ranked.entries[k].doc) == Rank(static_cast<std::uint32_t>(k + 1)));
        CHECK(ranked.entries[k].score >= 0.0);
        CHECK(ranked.entries[k].score <= 1.0);
        if (k) {
          const auto& a = ranked.entries[k - 1];
          const auto& b = ranked.entries[k];
          CHECK((a.score > b.score || (a.score == b.score && a.doc < b.doc)));
        }
      }
      CHECK(r.rank(q) == ranked);
    }
  }

  TEST_CASE("ties break by ascending doc id") {
    const Corpus c = Corpus::from_items({{"lamp", {4, 1, 3}}}, 5);
    const auto ranked = DocRanker::train(c, 10).rank("lamp");
    REQUIRE(ranked.entries.size() == 3);
    CHECK(ranked.entries[0].doc == 1);
    CHECK(ranked.entries[1].doc == 3);
    CHECK(ranked.entries[2].doc == 4);
  }

  TEST_CASE("serialization round-trips exactly") {
    SyntheticCorpusConfig cfg;
    cfg.num_queries = 200;
    cfg.num_docs = 150;
    const auto r = DocRanker::train(generate_synthetic_corpus(cfg), 20);
    const auto path = std::filesystem::temp_directory_path() / "uqac_docranker_roundtrip.json";
    r.save(path);
    const auto back = DocRanker::load(path);
    std::filesystem::remove(path);
    CHECK(back == r);
    CHECK(back.rank("a b") == r.rank("a b"));
    CHECK_THROWS_AS(DocRanker::load(path), MissingArtifactError);
  }
}
