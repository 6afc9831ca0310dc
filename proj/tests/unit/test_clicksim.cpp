#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include "../support/oracles.hpp"
#include "uqac/clicksim.hpp"

using namespace uqac;

namespace {

RankedDocs ranking_of(std::vector<DocId> docs) {
  RankedDocs r;
  r.query_text = "q";
  double s = 1.0;
  for (DocId d : docs) {
    r.entries.push_back({d, s});
    s *= 0.9;
  }
  return r;
}

}  // namespace

TEST_SUITE("clicksim") {
  TEST_CASE("propensity values") {
    const PropensityModel m1{1.0, 20};
    CHECK(propensity(m1, Rank(1)) == 1.0);
    CHECK(propensity(m1, Rank(2)) == 0.5);
    CHECK(propensity(m1, Rank(4)) == 0.25);
    CHECK(propensity(m1, Rank::infinite()) == 0.0);
    CHECK(propensity(m1, Rank(21)) == 0.0);
    const PropensityModel m2{2.0, 20};
    CHECK(propensity(m2, Rank(2)) == 0.25);
    CHECK_THROWS(PropensityModel{0.0, 20}.validate());
    CHECK_THROWS(PropensityModel{1.0, 0}.validate());
  }

  TEST_CASE("relevant doc at rank 1 is always clicked") {
    const PropensityModel m{1.0, 20};
    const CorpusItem item{"q", {5}};
    for (std::uint64_t s = 0; s < 200; ++s) {
      Rng rng(s);
      const auto entries = simulate_impression(ranking_of({5, 6, 7}), item, "q", m, rng);
      REQUIRE(entries.size() == 1);
      CHECK(entries[0].logged_rank == 1);
      CHECK(entries[0].clicked_doc == 5);
    }
  }

  TEST_CASE("relevant doc at rank 2 is clicked about half the time") {
    const PropensityModel m{1.0, 20};
    const CorpusItem item{"q", {5}};
    std::vector<double> hits;
    for (std::uint64_t s = 0; s < 20000; ++s) {
      Rng rng(s);
      hits.push_back(simulate_impression(ranking_of({6, 5, 7}), item, "q", m, rng).size());
    }
    const auto est = oracle::summarize(hits);
    CHECK(std::abs(est.mean - 0.5) < 4 * est.std_error);
  }

  TEST_CASE("irrelevant observed docs never produce entries") {
    const PropensityModel m{1.0, 20};
    const CorpusItem item{"q", {99}};
    for (std::uint64_t s = 0; s < 200; ++s) {
      Rng rng(s);
      CHECK(simulate_impression(ranking_of({1, 2, 3, 4}), item, "q", m, rng).empty());
    }
  }

  TEST_CASE("observation draws consume one uniform per rank") {
    const PropensityModel m{1.0, 20};
    Rng a(3), b(3);
    observe_positions(m, a);
    for (int i = 0; i < 20; ++i) b.uniform();
    CHECK(a.next() == b.next());
  }

  TEST_CASE("500-item log size matches the analytic expectation within 5%") {
    SyntheticCorpusConfig cfg;
    cfg.num_queries = 500;
    cfg.num_docs = 800;
    const Corpus c = generate_synthetic_corpus(cfg);
    const auto ranker = DocRanker::train(c, 20);
    const PropensityModel m{1.0, 20};
    LogGenerationOptions opt;
    opt.passes = 5;
    opt.min_prefix_len = 3;
    opt.seed = 11;
    const auto log = generate_log(c, ranker, m, opt);
    RankCache cache(ranker);
    const double expected = oracle::expected_log_size(c, cache, m, 5, 3);
    REQUIRE(expected > 100.0);
    CHECK(std::abs(static_cast<double>(log.size()) - expected) <= 0.05 * expected);

    for (const auto& e : log) {
      CHECK(e.logged_rank >= 1);
      CHECK(e.logged_rank <= m.cutoff);
    }
  }

  TEST_CASE("entries are relevant, within the cutoff and independent of threads") {
    SyntheticCorpusConfig cfg;
    cfg.num_queries = 200;
    cfg.num_docs = 300;
    const Corpus c = generate_synthetic_corpus(cfg);
    const auto ranker = DocRanker::train(c, 30);
    const PropensityModel m{1.0, 20};
    LogGenerationOptions opt;
    opt.passes = 3;
    opt.seed = 5;
    const auto one = generate_log(c, ranker, m, opt);
    opt.threads = 4;
    const auto four = generate_log(c, ranker, m, opt);
    CHECK(one == four);

    // Titles repeat across items, so relevance is checked against the union.
    std::map<std::string, std::set<DocId>> by_query;
    for (const auto& item : c.items) by_query[item.query_text].insert(item.relevant_docs.begin(), item.relevant_docs.end());
    for (const auto& e : one) {
      CHECK(e.logged_rank <= 20);
      CHECK(by_query.at(e.logged_query).count(e.clicked_doc) == 1);
      CHECK(ranker.rank_of(e.logged_query, e.clicked_doc) == Rank(e.logged_rank));
      CHECK(e.logged_query.compare(0, e.context.prefix.size(), e.context.prefix) == 0);
    }
  }

  TEST_CASE("log JSON lines round-trip byte for byte") {
    SyntheticCorpusConfig cfg;
    cfg.num_queries = 100;
    cfg.num_docs = 100;
    const Corpus c = generate_synthetic_corpus(cfg);
    const auto ranker = DocRanker::train(c, 20);
    auto log = generate_log(c, ranker, {1.0, 20}, {});
    REQUIRE_FALSE(log.empty());
    log[0].context.side_features["store"] = "online";
    std::ostringstream out;
    write_log(out, log);
    std::istringstream in(out.str());
    const auto back = read_log(in);
    CHECK(back == log);
    std::ostringstream again;
    write_log(again, back);
    CHECK(again.str() == out.str());
    std::istringstream bad("{\"prefix\": 1}\n");
    CHECK_THROWS_AS(read_log(bad), DataError);
  }

  TEST_CASE("per-rank observation frequencies pass chi-square") {
    const PropensityModel m{1.0, 20};
    std::vector<std::size_t> counts(20, 0);
    const std::size_t n = 100000;
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng(derive_seed(77, {i}));
      const auto obs = observe_positions(m, rng);
      for (std::size_t r = 0; r < obs.size(); ++r) counts[r] += obs[r];
    }
    CHECK(counts[0] == n);
    const auto chi = oracle::observation_chi_square(counts, n, 1.0);
    CHECK(chi.dof == 19);
    CHECK(chi.p_value > 0.001);
  }
}
