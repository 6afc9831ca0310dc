#include <doctest.h>

#include "uqac/eval.hpp"

using namespace uqac;

namespace {

const PropensityModel kTrue{1.0, 20};

/// Context whose candidates rank the clicked doc at the given positions
/// (0 means not ranked); the logged query is "logged" at logged_rank.
ScoredContext make_context(std::uint64_t id, const std::vector<std::uint32_t>& ranks, std::uint32_t logged_rank,
                           std::size_t pad_k = 0) {
  ScoredContext c;
  c.id = id;
  c.entry.context.prefix = "q";
  c.entry.logged_query = "logged";
  c.entry.clicked_doc = 1;
  c.entry.logged_rank = logged_rank;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    c.candidates.entries.push_back({"q" + std::to_string(i), static_cast<double>(ranks.size() - i), false});
    c.clicked_doc_ranks.push_back(ranks[i] ? Rank(ranks[i]) : Rank::infinite());
  }
  if (pad_k) {
    c.candidates = pad_candidates(c.candidates, pad_k);
    c.clicked_doc_ranks.resize(pad_k, Rank::infinite());
  }
  const FeatureOptions opt{1u << 10, 0};
  for (const auto& cand : c.candidates.entries) c.features.push_back(featurize_pair(c.entry.context, cand, opt));
  return c;
}

std::vector<std::string> queries(const std::vector<Candidate>& cs) {
  std::vector<std::string> out;
  for (const auto& c : cs) out.push_back(c.query);
  return out;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("targets follow the unbiased ratio and padding is zero") {
    const auto c = make_context(0, {2, 0, 6}, 6, 5);
    const auto t = context_targets(c, kTrue, EstimatorVariant::unbiased());
    REQUIRE(t.size() == 5);
    CHECK(t[0] == doctest::Approx(3.0));
    CHECK(t[1] == 0.0);
    CHECK(t[2] == 1.0);
    CHECK(t[3] == 0.0);
    const auto tt = test_targets(c, kTrue);
    CHECK(tt.at("logged") == 1.0);
    CHECK(tt.size() == 4);
  }

  TEST_CASE("oracle puts the best candidate first") {
    // û = (0.5, 3.0, 1.0) with logged rank 3.
    const auto c = make_context(0, {6, 1, 3}, 3);
    const auto t = test_targets(c, kTrue);
    const auto ranked = rank_with_policy(Policy::oracle(), c, &t);
    CHECK(ranked[0].query == "q1");
    CHECK(queries(ranked) == std::vector<std::string>{"q1", "q2", "q0"});
    CHECK_THROWS(rank_with_policy(Policy::oracle(), c, nullptr));
  }

  TEST_CASE("logged policy shows the logged query first") {
    const auto c = make_context(0, {1, 2, 3, 4}, 7, 6);
    const auto t = test_targets(c, kTrue);
    const auto ranked = rank_with_policy(Policy::logged(), c, &t);
    CHECK(ranked.size() == 6);
    CHECK(ranked[0].query == "logged");
    CHECK(utility_at_k(ranked, t, 1) == 1.0);
  }

  TEST_CASE("random policy is reproducible and a permutation") {
    const auto c = make_context(42, {1, 2, 3, 4, 5, 6, 7}, 3);
    const auto a = rank_with_policy(Policy::random(9), c, nullptr);
    const auto b = rank_with_policy(Policy::random(9), c, nullptr);
    CHECK(queries(a) == queries(b));
    auto sorted = queries(a);
    std::sort(sorted.begin(), sorted.end());
    auto original = queries(c.candidates.entries);
    std::sort(original.begin(), original.end());
    CHECK(sorted == original);
  }

  TEST_CASE("model policy puts padding last") {
    const auto c = make_context(0, {1, 2}, 3, 5);
    RankerModel m;
    m.weights.assign(1u << 10, -1.0);
    const auto ranked = rank_with_policy(Policy::model_policy("m", m), c, nullptr);
    CHECK_FALSE(ranked[0].padding);
    CHECK_FALSE(ranked[1].padding);
    for (std::size_t i = 2; i < 5; ++i) CHECK(ranked[i].padding);
  }

  TEST_CASE("Utility@k") {
    const UtilityMap t{{"a", 1.297}, {"b", 0.5}, {"c", 1.0}};
    const std::vector<Candidate> ab{{"a", 0, false}, {"b", 0, false}};
    CHECK(utility_at_k(ab, t, 1) == doctest::Approx(1.297));
    const std::vector<Candidate> cb{{"c", 0, false}, {"b", 0, false}};
    CHECK(utility_at_k(cb, t, 2) == doctest::Approx(1.25 / 1.5));
    const UtilityMap flat{{"x", 0.7}, {"y", 0.7}, {"z", 0.7}};
    const std::vector<Candidate> xyz{{"x", 0, false}, {"y", 0, false}, {"z", 0, false}};
    for (std::size_t k = 1; k <= 3; ++k) CHECK(utility_at_k(xyz, flat, k) == doctest::Approx(0.7));
    const std::vector<Candidate> padded{{"x", 0, false}, Candidate::null()};
    CHECK(utility_at_k(padded, flat, 2) == doctest::Approx(0.7 / 1.5));
    CHECK_THROWS(utility_at_k(xyz, flat, 0));
  }

  TEST_CASE("positional profile averages per position") {
    const std::vector<std::vector<double>> rows{{1.0, 0.0, 2.0}, {3.0, 1.0, 0.0}};
    const auto p = positional_utility_profile(rows, 3);
    CHECK(p == std::vector<double>{2.0, 0.5, 1.0});
  }

  TEST_CASE("evaluation: logged identity, oracle dominance, random flatness") {
    Rng rng(17);
    std::vector<ScoredContext> contexts;
    for (std::uint64_t id = 0; id < 3000; ++id) {
      std::vector<std::uint32_t> ranks;
      for (int i = 0; i < 8; ++i) ranks.push_back(rng.below(4) ? static_cast<std::uint32_t>(1 + rng.below(20)) : 0);
      contexts.push_back(make_context(id, ranks, 1 + static_cast<std::uint32_t>(rng.below(20)), 10));
    }
    RankerModel model;
    model.weights.resize(1u << 10);
    for (auto& w : model.weights) w = rng.uniform() - 0.5;
    const std::vector<Policy> policies{Policy::model_policy("Model", model), Policy::retriever_order(),
                                       Policy::oracle(), Policy::logged(), Policy::random(5)};
    const std::vector<std::size_t> ks{1, 5, 10};
    const auto out = evaluate_policies(contexts, policies, kTrue, ks, 5, 2);
    const auto& report = out.report;
    CHECK(report.contexts == 3000);
    CHECK(report.row("Logged").utility.at(1) == 1.0);
    CHECK(report.row("Logged").top_only);
    CHECK(report.row("Logged").utility.count(5) == 0);
    for (const auto& row : report.rows) CHECK(report.row("Oracle").utility.at(1) >= row.utility.at(1));
    const auto& rnd = report.row("Random");
    for (std::size_t a : ks) {
      for (std::size_t b : ks) {
        const double se = std::sqrt(rnd.std_error.at(a) * rnd.std_error.at(a) + rnd.std_error.at(b) * rnd.std_error.at(b));
        CHECK(std::abs(rnd.utility.at(a) - rnd.utility.at(b)) <= 2.0 * se);
      }
    }
    CHECK(report.row("Oracle").profile[0] >= report.row("Random").profile[0]);

    // Thread count does not matter.
    const auto serial = evaluate_policies(contexts, policies, kTrue, ks, 5, 1);
    CHECK(serial.report.to_csv() == report.to_csv());
    CHECK(report.to_markdown().find("| Oracle |") != std::string::npos);
    CHECK(report.to_json()["rows"].size() == 5);
    CHECK_THROWS_AS(report.row("Nobody"), std::out_of_range);
  }

  TEST_CASE("empty test set is an error") {
    const std::vector<ScoredContext> none;
    const std::vector<Policy> policies{Policy::retriever_order()};
    const std::vector<std::size_t> ks{1};
    CHECK_THROWS_AS(evaluate_policies(none, policies, kTrue, ks), DataError);
  }

  TEST_CASE("training samples come from every context") {
    std::vector<ScoredContext> contexts{make_context(0, {1, 3, 0}, 2, 4), make_context(1, {5, 5, 2}, 5, 4)};
    const auto samples =
        make_training_samples(contexts, kTrue, EstimatorVariant::unbiased(), PairWeighting::kUniform);
    // Context 0 targets (2, 2/3, 0, 0): 5 distinct pairs; context 1 (1, 1, 2.5, 0): 5 pairs.
    CHECK(samples.size() == 10);
    std::size_t g0 = 0;
    for (const auto& s : samples) g0 += s.group_id == 0;
    CHECK(g0 == 5);
  }

  TEST_CASE("Spearman correlation") {
    const std::vector<double> x{1, 2, 3, 4}, up{0.1, 0.2, 0.5, 0.9}, down{4, 3, 2, 1};
    CHECK(spearman_correlation(x, up) == doctest::Approx(1.0));
    CHECK(spearman_correlation(x, down) == doctest::Approx(-1.0));
    const std::vector<double> tied{1, 1, 2, 3};
    // Ranks (1.5, 1.5, 3, 4) against (1, 2, 3, 4).
    const double mx = 2.5, my = 2.5;
    const std::vector<double> rx{1.5, 1.5, 3, 4}, ry{1, 2, 3, 4};
    double sxy = 0, sxx = 0, syy = 0;
    for (int i = 0; i < 4; ++i) {
      sxy += (rx[i] - mx) * (ry[i] - my);
      sxx += (rx[i] - mx) * (rx[i] - mx);
      syy += (ry[i] - my) * (ry[i] - my);
    }
    CHECK(spearman_correlation(tied, x) == doctest::Approx(sxy / std::sqrt(sxx * syy)));
  }

  TEST_CASE("ablation labels") {
    CHECK(ablation_label(EstimatorVariant::biased()) == "Biased");
    CHECK(ablation_label(EstimatorVariant::prescient(std::nullopt)) == "Prescient@inf");
    CHECK(ablation_label(EstimatorVariant::misspecified(2.0)) == "Misspecified(2)");
    CHECK(default_ablation_variants().size() == 6);
  }
}
