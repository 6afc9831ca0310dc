#pragma once

// Independent reference computations shared by the unit and acceptance
// suites. Everything here is written from the definitions, not by calling
// the code under test for the quantity being checked.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "uqac/clicksim.hpp"
#include "uqac/corpus.hpp"
#include "uqac/docrank.hpp"
#include "uqac/estimator.hpp"
#include "uqac/ltr.hpp"
#include "uqac/rng.hpp"

namespace uqac::oracle {

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

inline McEstimate summarize(const std::vector<double>& values) {
  McEstimate out;
  out.n = values.size();
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std_error = std::sqrt(ss / static_cast<double>(values.size() - 1) / static_cast<double>(values.size()));
  }
  return out;
}

/// p_k = k^-alpha within the cutoff, straight from the definition.
inline double reference_propensity(double alpha, std::uint32_t cutoff, Rank r) {
  if (!r.is_finite() || r.position() > cutoff) return 0.0;
  return 1.0 / std::pow(static_cast<double>(r.position()), alpha);
}

/// Every relevant document the candidate can surface is also reachable
/// under the logged query (the positivity condition of IPS).
inline bool has_full_support(const RankSource& ranks, const CorpusItem& item, std::string_view candidate,
                             const PropensityModel& m) {
  for (DocId a : item.relevant_docs) {
    const bool reachable_candidate = reference_propensity(m.alpha, m.cutoff, ranks.rank_of(candidate, a)) > 0;
    const bool reachable_logged = reference_propensity(m.alpha, m.cutoff, ranks.rank_of(item.query_text, a)) > 0;
    if (reachable_candidate && !reachable_logged) return false;
  }
  return true;
}

/// sum over relevant docs of p(rank_q(a)).
inline double reference_true_utility(const RankSource& ranks, const CorpusItem& item, std::string_view query,
                                     const PropensityModel& m) {
  double total = 0.0;
  for (DocId a : item.relevant_docs) total += reference_propensity(m.alpha, m.cutoff, ranks.rank_of(query, a));
  return total;
}

/// Per-impression sum of estimated utilities of `candidate`, over n
/// simulated searches of the item under its own query.
inline std::vector<double> impression_utility_samples(const RankCache& ranks, const CorpusItem& item,
                                                      std::string_view candidate, const PropensityModel& m,
                                                      std::size_t n, std::uint64_t seed) {
  const RankedDocs& ranking = ranks.ranking(item.query_text);
  const auto variant = EstimatorVariant::unbiased();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, {i}));
    double sum = 0.0;
    for (const auto& e : simulate_impression(ranking, item, "", m, rng)) {
      sum += estimate_utility(e, candidate, ranks, m, variant).value;
    }
    out[i] = sum;
  }
  return out;
}

/// Probability that a prefix is drawn at all: the cut is uniform over the
/// positions after the first word and must reach min_len.
inline double prefix_probability(std::string_view query, std::size_t min_len) {
  const std::size_t first_word = std::min(query.find(' '), query.size());
  if (first_word >= query.size()) return 0.0;
  std::size_t ok = 0;
  const std::size_t positions = query.size() - first_word;
  for (std::size_t cut = first_word + 1; cut <= query.size(); ++cut) ok += cut >= min_len;
  return static_cast<double>(ok) / static_cast<double>(positions);
}

/// Expected number of log entries: passes x P(prefix) x sum_a p(rank(a)).
inline double expected_log_size(const Corpus& corpus, const RankSource& ranks, const PropensityModel& m,
                                std::size_t passes, std::size_t min_prefix_len) {
  double total = 0.0;
  for (const auto& item : corpus.items) {
    total += static_cast<double>(passes) * prefix_probability(item.query_text, min_prefix_len) *
             reference_true_utility(ranks, item, item.query_text, m);
  }
  return total;
}

/// Chi-square test of per-rank observation counts. Each rank is an
/// independent binomial, so the statistic sums (O - E)^2 / (n p (1 - p))
/// over ranks with 0 < p < 1. Returns the upper-tail p-value.
struct ChiSquare {
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
};

inline ChiSquare observation_chi_square(const std::vector<std::size_t>& counts, std::size_t n, double alpha) {
  ChiSquare out;
  for (std::size_t r = 1; r <= counts.size(); ++r) {
    const double p = 1.0 / std::pow(static_cast<double>(r), alpha);
    if (p <= 0.0 || p >= 1.0) continue;
    const double expected = static_cast<double>(n) * p;
    const double diff = static_cast<double>(counts[r - 1]) - expected;
    out.statistic += diff * diff / (expected * (1.0 - p));
    ++out.dof;
  }
  if (out.dof > 0) {
    boost::math::chi_squared dist(static_cast<double>(out.dof));
    out.p_value = boost::math::cdf(boost::math::complement(dist, out.statistic));
  }
  return out;
}

/// Concordance loss written out pair by pair:
///   -(1/C(K,2)) sum_{i<j} (u_{pi(i)} - u_{pi(j)})
inline double reference_context_loss(const std::vector<double>& ordered_utilities, std::size_t k) {
  std::vector<double> u(ordered_utilities.begin(),
                        ordered_utilities.begin() + static_cast<std::ptrdiff_t>(std::min(k, ordered_utilities.size())));
  u.resize(k, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) total += u[i] - u[j];
  }
  const double pairs = static_cast<double>(k) * static_cast<double>(k - 1) / 2.0;
  return -total / pairs;
}

/// Central finite-difference gradient of any scalar function.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Pairwise logistic objective computed densely from the definition.
inline double reference_objective(const std::vector<PairwiseSample>& samples, const std::vector<double>& w,
                                  double l2) {
  double total = 0.0;
  for (const auto& s : samples) {
    const auto x = s.delta.to_dense();
    double margin = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) margin += w[i] * x[i];
    total += s.weight * std::log1p(std::exp(-s.label * margin));
  }
  double norm2 = 0.0;
  for (double v : w) norm2 += v * v;
  return total + l2 * norm2;
}

/// Relative error between two vectors in the Euclidean norm.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
  return std::sqrt(diff) / scale;
}

/// Random sparse pairwise samples in a small dense-checkable space.
inline std::vector<PairwiseSample> random_samples(std::size_t count, std::uint32_t dimension, Rng& rng) {
  std::vector<PairwiseSample> out;
  for (std::size_t s = 0; s < count; ++s) {
    std::vector<std::pair<std::uint32_t, double>> entries;
    const std::size_t nnz = 1 + rng.below(6);
    for (std::size_t k = 0; k < nnz; ++k) {
      entries.push_back({static_cast<std::uint32_t>(rng.below(dimension)), 2.0 * rng.uniform() - 1.0});
    }
    PairwiseSample p;
    p.delta = FeatureVector(dimension, std::move(entries));
    p.label = rng.below(2) ? 1 : -1;
    p.weight = 0.1 + 2.0 * rng.uniform();
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace uqac::oracle
