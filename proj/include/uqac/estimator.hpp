#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uqac/clicksim.hpp"
#include "uqac/common.hpp"
#include "uqac/docrank.hpp"

namespace uqac {

/// How a candidate query's utility is estimated from a logged click.
///   unbiased        p(rank_q(a)) / p(rank_qbar(a))
///   biased          p(rank_q(a))
///   prescient(k)    1[rank_q(a) <= k], k may be infinite
///   misspecified(a) the unbiased ratio under p_k = k^-a
struct EstimatorVariant {
  enum class Kind { kUnbiased, kBiased, kPrescient, kMisspecified };

  Kind kind = Kind::kUnbiased;
  std::optional<std::uint32_t> prescient_k;  // nullopt means infinity
  double alpha_prime = 1.0;
  std::optional<double> clip_bound;

  static EstimatorVariant unbiased() { return {}; }
  static EstimatorVariant biased() { return {Kind::kBiased, std::nullopt, 1.0, std::nullopt}; }
  static EstimatorVariant prescient(std::optional<std::uint32_t> k) {
    return {Kind::kPrescient, k, 1.0, std::nullopt};
  }
  static EstimatorVariant misspecified(double alpha) {
    return {Kind::kMisspecified, std::nullopt, alpha, std::nullopt};
  }

  EstimatorVariant with_clip(double bound) const;
  void validate() const;

  /// Stable name: unbiased, biased, prescient@5, prescient@inf,
  /// misspecified(0.5); clipped variants append ",clip=B".
  std::string name() const;
  static EstimatorVariant parse(std::string_view name);

  bool operator==(const EstimatorVariant&) const = default;
};

struct UtilityTarget {
  std::string candidate_query;
  double value = 0.0;
  EstimatorVariant variant;
  const LogEntry* source_entry = nullptr;
};

/// Core of every estimator: value given the candidate's rank of the clicked
/// document and the logged rank. `model` is the assumed propensity model.
double utility_value(Rank candidate_rank, std::uint32_t logged_rank, const PropensityModel& model,
                     const EstimatorVariant& variant);

UtilityTarget estimate_utility(const LogEntry& entry, std::string_view candidate,
                               const RankSource& ranks, const PropensityModel& model,
                               const EstimatorVariant& variant);

/// Expected per-impression utility mass of a query for an item:
/// sum over relevant docs of p_true(rank_query(a)).
double true_expected_utility(const RankSource& ranks, std::string_view query,
                             std::span<const DocId> relevant, const PropensityModel& true_model);

struct VarianceReport {
  std::size_t pairs = 0;  // (entry, candidate) evaluations
  double max_ratio = 0.0;
  double mean_ratio = 0.0;
  // Quantiles of the realized likelihood ratios, at 0, .5, .9, .99, 1.
  std::vector<double> ratio_quantiles;
  std::size_t cells = 0;  // (context, candidate) groups with >= 2 observations
  double mean_cell_variance = 0.0;
  double max_cell_variance = 0.0;
  std::size_t rho_hat = 0;  // distinct queries with positive utility somewhere

  nlohmann::json to_json() const;
};

/// Likelihood-ratio and spread diagnostics of the unbiased estimator over a
/// log. candidates_per_entry[i] lists the candidates scored for log[i].
VarianceReport variance_diagnostics(std::span<const LogEntry> log,
                                    std::span<const std::vector<std::string>> candidates_per_entry,
                                    const RankSource& ranks, const PropensityModel& model);

}  // namespace uqac
