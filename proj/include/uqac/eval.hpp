#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "uqac/clicksim.hpp"
#include "uqac/docrank.hpp"
#include "uqac/estimator.hpp"
#include "uqac/ltr.hpp"
#include "uqac/retriever.hpp"

namespace uqac {

// ---------------------------------------------------------------------------
// Contexts

/// A log entry with its padded candidate set, the rank of the clicked doc
/// under every candidate and the candidates' features.
struct ScoredContext {
  std::uint64_t id = 0;
  LogEntry entry;
  CandidateSet candidates;               // padded to K
  std::vector<Rank> clicked_doc_ranks;   // per candidate; infinite for padding
  std::vector<FeatureVector> features;   // per candidate
  double logged_target = 1.0;            // test-time utility of the logged query
};

struct ContextBuildOptions {
  std::size_t pad_k = 10;
  FeatureOptions features;
  unsigned threads = 1;
};

std::vector<ScoredContext> build_contexts(std::span<const LogEntry> log, const TrieRetriever& retriever,
                                          const RankSource& ranks, const PropensityModel& model,
                                          const ContextBuildOptions& options);

/// Per-candidate targets of a context under an estimator variant.
std::vector<double> context_targets(const ScoredContext& context, const PropensityModel& model,
                                    const EstimatorVariant& variant);

/// Pairwise training samples of every context (group id = context id).
std::vector<PairwiseSample> make_training_samples(std::span<const ScoredContext> contexts,
                                                  const PropensityModel& model,
                                                  const EstimatorVariant& variant,
                                                  PairWeighting weighting);

// ---------------------------------------------------------------------------
// Policies and metric

enum class PolicyKind { kModel, kRetrieverOrder, kOracle, kLogged, kRandom };

struct Policy {
  PolicyKind kind = PolicyKind::kRetrieverOrder;
  std::string label;
  const RankerModel* model = nullptr;
  std::uint64_t seed = 0;

  static Policy model_policy(std::string label, const RankerModel& model);
  static Policy retriever_order(std::string label = "Retriever");
  static Policy oracle(std::string label = "Oracle");
  static Policy logged(std::string label = "Logged");
  static Policy random(std::uint64_t seed, std::string label = "Random");

  /// Oracle and Logged only have a meaningful Utility@1.
  bool top_only() const { return kind == PolicyKind::kOracle || kind == PolicyKind::kLogged; }
};

using UtilityMap = std::unordered_map<std::string, double>;

/// Test-time targets of a context: unbiased utilities of every candidate and
/// of the logged query.
UtilityMap test_targets(const ScoredContext& context, const PropensityModel& true_model);

/// Orders the candidates of a context. Padding entries carry an empty
/// query. Oracle and Logged need `targets`; throws std::invalid_argument if
/// they are missing.
std::vector<Candidate> rank_with_policy(const Policy& policy, const ScoredContext& context,
                                        const UtilityMap* targets);

/// Position-weighted utility with weights 1/j normalized to sum to one.
/// Missing queries and padding count as zero.
double utility_at_k(std::span<const Candidate> ranked, const UtilityMap& targets, std::size_t k);

/// Mean utility at positions 1..max_pos over contexts.
std::vector<double> positional_utility_profile(std::span<const std::vector<double>> per_context_positions,
                                               std::size_t max_pos);

// ---------------------------------------------------------------------------
// Reports

struct PolicyRow {
  std::string label;
  bool top_only = false;
  std::map<std::size_t, double> utility;    // k -> Utility@k
  std::map<std::size_t, double> std_error;  // k -> Monte-Carlo standard error
  std::vector<double> profile;              // mean utility at positions 1..P
};

struct ContextRecord {
  std::uint64_t context_id = 0;
  std::string prefix;
  std::string logged_query;
  DocId clicked_doc = 0;
  std::uint32_t logged_rank = 0;
  std::string policy;
  std::string top_query;
  std::map<std::size_t, double> utility;
};

struct EvalReport {
  std::string title;
  std::vector<std::size_t> ks;
  std::size_t contexts = 0;
  std::string config_fingerprint;
  std::vector<std::uint64_t> seeds;
  std::vector<PolicyRow> rows;

  const PolicyRow& row(std::string_view label) const;
  std::string to_markdown() const;
  std::string to_csv() const;
  std::string profile_csv() const;
  nlohmann::json to_json() const;
};

struct EvalOutput {
  EvalReport report;
  std::vector<ContextRecord> per_context;
};

std::string context_records_csv(std::span<const ContextRecord> records, std::span<const std::size_t> ks);

EvalOutput evaluate_policies(std::span<const ScoredContext> contexts, std::span<const Policy> policies,
                             const PropensityModel& true_model, std::span<const std::size_t> ks,
                             std::size_t profile_positions = 5, unsigned threads = 1);

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentSetup {
  PropensityModel true_model;
  std::vector<std::size_t> ks{1, 5, 10};
  std::size_t profile_positions = 5;
  PairWeighting weighting = PairWeighting::kMagnitude;
  TrainOptions train;
  FeatureOptions features;
  std::uint64_t random_policy_seed = 0;
  unsigned threads = 1;
  std::string config_fingerprint;
  std::vector<std::uint64_t> seeds;
};

RankerModel train_variant_ranker(const ExperimentSetup& setup, std::span<const ScoredContext> training,
                                 const EstimatorVariant& variant);

struct ExperimentResult {
  EvalOutput eval;
  RankerModel model;  // unbiased-target ranker
};

/// Trains the unbiased ranker and compares it against Retriever, Oracle,
/// Logged and Random on the evaluation contexts.
ExperimentResult run_experiment(const ExperimentSetup& setup, std::span<const ScoredContext> training,
                                std::span<const ScoredContext> evaluation);
/// Same, with an already trained unbiased ranker.
EvalOutput evaluate_main(const ExperimentSetup& setup, const RankerModel& unbiased,
                         std::span<const ScoredContext> evaluation);

struct AblationResult {
  EvalReport report;
  std::map<std::string, RankerModel> models;  // by variant name
};

/// One ranker per variant (the unbiased ranker is always included), all
/// evaluated on the same contexts and targets.
AblationResult run_ablations(const ExperimentSetup& setup, std::span<const ScoredContext> training,
                             std::span<const ScoredContext> evaluation,
                             std::span<const EstimatorVariant> variants);

std::vector<EstimatorVariant> default_ablation_variants();
std::string ablation_label(const EstimatorVariant& variant);

struct SizeCurvePoint {
  double fraction = 0.0;
  std::size_t training_contexts = 0;
  std::map<std::size_t, double> utility;
  std::map<std::size_t, double> std_error;
};

struct SizeCurve {
  std::vector<SizeCurvePoint> points;
  std::vector<std::size_t> ks;
  /// Spearman rank correlation between size and Utility@k.
  double spearman(std::size_t k) const;
  std::string to_csv() const;
  std::string to_markdown() const;
};

/// Trains one unbiased ranker per seeded subsample of the training contexts.
/// Fraction 1 reproduces the main-run ranker.
SizeCurve data_size_curve(const ExperimentSetup& setup, std::span<const ScoredContext> training,
                          std::span<const ScoredContext> evaluation, std::span<const double> fractions,
                          std::uint64_t subsample_seed);

/// Spearman correlation with average ranks for ties.
double spearman_correlation(std::span<const double> x, std::span<const double> y);

}  // namespace uqac
