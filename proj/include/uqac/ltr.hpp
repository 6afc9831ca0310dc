#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "uqac/clicksim.hpp"
#include "uqac/retriever.hpp"

namespace uqac {

/// Vector of fixed dimension stored sparsely: entries sorted by index,
/// indices unique, values finite and nonzero.
class FeatureVector {
 public:
  FeatureVector() = default;
  explicit FeatureVector(std::uint32_t dimension) : dimension_(dimension) {}
  /// Sums duplicate indices and drops zeros.
  FeatureVector(std::uint32_t dimension, std::vector<std::pair<std::uint32_t, double>> entries);

  std::uint32_t dimension() const { return dimension_; }
  std::span<const std::pair<std::uint32_t, double>> entries() const { return entries_; }
  bool is_zero() const { return entries_.empty(); }
  double at(std::uint32_t index) const;
  double dot(std::span<const double> weights) const;
  std::vector<double> to_dense() const;

  friend FeatureVector operator+(const FeatureVector& a, const FeatureVector& b);
  friend FeatureVector operator-(const FeatureVector& a, const FeatureVector& b);
  friend FeatureVector operator*(double s, const FeatureVector& a);
  bool operator==(const FeatureVector&) const = default;

 private:
  std::uint32_t dimension_ = 0;
  std::vector<std::pair<std::uint32_t, double>> entries_;
};

struct FeatureOptions {
  std::uint32_t dimension = 1u << 18;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Reserved scalar slots at the top of the feature space.
namespace feature_slot {
inline std::uint32_t token_overlap(std::uint32_t d) { return d - 1; }
inline std::uint32_t starts_with_prefix(std::uint32_t d) { return d - 2; }
inline std::uint32_t length_difference(std::uint32_t d) { return d - 3; }
inline std::uint32_t retriever_score(std::uint32_t d) { return d - 4; }
inline constexpr std::uint32_t kReserved = 4;
}  // namespace feature_slot

/// Hashed (context, query) interaction features: signed char 2-4-grams of
/// the query and of its completion past the prefix, prefix-word x
/// query-word crosses, plus the scalar slots above. Padding -> zero vector.
FeatureVector featurize_pair(const QueryContext& context, const Candidate& candidate,
                             const FeatureOptions& options);

enum class PairWeighting { kUniform, kMagnitude };
std::string to_string(PairWeighting weighting);
PairWeighting parse_weighting(std::string_view name);

struct PairwiseSample {
  FeatureVector delta;
  int label = 0;  // +1 or -1
  double weight = 1.0;
  std::uint64_t group_id = 0;
};

/// All unordered pairs with distinct targets, oriented higher index first:
/// delta = phi_j - phi_i, label = sign(t_j - t_i).
std::vector<PairwiseSample> build_pairwise_samples(
    std::span<const std::pair<FeatureVector, double>> group, PairWeighting weighting,
    std::uint64_t group_id = 0);

struct TrainOptions {
  std::size_t epochs = 30;
  double learning_rate = 0.02;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
  // Rescale sample weights to mean 1 before training.
  bool normalize_weights = true;
};

struct RankerModel {
  std::vector<double> weights;
  std::size_t epochs = 0;
  double learning_rate = 0.0;
  double l2 = 0.0;
  std::uint64_t seed = 0;
  std::string target_variant;
  std::string weighting;
  FeatureOptions features;
  std::size_t training_samples = 0;
  double final_objective = 0.0;

  std::uint32_t dimension() const { return static_cast<std::uint32_t>(weights.size()); }

  nlohmann::json to_json() const;
  static RankerModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static RankerModel load(const std::filesystem::path& path);
  bool operator==(const RankerModel&) const;
};

/// Weighted pairwise logistic objective
///   sum_i w_i log(1 + exp(-y_i <w, delta_i>)) + l2 ||w||^2
double pairwise_objective(std::span<const PairwiseSample> samples, std::span<const double> weights,
                          double l2);
/// Exact gradient of pairwise_objective.
std::vector<double> pairwise_gradient(std::span<const PairwiseSample> samples,
                                      std::span<const double> weights, double l2);

/// Seeded SGD on the objective above (one sample per step, reshuffled every
/// epoch). Throws std::runtime_error if the objective becomes non-finite.
RankerModel train_ranker(std::span<const PairwiseSample> samples, std::uint32_t dimension,
                         const TrainOptions& options);

double score(const RankerModel& model, const FeatureVector& features);

/// One context's ordering (best first) and its per-query utilities.
struct RankedContext {
  std::vector<std::string> ranking;
  std::unordered_map<std::string, double> utilities;
};

/// Negated concordance loss averaged over contexts:
///   -(1/n) sum_x (1 / C(K,2)) sum_{i ahead of j} (u_i - u_j)
/// Rankings shorter than K are padded with zero-utility entries.
double empirical_pairwise_loss(std::span<const RankedContext> contexts, std::size_t k);

}  // namespace uqac
