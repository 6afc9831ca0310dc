#include "uqac/ltr.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "uqac/common.hpp"
#include "uqac/rng.hpp"
#include "uqac/text.hpp"

namespace uqac {

namespace {

constexpr const char* kFormat = "uqac.ranker";
constexpr int kVersion = 1;

// log(1 + exp(x)) without overflow.
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

FeatureVector combine(const FeatureVector& a, const FeatureVector& b, double sign) {
  if (a.dimension() != b.dimension()) throw std::invalid_argument("feature dimension mismatch");
  std::vector<std::pair<std::uint32_t, double>> out;
  out.reserve(a.entries().size() + b.entries().size());
  for (const auto& e : a.entries()) out.push_back(e);
  for (const auto& [i, v] : b.entries()) out.push_back({i, sign * v});
  return FeatureVector(a.dimension(), std::move(out));
}

class HashedFeatures {
 public:
  HashedFeatures(const FeatureOptions& options)
      : seed_(options.seed), buckets_(options.dimension - feature_slot::kReserved) {}

  void add(std::string_view space, std::string_view key, double value) {
    std::string token;
    token.reserve(space.size() + key.size() + 1);
    token.append(space).push_back('\x1f');
    token.append(key);
    const std::uint64_t h = stable_hash(token, seed_);
    const auto index = static_cast<std::uint32_t>(h % buckets_);
    entries_.push_back({index, (h >> 63) ? -value : value});
  }

  void add_char_ngrams(std::string_view space, std::string_view text) {
    const std::string padded = "^" + std::string(text) + "$";
    std::vector<std::string_view> grams;
    for (std::size_t n = 2; n <= 4; ++n) {
      for (std::size_t i = 0; i + n <= padded.size(); ++i) grams.push_back(std::string_view(padded).substr(i, n));
    }
    if (grams.empty()) return;
    const double value = 1.0 / std::sqrt(static_cast<double>(grams.size()));
    for (auto g : grams) add(space, g, value);
  }

  std::vector<std::pair<std::uint32_t, double>> take() { return std::move(entries_); }

 private:
  std::uint64_t seed_;
  std::uint32_t buckets_;
  std::vector<std::pair<std::uint32_t, double>> entries_;
};

}  // namespace

FeatureVector::FeatureVector(std::uint32_t dimension, std::vector<std::pair<std::uint32_t, double>> entries)
    : dimension_(dimension) {
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [i, v] : entries) {
    if (i >= dimension_) throw std::out_of_range("feature index out of range");
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite feature value");
    if (!entries_.empty() && entries_.back().first == i) {
      entries_.back().second += v;
    } else {
      entries_.push_back({i, v});
    }
  }
  std::erase_if(entries_, [](const auto& e) { return e.second == 0.0; });
}

double FeatureVector::at(std::uint32_t index) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), index,
                             [](const auto& e, std::uint32_t i) { return e.first < i; });
  return it != entries_.end() && it->first == index ? it->second : 0.0;
}

double FeatureVector::dot(std::span<const double> weights) const {
  if (weights.size() != dimension_) throw std::invalid_argument("feature dimension mismatch");
  double s = 0.0;
  for (const auto& [i, v] : entries_) s += weights[i] * v;
  return s;
}

std::vector<double> FeatureVector::to_dense() const {
  std::vector<double> dense(dimension_, 0.0);
  for (const auto& [i, v] : entries_) dense[i] = v;
  return dense;
}

FeatureVector operator+(const FeatureVector& a, const FeatureVector& b) { return combine(a, b, 1.0); }
FeatureVector operator-(const FeatureVector& a, const FeatureVector& b) { return combine(a, b, -1.0); }
FeatureVector operator*(double s, const FeatureVector& a) {
  std::vector<std::pair<std::uint32_t, double>> out(a.entries().begin(), a.entries().end());
  for (auto& e : out) e.second *= s;
  return FeatureVector(a.dimension(), std::move(out));
}

void FeatureOptions::validate() const {
  if (dimension < (1u << 10) || (dimension & (dimension - 1)) != 0) {
    throw std::invalid_argument("feature dimension must be a power of two >= 1024");
  }
}

FeatureVector featurize_pair(const QueryContext& context, const Candidate& candidate,
                             const FeatureOptions& options) {
  options.validate();
  const std::uint32_t d = options.dimension;
  if (candidate.padding) return FeatureVector(d);

  const std::string& query = candidate.query;
  const std::string& prefix = context.prefix;
  const bool extends = query.starts_with(prefix);

  HashedFeatures h(options);
  h.add_char_ngrams("q", query);
  h.add_char_ngrams("c", extends ? std::string_view(query).substr(prefix.size()) : std::string_view(query));

  const auto query_tokens = split_tokens(query);
  auto prefix_tokens = split_tokens(prefix);
  // A prefix not ending in a space is still typing its last word.
  std::string partial;
  if (!prefix.empty() && prefix.back() != ' ' && !prefix_tokens.empty()) {
    partial = prefix_tokens.back();
    prefix_tokens.pop_back();
  }
  for (const auto& qt : query_tokens) {
    h.add("w", qt, 1.0);
    for (const auto& pt : prefix_tokens) h.add("x", pt + "|" + qt, 1.0);
    if (!partial.empty()) h.add("p", partial + "|" + qt, 1.0);
  }

  auto entries = h.take();
  double overlap = 0.0;
  for (const auto& qt : query_tokens) {
    if (std::find(prefix_tokens.begin(), prefix_tokens.end(), qt) != prefix_tokens.end() || qt == partial) {
      overlap += 1.0;
    }
  }
  entries.push_back({feature_slot::token_overlap(d), overlap});
  entries.push_back({feature_slot::starts_with_prefix(d), extends ? 1.0 : 0.0});
  entries.push_back({feature_slot::length_difference(d),
                     (static_cast<double>(query.size()) - static_cast<double>(prefix.size())) / 10.0});
  entries.push_back({feature_slot::retriever_score(d), std::log1p(std::max(candidate.score, 0.0))});
  return FeatureVector(d, std::move(entries));
}

std::string to_string(PairWeighting weighting) {
  return weighting == PairWeighting::kUniform ? "uniform" : "magnitude";
}

PairWeighting parse_weighting(std::string_view name) {
  if (name == "uniform") return PairWeighting::kUniform;
  if (name == "magnitude") return PairWeighting::kMagnitude;
  throw std::invalid_argument("unknown pair weighting '" + std::string(name) + "'");
}

std::vector<PairwiseSample> build_pairwise_samples(std::span<const std::pair<FeatureVector, double>> group,
                                                   PairWeighting weighting, std::uint64_t group_id) {
  std::vector<PairwiseSample> samples;
  for (std::size_t i = 0; i < group.size(); ++i) {
    for (std::size_t j = i + 1; j < group.size(); ++j) {
      const double ti = group[i].second;
      const double tj = group[j].second;
      if (ti == tj) continue;
      PairwiseSample s;
      s.delta = group[j].first - group[i].first;
      s.label = tj > ti ? 1 : -1;
      s.weight = weighting == PairWeighting::kUniform ? 1.0 : std::abs(tj - ti);
      s.group_id = group_id;
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

double pairwise_objective(std::span<const PairwiseSample> samples, std::span<const double> weights, double l2) {
  double total = 0.0;
  for (const auto& s : samples) total += s.weight * softplus(-s.label * s.delta.dot(weights));
  double norm2 = 0.0;
  for (double w : weights) norm2 += w * w;
  return total + l2 * norm2;
}

std::vector<double> pairwise_gradient(std::span<const PairwiseSample> samples, std::span<const double> weights,
                                      double l2) {
  std::vector<double> grad(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) grad[i] = 2.0 * l2 * weights[i];
  for (const auto& s : samples) {
    const double margin = s.label * s.delta.dot(weights);
    const double coef = -s.weight * s.label * sigmoid(-margin);
    for (const auto& [i, v] : s.delta.entries()) grad[i] += coef * v;
  }
  return grad;
}

RankerModel train_ranker(std::span<const PairwiseSample> samples, std::uint32_t dimension,
                         const TrainOptions& options) {
  if (!(options.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (options.l2 < 0.0) throw std::invalid_argument("l2 must be nonnegative");
  for (const auto& s : samples) {
    if (s.delta.dimension() != dimension) throw std::invalid_argument("sample dimension mismatch");
  }

  RankerModel model;
  model.weights.assign(dimension, 0.0);
  model.epochs = options.epochs;
  model.learning_rate = options.learning_rate;
  model.l2 = options.l2;
  model.seed = options.seed;
  model.training_samples = samples.size();
  model.features.dimension = dimension;
  if (samples.empty() || options.epochs == 0) return model;

  double weight_scale = 1.0;
  if (options.normalize_weights) {
    double sum = 0.0;
    for (const auto& s : samples) sum += s.weight;
    if (sum > 0.0) weight_scale = static_cast<double>(samples.size()) / sum;
  }

  // weights = scale * v keeps the per-step L2 shrink O(1).
  std::vector<double>& v = model.weights;
  double scale = 1.0;
  const double n = static_cast<double>(samples.size());
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    Rng rng(derive_seed(options.seed, {epoch}));
    rng.shuffle(std::span<std::size_t>(order));
    const double lr = options.learning_rate / std::sqrt(1.0 + static_cast<double>(epoch));
    const double shrink = 1.0 - 2.0 * lr * options.l2 / n;
    if (!(shrink > 0.0)) throw std::runtime_error("learning rate too large for the l2 penalty");
    for (std::size_t idx : order) {
      const auto& s = samples[idx];
      const double margin = s.label * scale * s.delta.dot(v);
      const double step = lr * s.weight * weight_scale * s.label * sigmoid(-margin);
      scale *= shrink;
      const double adjusted = step / scale;
      for (const auto& [i, x] : s.delta.entries()) v[i] += adjusted * x;
      if (scale < 1e-60) {
        for (double& w : v) w *= scale;
        scale = 1.0;
      }
    }
    for (double& w : v) w *= scale;
    scale = 1.0;

    double objective = 0.0;
    for (const auto& s : samples) objective += s.weight * weight_scale * softplus(-s.label * s.delta.dot(v));
    double norm2 = 0.0;
    for (double w : v) norm2 += w * w;
    objective += options.l2 * norm2;
    if (!std::isfinite(objective)) {
      throw std::runtime_error("ranker training diverged: non-finite objective at epoch " + std::to_string(epoch));
    }
    model.final_objective = objective;
  }
  return model;
}

double score(const RankerModel& model, const FeatureVector& features) {
  if (features.dimension() != model.dimension()) throw std::invalid_argument("feature dimension mismatch");
  return features.dot(model.weights);
}

nlohmann::json RankerModel::to_json() const {
  nlohmann::json sparse = nlohmann::json::array();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] != 0.0) sparse.push_back({i, weights[i]});
  }
  return {{"format", kFormat},
          {"version", kVersion},
          {"dimension", weights.size()},
          {"feature_seed", features.seed},
          {"epochs", epochs},
          {"learning_rate", learning_rate},
          {"l2", l2},
          {"seed", seed},
          {"target_variant", target_variant},
          {"weighting", weighting},
          {"training_samples", training_samples},
          {"final_objective", final_objective},
          {"weights", std::move(sparse)}};
}

RankerModel RankerModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kFormat) throw DataError("not a ranker model file");
  if (j.at("version").get<int>() != kVersion) throw DataError("unsupported ranker model version");
  RankerModel m;
  const auto dim = j.at("dimension").get<std::uint32_t>();
  m.weights.assign(dim, 0.0);
  m.features.dimension = dim;
  m.features.seed = j.at("feature_seed").get<std::uint64_t>();
  m.epochs = j.at("epochs").get<std::size_t>();
  m.learning_rate = j.at("learning_rate").get<double>();
  m.l2 = j.at("l2").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.target_variant = j.at("target_variant").get<std::string>();
  m.weighting = j.at("weighting").get<std::string>();
  m.training_samples = j.at("training_samples").get<std::size_t>();
  m.final_objective = j.at("final_objective").get<double>();
  for (const auto& e : j.at("weights")) {
    const auto i = e.at(0).get<std::size_t>();
    if (i >= dim) throw DataError("ranker weight index out of range");
    m.weights[i] = e.at(1).get<double>();
  }
  return m;
}

void RankerModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json().dump() << '\n';
}

RankerModel RankerModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError(path.string());
  return from_json(nlohmann::json::parse(in));
}

bool RankerModel::operator==(const RankerModel& o) const {
  return weights == o.weights && epochs == o.epochs && learning_rate == o.learning_rate && l2 == o.l2 &&
         seed == o.seed && target_variant == o.target_variant && weighting == o.weighting &&
         features.dimension == o.features.dimension && features.seed == o.features.seed &&
         training_samples == o.training_samples && final_objective == o.final_objective;
}

double empirical_pairwise_loss(std::span<const RankedContext> contexts, std::size_t k) {
  if (k < 2) throw std::invalid_argument("pairwise loss needs K >= 2");
  if (contexts.empty()) return 0.0;
  const double pairs = static_cast<double>(k) * static_cast<double>(k - 1) / 2.0;
  double total = 0.0;
  std::vector<double> u;
  for (const auto& ctx : contexts) {
    if (ctx.ranking.size() > k) throw std::invalid_argument("ranking longer than K");
    u.assign(k, 0.0);
    for (std::size_t i = 0; i < ctx.ranking.size(); ++i) {
      auto it = ctx.utilities.find(ctx.ranking[i]);
      if (it != ctx.utilities.end()) u[i] = it->second;
    }
    // sum over i < j of (u_i - u_j) = sum_i (k - 1 - 2i) u_i
    double concordance = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      concordance += (static_cast<double>(k) - 1.0 - 2.0 * static_cast<double>(i)) * u[i];
    }
    total += concordance / pairs;
  }
  return -total / static_cast<double>(contexts.size());
}

}  // namespace uqac
