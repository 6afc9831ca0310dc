#include "uqac/estimator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace uqac {

namespace {

// p(candidate) / p(logged) under p_k = k^-alpha, written as a single power
// of the rank ratio so identical ranks give exactly 1.
double propensity_ratio(Rank candidate, std::uint32_t logged, double alpha, std::uint32_t cutoff) {
  if (!candidate.is_finite() || candidate.position() > cutoff) return 0.0;
  return std::pow(static_cast<double>(logged) / static_cast<double>(candidate.position()), alpha);
}

std::string format_number(double x) {
  std::ostringstream out;
  out << x;
  return out.str();
}

double parse_number(std::string_view text, std::string_view context) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument("bad number in estimator variant '" + std::string(context) + "'");
  }
  return value;
}

}  // namespace

EstimatorVariant EstimatorVariant::with_clip(double bound) const {
  EstimatorVariant v = *this;
  v.clip_bound = bound;
  v.validate();
  return v;
}

void EstimatorVariant::validate() const {
  if (kind == Kind::kPrescient && prescient_k && *prescient_k == 0) {
    throw std::invalid_argument("prescient k must be positive");
  }
  if (kind == Kind::kMisspecified && !(alpha_prime > 0.0)) {
    throw std::invalid_argument("misspecified alpha must be positive");
  }
  if (clip_bound && !(*clip_bound >= 1.0)) throw std::invalid_argument("clip bound must be >= 1");
}

std::string EstimatorVariant::name() const {
  std::string out;
  switch (kind) {
    case Kind::kUnbiased: out = "unbiased"; break;
    case Kind::kBiased: out = "biased"; break;
    case Kind::kPrescient:
      out = "prescient@" + (prescient_k ? std::to_string(*prescient_k) : std::string("inf"));
      break;
    case Kind::kMisspecified: out = "misspecified(" + format_number(alpha_prime) + ")"; break;
  }
  if (clip_bound) out += ",clip=" + format_number(*clip_bound);
  return out;
}

EstimatorVariant EstimatorVariant::parse(std::string_view name) {
  const std::string original(name);
  EstimatorVariant v;
  std::optional<double> clip;
  if (auto comma = name.find(",clip="); comma != std::string_view::npos) {
    clip = parse_number(name.substr(comma + 6), original);
    name = name.substr(0, comma);
  }
  if (name == "unbiased") {
    v = unbiased();
  } else if (name == "biased") {
    v = biased();
  } else if (name.starts_with("prescient@")) {
    auto k = name.substr(10);
    if (k == "inf") {
      v = prescient(std::nullopt);
    } else {
      std::uint32_t value = 0;
      auto [ptr, ec] = std::from_chars(k.data(), k.data() + k.size(), value);
      if (ec != std::errc() || ptr != k.data() + k.size()) {
        throw std::invalid_argument("bad prescient depth in '" + original + "'");
      }
      v = prescient(value);
    }
  } else if (name.starts_with("misspecified(") && name.ends_with(")")) {
    v = misspecified(parse_number(name.substr(13, name.size() - 14), original));
  } else {
    throw std::invalid_argument("unknown estimator variant '" + original + "'");
  }
  v.clip_bound = clip;
  v.validate();
  return v;
}

double utility_value(Rank candidate_rank, std::uint32_t logged_rank, const PropensityModel& model,
                     const EstimatorVariant& variant) {
  if (logged_rank == 0 || logged_rank > model.cutoff) {
    throw DataError("zero-propensity logged click (logged rank " + std::to_string(logged_rank) + ")");
  }
  double value = 0.0;
  switch (variant.kind) {
    case EstimatorVariant::Kind::kUnbiased:
      value = propensity_ratio(candidate_rank, logged_rank, model.alpha, model.cutoff);
      break;
    case EstimatorVariant::Kind::kBiased:
      value = propensity(model, candidate_rank);
      break;
    case EstimatorVariant::Kind::kPrescient:
      value = candidate_rank.is_finite() &&
                      (!variant.prescient_k || candidate_rank.position() <= *variant.prescient_k)
                  ? 1.0
                  : 0.0;
      break;
    case EstimatorVariant::Kind::kMisspecified:
      value = propensity_ratio(candidate_rank, logged_rank, variant.alpha_prime, model.cutoff);
      break;
  }
  if (variant.clip_bound) value = std::min(value, *variant.clip_bound);
  return value;
}

UtilityTarget estimate_utility(const LogEntry& entry, std::string_view candidate, const RankSource& ranks,
                               const PropensityModel& model, const EstimatorVariant& variant) {
  const Rank rank = ranks.rank_of(candidate, entry.clicked_doc);
  return {std::string(candidate), utility_value(rank, entry.logged_rank, model, variant), variant, &entry};
}

double true_expected_utility(const RankSource& ranks, std::string_view query, std::span<const DocId> relevant,
                             const PropensityModel& true_model) {
  double total = 0.0;
  for (DocId a : relevant) total += propensity(true_model, ranks.rank_of(query, a));
  return total;
}

nlohmann::json VarianceReport::to_json() const {
  return {{"pairs", pairs},
          {"max_ratio", max_ratio},
          {"mean_ratio", mean_ratio},
          {"ratio_quantiles", ratio_quantiles},
          {"cells", cells},
          {"mean_cell_variance", mean_cell_variance},
          {"max_cell_variance", max_cell_variance},
          {"rho_hat", rho_hat}};
}

VarianceReport variance_diagnostics(std::span<const LogEntry> log,
                                    std::span<const std::vector<std::string>> candidates_per_entry,
                                    const RankSource& ranks, const PropensityModel& model) {
  if (candidates_per_entry.size() != log.size()) {
    throw std::invalid_argument("one candidate list per log entry is required");
  }
  VarianceReport report;
  std::vector<double> ratios;
  std::map<std::pair<std::string, std::string>, std::vector<double>> cells;
  std::set<std::string> positive;
  const auto unbiased = EstimatorVariant::unbiased();

  for (std::size_t i = 0; i < log.size(); ++i) {
    for (const auto& candidate : candidates_per_entry[i]) {
      const double u = estimate_utility(log[i], candidate, ranks, model, unbiased).value;
      ratios.push_back(u);
      cells[{log[i].context.prefix, candidate}].push_back(u);
      if (u > 0.0) positive.insert(candidate);
    }
  }

  report.pairs = ratios.size();
  report.rho_hat = positive.size();
  if (!ratios.empty()) {
    std::sort(ratios.begin(), ratios.end());
    report.max_ratio = ratios.back();
    double sum = 0.0;
    for (double r : ratios) sum += r;
    report.mean_ratio = sum / static_cast<double>(ratios.size());
    for (double q : {0.0, 0.5, 0.9, 0.99, 1.0}) {
      const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(ratios.size() - 1)));
      report.ratio_quantiles.push_back(ratios[idx]);
    }
  }

  double variance_sum = 0.0;
  for (const auto& [_, values] : cells) {
    if (values.size() < 2) continue;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double var = ss / static_cast<double>(values.size() - 1);
    ++report.cells;
    variance_sum += var;
    report.max_cell_variance = std::max(report.max_cell_variance, var);
  }
  if (report.cells) report.mean_cell_variance = variance_sum / static_cast<double>(report.cells);
  return report;
}

}  // namespace uqac
