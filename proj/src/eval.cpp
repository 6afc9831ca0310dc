#include "uqac/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "uqac/common.hpp"
#include "uqac/parallel.hpp"
#include "uqac/rng.hpp"

namespace uqac {

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(std::span<const double> xs) {
  MeanSe r;
  if (xs.empty()) return r;
  const double n = static_cast<double>(xs.size());
  r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(ss / (n - 1.0) / n);
  }
  return r;
}

double target_of(const UtilityMap& targets, const Candidate& c) {
  if (c.padding) return 0.0;
  auto it = targets.find(c.query);
  return it == targets.end() ? 0.0 : it->second;
}

}  // namespace

// ---------------------------------------------------------------------------
// Contexts

std::vector<ScoredContext> build_contexts(std::span<const LogEntry> log, const TrieRetriever& retriever,
                                          const RankSource& ranks, const PropensityModel& model,
                                          const ContextBuildOptions& options) {
  model.validate();
  options.features.validate();
  if (options.pad_k == 0) throw std::invalid_argument("padding size K must be positive");
  std::vector<ScoredContext> out(log.size());
  parallel_for(log.size(), options.threads, [&](std::size_t i) {
    ScoredContext& ctx = out[i];
    ctx.id = i;
    ctx.entry = log[i];
    ctx.candidates = pad_candidates(retriever.retrieve(log[i].context.prefix), options.pad_k);
    ctx.clicked_doc_ranks.reserve(ctx.candidates.entries.size());
    ctx.features.reserve(ctx.candidates.entries.size());
    for (const auto& c : ctx.candidates.entries) {
      ctx.clicked_doc_ranks.push_back(c.padding ? Rank::infinite() : ranks.rank_of(c.query, log[i].clicked_doc));
      ctx.features.push_back(featurize_pair(log[i].context, c, options.features));
    }
    ctx.logged_target = 1.0;
  });
  return out;
}

std::vector<double> context_targets(const ScoredContext& context, const PropensityModel& model,
                                    const EstimatorVariant& variant) {
  std::vector<double> t(context.candidates.entries.size(), 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (context.candidates.entries[i].padding) continue;
    t[i] = utility_value(context.clicked_doc_ranks[i], context.entry.logged_rank, model, variant);
  }
  return t;
}

std::vector<PairwiseSample> make_training_samples(std::span<const ScoredContext> contexts,
                                                  const PropensityModel& model,
                                                  const EstimatorVariant& variant,
                                                  PairWeighting weighting) {
  variant.validate();
  std::vector<PairwiseSample> samples;
  std::vector<std::pair<FeatureVector, double>> group;
  for (const auto& ctx : contexts) {
    const auto targets = context_targets(ctx, model, variant);
    group.clear();
    for (std::size_t i = 0; i < targets.size(); ++i) group.emplace_back(ctx.features[i], targets[i]);
    auto s = build_pairwise_samples(group, weighting, ctx.id);
    std::move(s.begin(), s.end(), std::back_inserter(samples));
  }
  return samples;
}

// ---------------------------------------------------------------------------
// Policies and metric

Policy Policy::model_policy(std::string label, const RankerModel& model) {
  return {PolicyKind::kModel, std::move(label), &model, 0};
}
Policy Policy::retriever_order(std::string label) { return {PolicyKind::kRetrieverOrder, std::move(label), nullptr, 0}; }
Policy Policy::oracle(std::string label) { return {PolicyKind::kOracle, std::move(label), nullptr, 0}; }
Policy Policy::logged(std::string label) { return {PolicyKind::kLogged, std::move(label), nullptr, 0}; }
Policy Policy::random(std::uint64_t seed, std::string label) {
  return {PolicyKind::kRandom, std::move(label), nullptr, seed};
}

UtilityMap test_targets(const ScoredContext& context, const PropensityModel& true_model) {
  UtilityMap targets;
  const auto values = context_targets(context, true_model, EstimatorVariant::unbiased());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto& c = context.candidates.entries[i];
    if (!c.padding) targets[c.query] = values[i];
  }
  targets[context.entry.logged_query] = context.logged_target;
  return targets;
}

std::vector<Candidate> rank_with_policy(const Policy& policy, const ScoredContext& context,
                                        const UtilityMap* targets) {
  const auto& cands = context.candidates.entries;
  std::vector<std::size_t> order(cands.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Candidate> out;

  switch (policy.kind) {
    case PolicyKind::kRetrieverOrder:
      return cands;
    case PolicyKind::kModel: {
      if (policy.model == nullptr) throw std::invalid_argument("model policy without a model");
      std::vector<double> s(cands.size());
      for (std::size_t i = 0; i < cands.size(); ++i) s[i] = score(*policy.model, context.features[i]);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (cands[a].padding != cands[b].padding) return !cands[a].padding;
        return s[a] > s[b];
      });
      break;
    }
    case PolicyKind::kOracle: {
      if (targets == nullptr) throw std::invalid_argument("oracle policy needs test-time targets");
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return target_of(*targets, cands[a]) > target_of(*targets, cands[b]);
      });
      break;
    }
    case PolicyKind::kLogged: {
      if (targets == nullptr) throw std::invalid_argument("logged policy needs test-time targets");
      out.push_back({context.entry.logged_query, 0.0, false});
      for (const auto& c : cands) {
        if (out.size() >= cands.size()) break;
        if (!c.padding && c.query == context.entry.logged_query) continue;
        out.push_back(c);
      }
      return out;
    }
    case PolicyKind::kRandom: {
      Rng rng(derive_seed(policy.seed, {context.id}));
      rng.shuffle(std::span<std::size_t>(order));
      break;
    }
  }
  out.reserve(order.size());
  for (std::size_t i : order) out.push_back(cands[i]);
  return out;
}

double utility_at_k(std::span<const Candidate> ranked, const UtilityMap& targets, std::size_t k) {
  if (k == 0) throw std::invalid_argument("Utility@k needs k >= 1");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t j = 1; j <= k; ++j) {
    const double w = 1.0 / static_cast<double>(j);
    den += w;
    if (j <= ranked.size()) num += w * target_of(targets, ranked[j - 1]);
  }
  return num / den;
}

std::vector<double> positional_utility_profile(std::span<const std::vector<double>> per_context_positions,
                                               std::size_t max_pos) {
  std::vector<double> profile(max_pos, 0.0);
  if (per_context_positions.empty()) return profile;
  for (const auto& row : per_context_positions) {
    for (std::size_t j = 0; j < max_pos && j < row.size(); ++j) profile[j] += row[j];
  }
  for (double& p : profile) p /= static_cast<double>(per_context_positions.size());
  return profile;
}

// ---------------------------------------------------------------------------
// Reports

const PolicyRow& EvalReport::row(std::string_view label) const {
  for (const auto& r : rows) {
    if (r.label == label) return r;
  }
  throw std::out_of_range("no report row '" + std::string(label) + "'");
}

std::string EvalReport::to_markdown() const {
  std::ostringstream out;
  out << "## " << title << "\n\n";
  out << "Contexts: " << contexts << "\n\n";
  out << "| Policy |";
  for (auto k : ks) out << " Utility@" << k << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < ks.size(); ++i) out << "---|";
  out << '\n';
  for (const auto& r : rows) {
    out << "| " << r.label << " |";
    for (auto k : ks) {
      auto it = r.utility.find(k);
      if (it == r.utility.end()) {
        out << " - |";
      } else {
        out << ' ' << fixed(it->second) << " ± " << fixed(r.std_error.at(k)) << " |";
      }
    }
    out << '\n';
  }
  return out.str();
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "policy,k,utility,std_error\n";
  for (const auto& r : rows) {
    for (const auto& [k, u] : r.utility) {
      out << csv_field(r.label) << ',' << k << ',' << exact(u) << ',' << exact(r.std_error.at(k)) << '\n';
    }
  }
  return out.str();
}

std::string EvalReport::profile_csv() const {
  std::ostringstream out;
  out << "policy,position,mean_utility\n";
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < r.profile.size(); ++j) {
      out << csv_field(r.label) << ',' << j + 1 << ',' << exact(r.profile[j]) << '\n';
    }
  }
  return out.str();
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j_rows = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json u = nlohmann::json::object();
    nlohmann::json se = nlohmann::json::object();
    for (const auto& [k, v] : r.utility) u[std::to_string(k)] = v;
    for (const auto& [k, v] : r.std_error) se[std::to_string(k)] = v;
    j_rows.push_back({{"policy", r.label}, {"top_only", r.top_only}, {"utility", u}, {"std_error", se},
                      {"profile", r.profile}});
  }
  return {{"title", title}, {"ks", ks}, {"contexts", contexts}, {"config_fingerprint", config_fingerprint},
          {"seeds", seeds}, {"rows", j_rows}};
}

std::string context_records_csv(std::span<const ContextRecord> records, std::span<const std::size_t> ks) {
  std::ostringstream out;
  out << "context_id,policy,prefix,logged_query,clicked_doc,logged_rank,top_query";
  for (auto k : ks) out << ",utility@" << k;
  out << '\n';
  for (const auto& r : records) {
    out << r.context_id << ',' << csv_field(r.policy) << ',' << csv_field(r.prefix) << ','
        << csv_field(r.logged_query) << ',' << r.clicked_doc << ',' << r.logged_rank << ','
        << csv_field(r.top_query);
    for (auto k : ks) {
      auto it = r.utility.find(k);
      out << ',';
      if (it != r.utility.end()) out << exact(it->second);
    }
    out << '\n';
  }
  return out.str();
}

EvalOutput evaluate_policies(std::span<const ScoredContext> contexts, std::span<const Policy> policies,
                             const PropensityModel& true_model, std::span<const std::size_t> ks,
                             std::size_t profile_positions, unsigned threads) {
  if (contexts.empty()) throw DataError("no evaluation contexts (empty test log)");
  if (ks.empty()) throw std::invalid_argument("no k values to evaluate");
  for (auto k : ks) {
    if (k == 0) throw std::invalid_argument("Utility@k needs k >= 1");
  }

  const std::size_t n = contexts.size();
  const std::size_t np = policies.size();
  // [context][policy] -> utility per k, and per-position utilities.
  std::vector<std::vector<std::vector<double>>> at_k(n, std::vector<std::vector<double>>(np));
  std::vector<std::vector<std::vector<double>>> positions(n, std::vector<std::vector<double>>(np));
  std::vector<std::vector<std::string>> tops(n, std::vector<std::string>(np));

  parallel_for(n, threads, [&](std::size_t c) {
    const auto targets = test_targets(contexts[c], true_model);
    for (std::size_t p = 0; p < np; ++p) {
      const auto ranked = rank_with_policy(policies[p], contexts[c], &targets);
      for (auto k : ks) at_k[c][p].push_back(utility_at_k(ranked, targets, k));
      const std::size_t depth = policies[p].top_only() ? 1 : profile_positions;
      for (std::size_t j = 0; j < depth; ++j) {
        positions[c][p].push_back(j < ranked.size() ? target_of(targets, ranked[j]) : 0.0);
      }
      tops[c][p] = ranked.empty() || ranked.front().padding ? std::string() : ranked.front().query;
    }
  });

  EvalOutput out;
  out.report.ks.assign(ks.begin(), ks.end());
  out.report.contexts = n;
  std::vector<double> column(n);
  for (std::size_t p = 0; p < np; ++p) {
    PolicyRow row;
    row.label = policies[p].label;
    row.top_only = policies[p].top_only();
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      if (row.top_only && ks[ki] != 1) continue;
      for (std::size_t c = 0; c < n; ++c) column[c] = at_k[c][p][ki];
      const auto m = mean_se(column);
      row.utility[ks[ki]] = m.mean;
      row.std_error[ks[ki]] = m.se;
    }
    std::vector<std::vector<double>> pos(n);
    for (std::size_t c = 0; c < n; ++c) pos[c] = positions[c][p];
    row.profile = positional_utility_profile(pos, row.top_only ? 1 : profile_positions);
    out.report.rows.push_back(std::move(row));
  }

  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t p = 0; p < np; ++p) {
      ContextRecord r;
      r.context_id = contexts[c].id;
      r.prefix = contexts[c].entry.context.prefix;
      r.logged_query = contexts[c].entry.logged_query;
      r.clicked_doc = contexts[c].entry.clicked_doc;
      r.logged_rank = contexts[c].entry.logged_rank;
      r.policy = policies[p].label;
      r.top_query = tops[c][p];
      for (std::size_t ki = 0; ki < ks.size(); ++ki) {
        if (policies[p].top_only() && ks[ki] != 1) continue;
        r.utility[ks[ki]] = at_k[c][p][ki];
      }
      out.per_context.push_back(std::move(r));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiments

RankerModel train_variant_ranker(const ExperimentSetup& setup, std::span<const ScoredContext> training,
                                 const EstimatorVariant& variant) {
  if (training.empty()) throw DataError("no training contexts");
  const auto samples = make_training_samples(training, setup.true_model, variant, setup.weighting);
  auto model = train_ranker(samples, setup.features.dimension, setup.train);
  model.features = setup.features;
  model.target_variant = variant.name();
  model.weighting = to_string(setup.weighting);
  return model;
}

EvalOutput evaluate_main(const ExperimentSetup& setup, const RankerModel& unbiased,
                         std::span<const ScoredContext> evaluation) {
  const std::vector<Policy> policies{Policy::model_policy("Unbiased", unbiased), Policy::retriever_order(),
                                     Policy::oracle(), Policy::logged(),
                                     Policy::random(setup.random_policy_seed)};
  auto out = evaluate_policies(evaluation, policies, setup.true_model, setup.ks, setup.profile_positions,
                               setup.threads);
  out.report.title = "Core comparison";
  out.report.config_fingerprint = setup.config_fingerprint;
  out.report.seeds = setup.seeds;
  return out;
}

ExperimentResult run_experiment(const ExperimentSetup& setup, std::span<const ScoredContext> training,
                                std::span<const ScoredContext> evaluation) {
  if (evaluation.empty()) throw DataError("no evaluation contexts (empty test log)");
  ExperimentResult result;
  result.model = train_variant_ranker(setup, training, EstimatorVariant::unbiased());
  result.eval = evaluate_main(setup, result.model, evaluation);
  return result;
}

std::vector<EstimatorVariant> default_ablation_variants() {
  return {EstimatorVariant::biased(),          EstimatorVariant::prescient(1u),
          EstimatorVariant::prescient(5u),     EstimatorVariant::prescient(std::nullopt),
          EstimatorVariant::misspecified(0.5), EstimatorVariant::misspecified(2.0)};
}

std::string ablation_label(const EstimatorVariant& variant) {
  std::string name = variant.name();
  if (!name.empty()) name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
  return name;
}

AblationResult run_ablations(const ExperimentSetup& setup, std::span<const ScoredContext> training,
                             std::span<const ScoredContext> evaluation,
                             std::span<const EstimatorVariant> variants) {
  if (evaluation.empty()) throw DataError("no evaluation contexts (empty test log)");
  std::vector<EstimatorVariant> all{EstimatorVariant::unbiased()};
  for (const auto& v : variants) {
    if (std::find(all.begin(), all.end(), v) == all.end()) all.push_back(v);
  }
  std::vector<RankerModel> models(all.size());
  parallel_for(all.size(), setup.threads,
               [&](std::size_t i) { models[i] = train_variant_ranker(setup, training, all[i]); });

  std::vector<Policy> policies;
  for (std::size_t i = 0; i < all.size(); ++i) policies.push_back(Policy::model_policy(ablation_label(all[i]), models[i]));
  auto out = evaluate_policies(evaluation, policies, setup.true_model, setup.ks, setup.profile_positions,
                               setup.threads);

  AblationResult result;
  result.report = std::move(out.report);
  result.report.title = "Estimator ablations";
  result.report.config_fingerprint = setup.config_fingerprint;
  result.report.seeds = setup.seeds;
  for (std::size_t i = 0; i < all.size(); ++i) result.models.emplace(all[i].name(), std::move(models[i]));
  return result;
}

double spearman_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  auto ranks = [n](std::span<const double> v) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = (static_cast<double>(i + j) / 2.0) + 1.0;
      for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double SizeCurve::spearman(std::size_t k) const {
  std::vector<double> x, y;
  for (const auto& p : points) {
    x.push_back(p.fraction);
    y.push_back(p.utility.at(k));
  }
  return spearman_correlation(x, y);
}

std::string SizeCurve::to_csv() const {
  std::ostringstream out;
  out << "fraction,training_contexts,k,utility,std_error\n";
  for (const auto& p : points) {
    for (auto k : ks) {
      out << exact(p.fraction) << ',' << p.training_contexts << ',' << k << ',' << exact(p.utility.at(k)) << ','
          << exact(p.std_error.at(k)) << '\n';
    }
  }
  return out.str();
}

std::string SizeCurve::to_markdown() const {
  std::ostringstream out;
  out << "## Training-size curve\n\n| Fraction | Contexts |";
  for (auto k : ks) out << " Utility@" << k << " |";
  out << "\n|---|---|";
  for (std::size_t i = 0; i < ks.size(); ++i) out << "---|";
  out << '\n';
  for (const auto& p : points) {
    out << "| " << fixed(p.fraction, 2) << " | " << p.training_contexts << " |";
    for (auto k : ks) out << ' ' << fixed(p.utility.at(k)) << " ± " << fixed(p.std_error.at(k)) << " |";
    out << '\n';
  }
  out << "\nSpearman(size, Utility@k):";
  for (auto k : ks) out << " k=" << k << ": " << fixed(spearman(k), 3) << ';';
  out << '\n';
  return out.str();
}

SizeCurve data_size_curve(const ExperimentSetup& setup, std::span<const ScoredContext> training,
                          std::span<const ScoredContext> evaluation, std::span<const double> fractions,
                          std::uint64_t subsample_seed) {
  SizeCurve curve;
  curve.ks = setup.ks;
  for (std::size_t f = 0; f < fractions.size(); ++f) {
    const double fraction = fractions[f];
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("subsample fraction must be in (0, 1]");
    std::vector<ScoredContext> subset;
    if (fraction == 1.0) {
      subset.assign(training.begin(), training.end());
    } else {
      const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(training.size()) + 1e-9));
      std::vector<std::size_t> idx(training.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      Rng rng(derive_seed(subsample_seed, {f}));
      rng.shuffle(std::span<std::size_t>(idx));
      idx.resize(keep);
      std::sort(idx.begin(), idx.end());
      for (auto i : idx) subset.push_back(training[i]);
    }
    if (subset.empty()) {
      throw DataError("subsample fraction " + fixed(fraction, 4) + " leaves no training contexts");
    }
    const auto model = train_variant_ranker(setup, subset, EstimatorVariant::unbiased());
    const std::vector<Policy> policies{Policy::model_policy("Unbiased", model)};
    const auto eval = evaluate_policies(evaluation, policies, setup.true_model, setup.ks, setup.profile_positions,
                                        setup.threads);
    SizeCurvePoint point;
    point.fraction = fraction;
    point.training_contexts = subset.size();
    point.utility = eval.report.rows[0].utility;
    point.std_error = eval.report.rows[0].std_error;
    curve.points.push_back(std::move(point));
  }
  return curve;
}

}  // namespace uqac
