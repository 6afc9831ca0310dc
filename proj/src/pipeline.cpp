#include "uqac/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "uqac/common.hpp"
#include "uqac/estimator.hpp"
#include "uqac/parallel.hpp"
#include "uqac/rng.hpp"
#include "uqac/text.hpp"

namespace uqac::pipeline {

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Value formatting and parsing

std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto pos = s.find(sep, start);
    const auto piece = trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (!piece.empty()) out.push_back(piece);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
T parse_integer(const std::string& key, const std::string& text) {
  T value{};
  const auto t = trim(text);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError("invalid integer for '" + key + "': '" + text + "'");
  }
  return value;
}

double parse_real(const std::string& key, const std::string& text) {
  double value = 0.0;
  const auto t = trim(text);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty() || !std::isfinite(value)) {
    throw ConfigError("invalid number for '" + key + "': '" + text + "'");
  }
  return value;
}

template <class T>
std::string join(const std::vector<T>& xs, const char* sep, std::function<std::string(const T&)> f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += sep;
    out += f(xs[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Config schema: one entry per key, in canonical order.

struct Field {
  std::string section;
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
  bool seed = false;
  std::string help;

  std::string name() const { return section + "." + key; }
};

std::vector<Field> schema(RunConfig& c) {
  std::vector<Field> f;
  auto size_field = [&f](std::string sec, std::string key, std::size_t& v, std::string help) {
    const std::string name = sec + "." + key;
    f.push_back({sec, key, [&v] { return std::to_string(v); },
                 [&v, name](const std::string& s) { v = parse_integer<std::size_t>(name, s); }, false, help});
  };
  auto u32_field = [&f](std::string sec, std::string key, std::uint32_t& v, std::string help) {
    const std::string name = sec + "." + key;
    f.push_back({sec, key, [&v] { return std::to_string(v); },
                 [&v, name](const std::string& s) { v = parse_integer<std::uint32_t>(name, s); }, false, help});
  };
  auto seed_field = [&f](std::string sec, std::string key, std::uint64_t& v, std::string help) {
    const std::string name = sec + "." + key;
    f.push_back({sec, key, [&v] { return std::to_string(v); },
                 [&v, name](const std::string& s) { v = parse_integer<std::uint64_t>(name, s); }, true, help});
  };
  auto real_field = [&f](std::string sec, std::string key, double& v, std::string help) {
    const std::string name = sec + "." + key;
    f.push_back({sec, key, [&v] { return fmt_double(v); },
                 [&v, name](const std::string& s) { v = parse_real(name, s); }, false, help});
  };

  f.push_back({"paths", "corpus", [&c] { return c.corpus.string(); },
               [&c](const std::string& s) { c.corpus = trim(s); }, false,
               "input corpus TSV (query<TAB>id,id,...); empty uses the synthetic generator"});
  f.push_back({"paths", "workdir", [&c] { return c.workdir.string(); },
               [&c](const std::string& s) { c.workdir = trim(s); }, false, "artifact directory"});

  size_field("synthetic", "num_queries", c.synthetic.num_queries, "synthetic corpus size");
  size_field("synthetic", "num_docs", c.synthetic.num_docs, "synthetic document count");
  real_field("synthetic", "relevance_density", c.synthetic.relevance_density, "mean relevant docs per query");
  real_field("synthetic", "zipf_exponent", c.synthetic.zipf_exponent, "document popularity exponent");
  seed_field("synthetic", "seed", c.synthetic.seed, "synthetic generator seed");
  size_field("synthetic", "num_topics", c.synthetic.num_topics, "topic count");
  size_field("synthetic", "subtypes_per_topic", c.synthetic.subtypes_per_topic, "subtypes per topic");
  size_field("synthetic", "attributes_per_topic", c.synthetic.attributes_per_topic, "attribute words per topic");
  size_field("synthetic", "noise_vocabulary", c.synthetic.noise_vocabulary, "noise word count");
  real_field("synthetic", "generic_probability", c.synthetic.generic_probability, "chance of a title without attributes");
  real_field("synthetic", "detail_probability", c.synthetic.detail_probability, "chance of a second attribute");
  real_field("synthetic", "noise_probability", c.synthetic.noise_probability, "chance of a trailing noise word");
  real_field("synthetic", "related_affinity", c.synthetic.related_affinity, "weight of related docs sharing an attribute");
  real_field("synthetic", "seed_relevance_probability", c.synthetic.seed_relevance_probability,
             "chance that an item lists its own seed document");

  size_field("corpus", "top_labels", c.top_labels, "keep the most frequent labels");
  f.push_back({"corpus", "split", [&c] {
                 return fmt_double(c.split.retriever) + "," + fmt_double(c.split.ranker) + "," +
                        fmt_double(c.split.test);
               },
               [&c](const std::string& s) {
                 const auto parts = split_list(s, ',');
                 if (parts.size() != 3) throw ConfigError("invalid value for 'corpus.split': need three fractions");
                 c.split = {parse_real("corpus.split", parts[0]), parse_real("corpus.split", parts[1]),
                            parse_real("corpus.split", parts[2])};
               },
               false, "retriever,ranker,test fractions"});
  seed_field("corpus", "split_seed", c.split_seed, "split shuffle seed (also seeds the ranker subsample)");
  size_field("corpus", "min_prefix_len", c.min_prefix_len, "shortest sampled prefix in bytes");
  real_field("corpus", "ranker_subsample", c.ranker_subsample, "fraction of the ranker partition to log");

  size_field("docrank", "top_k", c.top_k, "documents kept per ranking");

  real_field("clicks", "alpha", c.true_model.alpha, "true observation exponent");
  u32_field("clicks", "cutoff", c.true_model.cutoff, "last observable rank");
  size_field("clicks", "retriever_passes", c.retriever_passes, "impressions per retriever item");
  size_field("clicks", "ranker_passes", c.ranker_passes, "impressions per ranker item");
  size_field("clicks", "test_passes", c.test_passes, "impressions per test item");
  seed_field("clicks", "seed", c.log_seed, "click simulation seed");

  size_field("retriever", "m_candidates", c.m_candidates, "queries kept per trie node");
  real_field("retriever", "tau", c.tau, "minimum aggregate utility");

  u32_field("features", "dimension", c.features.dimension, "hashed feature dimension (power of two)");
  seed_field("features", "seed", c.features.seed, "feature hashing seed");

  size_field("training", "epochs", c.train.epochs, "SGD epochs");
  real_field("training", "learning_rate", c.train.learning_rate, "initial SGD step");
  real_field("training", "l2", c.train.l2, "L2 penalty");
  f.push_back({"training", "weighting", [&c] { return to_string(c.weighting); },
               [&c](const std::string& s) {
                 try {
                   c.weighting = parse_weighting(trim(s));
                 } catch (const std::invalid_argument& e) {
                   throw ConfigError("invalid value for 'training.weighting': " + std::string(e.what()));
                 }
               },
               false, "pair weights: magnitude or uniform"});
  seed_field("training", "seed", c.train.seed, "SGD shuffle seed");

  size_field("eval", "pad_k", c.pad_k, "candidate list length K");
  f.push_back({"eval", "ks",
               [&c] { return join<std::size_t>(c.ks, ",", [](const std::size_t& k) { return std::to_string(k); }); },
               [&c](const std::string& s) {
                 c.ks.clear();
                 for (const auto& p : split_list(s, ',')) c.ks.push_back(parse_integer<std::size_t>("eval.ks", p));
               },
               false, "Utility@k cut-offs"});
  f.push_back({"eval", "variants",
               [&c] { return join<std::string>(c.variants, " ", [](const std::string& v) { return v; }); },
               [&c](const std::string& s) {
                 c.variants.clear();
                 for (const auto& p : split_list(s, ' ')) {
                   try {
                     c.variants.push_back(EstimatorVariant::parse(p).name());
                   } catch (const std::exception& e) {
                     throw ConfigError("invalid value for 'eval.variants': " + std::string(e.what()));
                   }
                 }
               },
               false, "space-separated ablation estimators"});
  f.push_back({"eval", "size_fractions",
               [&c] { return join<double>(c.size_fractions, ",", [](const double& v) { return fmt_double(v); }); },
               [&c](const std::string& s) {
                 c.size_fractions.clear();
                 for (const auto& p : split_list(s, ',')) c.size_fractions.push_back(parse_real("eval.size_fractions", p));
               },
               false, "training-log fractions for the size curve"});
  seed_field("eval", "random_seed", c.random_seed, "Random policy seed");
  seed_field("eval", "subsample_seed", c.subsample_seed, "size-curve subsample seed");

  f.push_back({"run", "threads", [&c] { return std::to_string(c.threads); },
               [&c](const std::string& s) { c.threads = parse_integer<unsigned>("run.threads", s); }, false,
               "worker threads (outputs do not depend on it)"});
  return f;
}

std::string render(RunConfig c, bool with_help) {
  std::ostringstream out;
  std::string section;
  for (const auto& field : schema(c)) {
    if (field.section != section) {
      if (!section.empty()) out << '\n';
      section = field.section;
      out << '[' << section << "]\n";
    }
    if (with_help) out << "; " << field.help << '\n';
    out << field.key << " = " << field.get() << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Files

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError(path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError(path.string());
  return nlohmann::json::parse(in);
}

void require(const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifactError(path.string());
}

const std::map<std::string, std::string>& artifact_stages() {
  static const std::map<std::string, std::string> stages{
      {artifact::kSynthetic, "gen-synth"},
      {artifact::kConfig, "config"},
      {artifact::kCorpus, "convert"},
      {artifact::kIdMap, "convert"},
      {artifact::kRetrieverSplit, "convert"},
      {artifact::kRankerSplit, "convert"},
      {artifact::kTestSplit, "convert"},
      {artifact::kDocRanker, "train-docranker"},
      {artifact::kRetrieverLog, "simulate-log"},
      {artifact::kRankerLog, "simulate-log"},
      {artifact::kTestLog, "simulate-log"},
      {artifact::kRetrieverUtilities, "estimate"},
      {artifact::kVarianceReport, "estimate"},
      {artifact::kRetriever, "train-retriever"},
      {artifact::kRanker, "train-ranker"},
      {artifact::kReportMarkdown, "evaluate"},
      {artifact::kReportCsv, "evaluate"},
      {artifact::kReportJson, "evaluate"},
      {artifact::kProfileCsv, "evaluate"},
      {artifact::kContextsCsv, "evaluate"},
      {artifact::kAblationMarkdown, "ablate"},
      {artifact::kAblationCsv, "ablate"},
      {artifact::kAblationJson, "ablate"},
      {artifact::kAblationProfileCsv, "ablate"},
      {artifact::kSizeCurveCsv, "size-curve"},
      {artifact::kSizeCurveMarkdown, "size-curve"},
  };
  return stages;
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

void RunConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError("invalid value for '" + key + "': " + why);
  };
  if (top_labels == 0) fail("corpus.top_labels", "must be positive");
  for (double f : {split.retriever, split.ranker, split.test}) {
    if (!(f >= 0.0 && f <= 1.0)) fail("corpus.split", "fractions must lie in [0, 1]");
  }
  if (std::abs(split.retriever + split.ranker + split.test - 1.0) > 1e-9) fail("corpus.split", "fractions must sum to 1");
  if (!(ranker_subsample > 0.0 && ranker_subsample <= 1.0)) fail("corpus.ranker_subsample", "must lie in (0, 1]");
  if (top_k == 0) fail("docrank.top_k", "must be positive");
  if (!(true_model.alpha > 0.0)) fail("clicks.alpha", "must be positive");
  if (true_model.cutoff == 0) fail("clicks.cutoff", "must be positive");
  if (retriever_passes == 0) fail("clicks.retriever_passes", "must be positive");
  if (ranker_passes == 0) fail("clicks.ranker_passes", "must be positive");
  if (test_passes == 0) fail("clicks.test_passes", "must be positive");
  if (m_candidates == 0) fail("retriever.m_candidates", "must be positive");
  if (!(tau >= 0.0)) fail("retriever.tau", "must be nonnegative");
  try {
    features.validate();
  } catch (const std::invalid_argument& e) {
    fail("features.dimension", e.what());
  }
  if (!(train.learning_rate > 0.0)) fail("training.learning_rate", "must be positive");
  if (!(train.l2 >= 0.0)) fail("training.l2", "must be nonnegative");
  if (pad_k == 0) fail("eval.pad_k", "must be positive");
  if (ks.empty()) fail("eval.ks", "needs at least one k");
  for (auto k : ks) {
    if (k == 0) fail("eval.ks", "k must be >= 1");
  }
  for (double f : size_fractions) {
    if (!(f > 0.0 && f <= 1.0)) fail("eval.size_fractions", "fractions must lie in (0, 1]");
  }
  if (corpus.empty() && (synthetic.num_queries == 0 || synthetic.num_docs == 0)) {
    fail("synthetic.num_queries", "synthetic corpus must be nonempty");
  }
}

std::string RunConfig::to_text() const { return render(*this, false); }

std::string RunConfig::fingerprint() const {
  RunConfig blank = *this;
  blank.workdir.clear();
  blank.threads = 0;
  return sha256_hex(blank.to_text());
}

std::map<std::string, std::uint64_t> RunConfig::seeds() const {
  std::map<std::string, std::uint64_t> out;
  RunConfig copy = *this;
  for (const auto& f : schema(copy)) {
    if (f.seed) out[f.name()] = parse_integer<std::uint64_t>(f.name(), f.get());
  }
  return out;
}

RunConfig RunConfig::reseeded(std::uint64_t master) const {
  RunConfig copy = *this;
  std::uint64_t i = 0;
  for (auto& f : schema(copy)) {
    if (f.seed) f.set(std::to_string(derive_seed(master, {i++})));
  }
  return copy;
}

RunConfig default_config() { return RunConfig{}; }

RunConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("malformed config at line " + std::to_string(e.line()) + ": " + e.message());
  }

  RunConfig config;
  auto fields = schema(config);
  std::set<std::string> known;
  for (const auto& f : fields) known.insert(f.name());
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      if (!known.count(section + "." + key)) throw ConfigError("unknown config key '" + section + "." + key + "'");
    }
  }
  for (auto& f : fields) {
    auto value = tree.get_optional<std::string>(pt::ptree::path_type(f.name(), '.'));
    if (value) {
      f.set(*value);
    } else if (f.seed) {
      throw ConfigError("missing config key '" + f.name() + "' (seeds must be explicit)");
    }
  }
  config.validate();
  return config;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// In-memory pipeline

Corpus source_corpus(const RunConfig& config) {
  if (config.corpus.empty()) return generate_synthetic_corpus(config.synthetic);
  return load_corpus(config.corpus);
}

namespace {

PreparedData prepare_from_source(const RunConfig& config, const Corpus& source) {
  PreparedData d;
  d.corpus = filter_top_labels(source, config.top_labels);
  if (d.corpus.empty()) throw DataError("no items left after label filtering");
  d.split = split_corpus(d.corpus, config.split, config.split_seed);
  d.docranker = DocRanker::train(d.corpus, config.top_k);
  return d;
}

Corpus ranker_partition(const RunConfig& config, const Corpus& ranker_split) {
  return subsample_corpus(ranker_split, config.ranker_subsample, derive_seed(config.split_seed, {1}));
}

LogGenerationOptions log_options(const RunConfig& config, std::size_t passes, std::uint64_t stream) {
  LogGenerationOptions o;
  o.passes = passes;
  o.min_prefix_len = config.min_prefix_len;
  o.seed = derive_seed(config.log_seed, {stream});
  o.threads = config.threads;
  return o;
}

}  // namespace

PreparedData prepare_corpus(const RunConfig& config) { return prepare_from_source(config, source_corpus(config)); }

Logs simulate_logs(const RunConfig& config, const CorpusSplit& split, const DocRanker& docranker) {
  Logs logs;
  if (split.retriever_train.empty() || split.ranker_train.empty() || split.test.empty()) {
    throw DataError("every split partition must be nonempty");
  }
  logs.retriever = generate_log(split.retriever_train, docranker, config.true_model,
                                log_options(config, config.retriever_passes, 0));
  logs.ranker = generate_log(ranker_partition(config, split.ranker_train), docranker, config.true_model,
                             log_options(config, config.ranker_passes, 1));
  logs.test = generate_log(split.test, docranker, config.true_model, log_options(config, config.test_passes, 2));
  return logs;
}

std::vector<std::vector<std::string>> retriever_candidates(const Corpus& retriever_split,
                                                           std::span<const LogEntry> retriever_log) {
  std::vector<std::string> titles;
  for (const auto& item : retriever_split.items) titles.push_back(item.query_text);
  const QueryUniverse universe(std::move(titles));
  std::vector<std::vector<std::string>> out(retriever_log.size());
  for (std::size_t i = 0; i < retriever_log.size(); ++i) {
    const auto span = universe.extending(retriever_log[i].context.prefix);
    out[i].assign(span.begin(), span.end());
  }
  return out;
}

std::vector<RetrieverTrainingPair> estimate_retriever_pairs(const RunConfig& config,
                                                            const Corpus& retriever_split,
                                                            std::span<const LogEntry> retriever_log,
                                                            const RankSource& ranks) {
  const auto candidates = retriever_candidates(retriever_split, retriever_log);
  std::vector<std::vector<RetrieverTrainingPair>> per_entry(retriever_log.size());
  parallel_for(retriever_log.size(), config.threads, [&](std::size_t i) {
    const auto& entry = retriever_log[i];
    for (const auto& q : candidates[i]) {
      const double u = utility_value(ranks.rank_of(q, entry.clicked_doc), entry.logged_rank, config.true_model,
                                     EstimatorVariant::unbiased());
      if (u > 0.0) per_entry[i].push_back({entry.context.prefix, q, u});
    }
  });
  std::vector<RetrieverTrainingPair> pairs;
  for (auto& v : per_entry) {
    std::move(v.begin(), v.end(), std::back_inserter(pairs));
  }
  return pairs;
}

ExperimentSetup experiment_setup(const RunConfig& config) {
  ExperimentSetup s;
  s.true_model = config.true_model;
  s.ks = config.ks;
  s.weighting = config.weighting;
  s.train = config.train;
  s.features = config.features;
  s.random_policy_seed = config.random_seed;
  s.config_fingerprint = config.fingerprint();
  for (const auto& [name, seed] : config.seeds()) s.seeds.push_back(seed);
  s.threads = config.threads;
  return s;
}

ContextBuildOptions context_options(const RunConfig& config) {
  ContextBuildOptions o;
  o.pad_k = config.pad_k;
  o.features = config.features;
  o.threads = config.threads;
  return o;
}

Workbench build_workbench(const RunConfig& config) {
  config.validate();
  Workbench w;
  w.data = prepare_corpus(config);
  w.logs = simulate_logs(config, w.data.split, w.data.docranker);
  const RankCache ranks(w.data.docranker);
  const auto pairs = estimate_retriever_pairs(config, w.data.split.retriever_train, w.logs.retriever, ranks);
  w.retriever = TrieRetriever::train(pairs, {config.tau, config.m_candidates});
  w.training = build_contexts(w.logs.ranker, w.retriever, ranks, config.true_model, context_options(config));
  w.evaluation = build_contexts(w.logs.test, w.retriever, ranks, config.true_model, context_options(config));
  return w;
}

// ---------------------------------------------------------------------------
// Manifest

nlohmann::json emit_manifest(const fs::path& workdir) {
  nlohmann::json manifest;
  manifest["format"] = "uqac.manifest";
  manifest["version"] = 1;
  manifest["config_fingerprint"] = nullptr;
  manifest["seeds"] = nlohmann::json::object();
  const fs::path config_path = workdir / artifact::kConfig;
  if (fs::exists(config_path)) {
    const auto config = load_config(config_path);
    manifest["config_fingerprint"] = config.fingerprint();
    manifest["seeds"] = config.seeds();
  }
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [name, stage] : artifact_stages()) {
    const fs::path p = workdir / name;
    if (!fs::is_regular_file(p)) continue;
    list.push_back({{"path", name}, {"stage", stage}, {"bytes", fs::file_size(p)}, {"sha256", sha256_hex(read_text(p))}});
  }
  manifest["artifacts"] = std::move(list);
  if (fs::is_directory(workdir)) write_text(workdir / artifact::kManifest, manifest.dump(2) + "\n");
  return manifest;
}

// ---------------------------------------------------------------------------
// CLI stages

namespace {

struct Stage {
  const RunConfig& config;
  fs::path dir;

  fs::path at(const char* name) const { return dir / name; }

  // Warns when an input differs from what the manifest recorded.
  void check_inputs(std::initializer_list<const char*> names) const {
    for (const char* n : names) require(at(n));
    const fs::path mpath = at(artifact::kManifest);
    if (!fs::exists(mpath)) return;
    nlohmann::json manifest;
    try {
      manifest = read_json(mpath);
    } catch (const nlohmann::json::exception&) {
      std::cerr << "uqac: warning: unreadable manifest " << mpath.string() << '\n';
      return;
    }
    for (const auto& rec : manifest.value("artifacts", nlohmann::json::array())) {
      for (const char* n : names) {
        if (rec.value("path", "") == n && rec.value("sha256", "") != sha256_hex(read_text(at(n)))) {
          std::cerr << "uqac: warning: stale artifact " << n << " (hash differs from manifest)\n";
        }
      }
    }
  }

  Corpus split_part(const char* name) const { return load_corpus(at(name)); }
};

void stage_gen_synth(const Stage& s) {
  save_corpus(s.at(artifact::kSynthetic), generate_synthetic_corpus(s.config.synthetic));
}

void stage_convert(const Stage& s) {
  Corpus source;
  if (!s.config.corpus.empty()) {
    source = load_corpus(s.config.corpus);
  } else if (fs::exists(s.at(artifact::kSynthetic))) {
    source = load_corpus(s.at(artifact::kSynthetic));
  } else {
    source = generate_synthetic_corpus(s.config.synthetic);
  }
  const Corpus filtered = filter_top_labels(source, s.config.top_labels);
  if (filtered.empty()) throw DataError("no items left after label filtering");
  const auto split = split_corpus(filtered, s.config.split, s.config.split_seed);
  save_corpus(s.at(artifact::kCorpus), filtered);
  write_text(s.at(artifact::kIdMap), nlohmann::json{{"source_ids", filtered.source_ids}}.dump() + "\n");
  save_corpus(s.at(artifact::kRetrieverSplit), split.retriever_train);
  save_corpus(s.at(artifact::kRankerSplit), split.ranker_train);
  save_corpus(s.at(artifact::kTestSplit), split.test);
}

void stage_train_docranker(const Stage& s) {
  s.check_inputs({artifact::kCorpus});
  DocRanker::train(load_corpus(s.at(artifact::kCorpus)), s.config.top_k).save(s.at(artifact::kDocRanker));
}

void stage_simulate_log(const Stage& s) {
  s.check_inputs({artifact::kRetrieverSplit, artifact::kRankerSplit, artifact::kTestSplit, artifact::kDocRanker});
  CorpusSplit split;
  split.retriever_train = s.split_part(artifact::kRetrieverSplit);
  split.ranker_train = s.split_part(artifact::kRankerSplit);
  split.test = s.split_part(artifact::kTestSplit);
  const auto ranker = DocRanker::load(s.at(artifact::kDocRanker));
  const auto logs = simulate_logs(s.config, split, ranker);
  save_log(s.at(artifact::kRetrieverLog), logs.retriever);
  save_log(s.at(artifact::kRankerLog), logs.ranker);
  save_log(s.at(artifact::kTestLog), logs.test);
}

void stage_estimate(const Stage& s) {
  s.check_inputs({artifact::kRetrieverLog, artifact::kRetrieverSplit, artifact::kDocRanker});
  const auto log = load_log(s.at(artifact::kRetrieverLog));
  const auto split = s.split_part(artifact::kRetrieverSplit);
  const auto ranker = DocRanker::load(s.at(artifact::kDocRanker));
  const RankCache ranks(ranker);
  const auto pairs = estimate_retriever_pairs(s.config, split, log, ranks);
  std::ostringstream out;
  for (const auto& p : pairs) {
    out << nlohmann::json{{"prefix", p.prefix}, {"query", p.query}, {"utility", p.utility}}.dump() << '\n';
  }
  write_text(s.at(artifact::kRetrieverUtilities), out.str());
  const auto candidates = retriever_candidates(split, log);
  write_text(s.at(artifact::kVarianceReport),
             variance_diagnostics(log, candidates, ranks, s.config.true_model).to_json().dump(2) + "\n");
}

std::vector<RetrieverTrainingPair> load_pairs(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError(path.string());
  std::vector<RetrieverTrainingPair> pairs;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      pairs.push_back({j.at("prefix").get<std::string>(), j.at("query").get<std::string>(),
                       j.at("utility").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return pairs;
}

void stage_train_retriever(const Stage& s) {
  s.check_inputs({artifact::kRetrieverUtilities});
  TrieRetriever::train(load_pairs(s.at(artifact::kRetrieverUtilities)), {s.config.tau, s.config.m_candidates})
      .save(s.at(artifact::kRetriever));
}

std::vector<ScoredContext> stage_contexts(const Stage& s, const char* log_name) {
  const auto log = load_log(s.at(log_name));
  const auto retriever = TrieRetriever::load(s.at(artifact::kRetriever));
  const auto ranker = DocRanker::load(s.at(artifact::kDocRanker));
  const RankCache ranks(ranker);
  return build_contexts(log, retriever, ranks, s.config.true_model, context_options(s.config));
}

void stage_train_ranker(const Stage& s) {
  s.check_inputs({artifact::kRankerLog, artifact::kRetriever, artifact::kDocRanker});
  const auto training = stage_contexts(s, artifact::kRankerLog);
  train_variant_ranker(experiment_setup(s.config), training, EstimatorVariant::unbiased()).save(s.at(artifact::kRanker));
}

void stage_evaluate(const Stage& s) {
  s.check_inputs({artifact::kRanker, artifact::kTestLog, artifact::kRetriever, artifact::kDocRanker});
  const auto model = RankerModel::load(s.at(artifact::kRanker));
  if (model.features.dimension != s.config.features.dimension || model.features.seed != s.config.features.seed) {
    throw ConfigError("ranker model features do not match the config");
  }
  const auto evaluation = stage_contexts(s, artifact::kTestLog);
  const auto setup = experiment_setup(s.config);
  const auto out = evaluate_main(setup, model, evaluation);
  write_text(s.at(artifact::kReportMarkdown), out.report.to_markdown());
  write_text(s.at(artifact::kReportCsv), out.report.to_csv());
  write_text(s.at(artifact::kReportJson), out.report.to_json().dump(2) + "\n");
  write_text(s.at(artifact::kProfileCsv), out.report.profile_csv());
  write_text(s.at(artifact::kContextsCsv), context_records_csv(out.per_context, setup.ks));
}

std::vector<EstimatorVariant> config_variants(const RunConfig& config) {
  if (config.variants.empty()) return default_ablation_variants();
  std::vector<EstimatorVariant> out;
  for (const auto& v : config.variants) out.push_back(EstimatorVariant::parse(v));
  return out;
}

void stage_ablate(const Stage& s) {
  s.check_inputs({artifact::kRankerLog, artifact::kTestLog, artifact::kRetriever, artifact::kDocRanker});
  const auto training = stage_contexts(s, artifact::kRankerLog);
  const auto evaluation = stage_contexts(s, artifact::kTestLog);
  const auto variants = config_variants(s.config);
  const auto result = run_ablations(experiment_setup(s.config), training, evaluation, variants);
  write_text(s.at(artifact::kAblationMarkdown), result.report.to_markdown());
  write_text(s.at(artifact::kAblationCsv), result.report.to_csv());
  write_text(s.at(artifact::kAblationJson), result.report.to_json().dump(2) + "\n");
  write_text(s.at(artifact::kAblationProfileCsv), result.report.profile_csv());
}

void stage_size_curve(const Stage& s) {
  s.check_inputs({artifact::kRankerLog, artifact::kTestLog, artifact::kRetriever, artifact::kDocRanker});
  const auto training = stage_contexts(s, artifact::kRankerLog);
  const auto evaluation = stage_contexts(s, artifact::kTestLog);
  const auto curve = data_size_curve(experiment_setup(s.config), training, evaluation, s.config.size_fractions,
                                     s.config.subsample_seed);
  write_text(s.at(artifact::kSizeCurveCsv), curve.to_csv());
  write_text(s.at(artifact::kSizeCurveMarkdown), curve.to_markdown());
}

using StageFn = void (*)(const Stage&);

const std::vector<std::pair<std::string, StageFn>>& stage_table() {
  static const std::vector<std::pair<std::string, StageFn>> table{
      {"gen-synth", stage_gen_synth},         {"convert", stage_convert},
      {"train-docranker", stage_train_docranker}, {"simulate-log", stage_simulate_log},
      {"estimate", stage_estimate},           {"train-retriever", stage_train_retriever},
      {"train-ranker", stage_train_ranker},   {"evaluate", stage_evaluate},
      {"ablate", stage_ablate},               {"size-curve", stage_size_curve},
  };
  return table;
}

int report_error(int code, const std::string& kind, const std::string& message) {
  std::string line = message;
  std::replace(line.begin(), line.end(), '\n', ' ');
  std::cerr << "uqac: error[" << kind << "]: " << line << '\n';
  return code;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Utility-aware query autocompletion workbench"};
  app.require_subcommand(0, 1);
  std::string config_path;
  std::string workdir;
  unsigned threads = 0;
  bool print_config = false;
  app.add_option("-c,--config", config_path, "run config file (INI sections)");
  app.add_option("-w,--workdir", workdir, "artifact directory (overrides config and UQAC_WORKDIR)");
  app.add_option("-t,--threads", threads, "worker threads (overrides config and UQAC_THREADS)");
  app.add_flag("--print-config", print_config, "print the effective config with documented defaults and exit");

  std::vector<std::pair<std::string, CLI::App*>> commands;
  const std::map<std::string, std::string> help{
      {"gen-synth", "write the synthetic corpus TSV"},
      {"convert", "filter labels, remap ids and split the corpus"},
      {"train-docranker", "fit the document ranker"},
      {"simulate-log", "simulate click logs for all three splits"},
      {"estimate", "estimate retriever utilities and variance diagnostics"},
      {"train-retriever", "build the utility-aware trie retriever"},
      {"train-ranker", "train the unbiased pairwise ranker"},
      {"evaluate", "evaluate all policies on the test log"},
      {"ablate", "train and evaluate the estimator variants"},
      {"size-curve", "evaluate rankers trained on log subsamples"}};
  for (const auto& [name, fn] : stage_table()) {
    auto it = help.find(name);
    commands.push_back({name, app.add_subcommand(name, it == help.end() ? "" : it->second)});
  }
  commands.push_back({"full-run", app.add_subcommand("full-run", "run every stage in order")});

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error(kExitConfig, "config", e.what());
  }

  try {
    RunConfig config = config_path.empty() ? default_config() : load_config(config_path);
    if (const char* env = std::getenv("UQAC_WORKDIR"); env && *env) config.workdir = env;
    if (const char* env = std::getenv("UQAC_THREADS"); env && *env) {
      config.threads = parse_integer<unsigned>("UQAC_THREADS", env);
    }
    if (!workdir.empty()) config.workdir = workdir;
    if (threads > 0) config.threads = threads;
    config.validate();

    if (print_config) {
      std::cout << render(config, true);
      return kExitOk;
    }

    std::string chosen;
    for (const auto& [name, sub] : commands) {
      if (sub->parsed()) chosen = name;
    }
    if (chosen.empty()) return report_error(kExitConfig, "config", "no subcommand given (see --help)");

    fs::create_directories(config.workdir);
    RunConfig snapshot = config;
    snapshot.workdir.clear();
    snapshot.threads = 1;
    write_text(config.workdir / artifact::kConfig, snapshot.to_text());

    const Stage stage{config, config.workdir};
    for (const auto& [name, fn] : stage_table()) {
      if (chosen == name || (chosen == "full-run" && name != "gen-synth")) {
        fn(stage);
        emit_manifest(config.workdir);
      }
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    return report_error(kExitConfig, "config", e.what());
  } catch (const MissingArtifactError& e) {
    return report_error(kExitMissingArtifact, "missing-artifact", e.what());
  } catch (const std::exception& e) {
    return report_error(kExitRuntime, "runtime", e.what());
  }
}

}  // namespace uqac::pipeline
