#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uqac/clicksim.hpp"
#include "uqac/corpus.hpp"
#include "uqac/docrank.hpp"
#include "uqac/eval.hpp"
#include "uqac/ltr.hpp"
#include "uqac/retriever.hpp"

namespace uqac::pipeline {

/// Every knob of a run. Serialized as an INI-style text file with sections.
struct RunConfig {
  // [paths]
  std::filesystem::path corpus;  // empty: use the synthetic generator
  std::filesystem::path workdir = "uqac-work";

  // [synthetic]
  SyntheticCorpusConfig synthetic;

  // [corpus]
  std::size_t top_labels = 50000;
  SplitFractions split;
  std::uint64_t split_seed = 1;
  std::size_t min_prefix_len = 3;
  double ranker_subsample = 1.0;

  // [docrank]
  std::size_t top_k = 100;

  // [clicks]
  PropensityModel true_model;
  std::size_t retriever_passes = 15;
  std::size_t ranker_passes = 1;
  std::size_t test_passes = 1;
  std::uint64_t log_seed = 2;

  // [retriever]
  std::size_t m_candidates = 20;
  double tau = 0.1;

  // [features]
  FeatureOptions features;

  // [training]
  TrainOptions train;
  PairWeighting weighting = PairWeighting::kMagnitude;

  // [eval]
  std::size_t pad_k = 10;
  std::vector<std::size_t> ks{1, 5, 10};
  std::vector<std::string> variants;  // ablation variant names
  std::vector<double> size_fractions{0.01, 0.1, 0.5, 1.0};
  std::uint64_t random_seed = 3;
  std::uint64_t subsample_seed = 4;

  unsigned threads = 1;

  void validate() const;
  /// Canonical text; parse(to_text()) round-trips.
  std::string to_text() const;
  /// sha256 of the canonical text with the workdir and thread count blanked.
  std::string fingerprint() const;
  std::map<std::string, std::uint64_t> seeds() const;
  /// Copy with every seed replaced by a value derived from `master`.
  RunConfig reseeded(std::uint64_t master) const;
};

RunConfig default_config();
/// Keys not present keep their defaults, except seeds, which must be given
/// explicitly. Unknown keys and bad values raise ConfigError naming the key.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Artifact file names inside the workdir.
namespace artifact {
inline constexpr const char* kSynthetic = "synthetic_corpus.tsv";
inline constexpr const char* kConfig = "run_config.cfg";
inline constexpr const char* kCorpus = "corpus.tsv";
inline constexpr const char* kIdMap = "doc_id_map.json";
inline constexpr const char* kRetrieverSplit = "split_retriever.tsv";
inline constexpr const char* kRankerSplit = "split_ranker.tsv";
inline constexpr const char* kTestSplit = "split_test.tsv";
inline constexpr const char* kDocRanker = "docranker.json";
inline constexpr const char* kRetrieverLog = "log_retriever.jsonl";
inline constexpr const char* kRankerLog = "log_ranker.jsonl";
inline constexpr const char* kTestLog = "log_test.jsonl";
inline constexpr const char* kRetrieverUtilities = "utilities_retriever.jsonl";
inline constexpr const char* kVarianceReport = "variance_report.json";
inline constexpr const char* kRetriever = "retriever.json";
inline constexpr const char* kRanker = "ranker_unbiased.json";
inline constexpr const char* kReportMarkdown = "report.md";
inline constexpr const char* kReportCsv = "report.csv";
inline constexpr const char* kReportJson = "report.json";
inline constexpr const char* kProfileCsv = "profile.csv";
inline constexpr const char* kContextsCsv = "contexts.csv";
inline constexpr const char* kAblationMarkdown = "ablation.md";
inline constexpr const char* kAblationCsv = "ablation.csv";
inline constexpr const char* kAblationJson = "ablation.json";
inline constexpr const char* kAblationProfileCsv = "ablation_profile.csv";
inline constexpr const char* kSizeCurveCsv = "size_curve.csv";
inline constexpr const char* kSizeCurveMarkdown = "size_curve.md";
inline constexpr const char* kManifest = "manifest.json";
}  // namespace artifact

// ---------------------------------------------------------------------------
// In-memory pipeline, shared by the CLI stages and the test suites.

struct PreparedData {
  Corpus corpus;  // filtered
  CorpusSplit split;
  DocRanker docranker;
};

PreparedData prepare_corpus(const RunConfig& config);
Corpus source_corpus(const RunConfig& config);

struct Logs {
  std::vector<LogEntry> retriever;
  std::vector<LogEntry> ranker;
  std::vector<LogEntry> test;
};

Logs simulate_logs(const RunConfig& config, const CorpusSplit& split, const DocRanker& docranker);

/// Unbiased utilities of every retriever-partition query that extends each
/// logged prefix; only positive values are kept.
std::vector<RetrieverTrainingPair> estimate_retriever_pairs(const RunConfig& config,
                                                            const Corpus& retriever_split,
                                                            std::span<const LogEntry> retriever_log,
                                                            const RankSource& ranks);

/// Candidate queries scored for each retriever-log entry (for the variance
/// diagnostics).
std::vector<std::vector<std::string>> retriever_candidates(const Corpus& retriever_split,
                                                           std::span<const LogEntry> retriever_log);

ExperimentSetup experiment_setup(const RunConfig& config);
ContextBuildOptions context_options(const RunConfig& config);

/// Everything needed to train and evaluate rankers.
struct Workbench {
  PreparedData data;
  Logs logs;
  TrieRetriever retriever;
  std::vector<ScoredContext> training;
  std::vector<ScoredContext> evaluation;
};

Workbench build_workbench(const RunConfig& config);

// ---------------------------------------------------------------------------
// Manifest

struct ArtifactRecord {
  std::string path;  // relative to the workdir
  std::string sha256;
  std::uintmax_t bytes = 0;
  std::string stage;
};

/// Lists every artifact recorded for the workdir. A workdir without a
/// manifest yields an empty list.
nlohmann::json emit_manifest(const std::filesystem::path& workdir);

// ---------------------------------------------------------------------------
// CLI

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitMissingArtifact = 3;
inline constexpr int kExitRuntime = 4;

int run_cli(int argc, char** argv);

}  // namespace uqac::pipeline
