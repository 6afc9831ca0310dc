#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uqac/common.hpp"
#include "uqac/corpus.hpp"
#include "uqac/docrank.hpp"
#include "uqac/rng.hpp"

namespace uqac {

/// Position-based observation model p_k = k^-alpha for k <= cutoff, else 0.
/// Unnormalized across ranks: p_1 = 1.
struct PropensityModel {
  double alpha = 1.0;
  std::uint32_t cutoff = 20;

  void validate() const;
  bool operator==(const PropensityModel&) const = default;
};

double propensity(const PropensityModel& model, Rank rank);

/// What the suggester sees when asked for completions.
struct QueryContext {
  std::string prefix;
  std::map<std::string, std::string> side_features;

  bool operator==(const QueryContext&) const = default;
};

/// One click on a relevant document under the logged query. Entries
/// produced by the same impression share `entry_seed`.
struct LogEntry {
  QueryContext context;
  std::string logged_query;
  DocId clicked_doc = 0;
  std::uint32_t logged_rank = 0;
  std::uint64_t entry_seed = 0;

  bool operator==(const LogEntry&) const = default;
};

/// Independent Bernoulli(p_r) observation draws for ranks 1..cutoff. Always
/// consumes exactly `cutoff` uniforms.
std::vector<bool> observe_positions(const PropensityModel& model, Rng& rng);

/// One search under the item's own query: every observed position that
/// holds a relevant document yields a click entry.
std::vector<LogEntry> simulate_impression(const RankedDocs& ranking, const CorpusItem& item,
                                          const std::string& prefix, const PropensityModel& model,
                                          Rng& rng, std::uint64_t impression_seed = 0);
std::vector<LogEntry> simulate_impression(const DocRanker& ranker, const CorpusItem& item,
                                          const std::string& prefix, const PropensityModel& model,
                                          Rng& rng, std::uint64_t impression_seed = 0);

struct LogGenerationOptions {
  std::size_t passes = 1;
  std::size_t min_prefix_len = 3;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Items x passes impressions; the RNG for (item, pass) is seeded from
/// (seed, item index, pass) so the output does not depend on `threads`.
std::vector<LogEntry> generate_log(const Corpus& corpus, const DocRanker& ranker,
                                   const PropensityModel& model, const LogGenerationOptions& options);

nlohmann::json log_entry_to_json(const LogEntry& entry);
LogEntry log_entry_from_json(const nlohmann::json& j);
void write_log(std::ostream& out, std::span<const LogEntry> log);
std::vector<LogEntry> read_log(std::istream& in);
void save_log(const std::filesystem::path& path, std::span<const LogEntry> log);
std::vector<LogEntry> load_log(const std::filesystem::path& path);

}  // namespace uqac
