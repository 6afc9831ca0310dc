#include "uqac/clicksim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "uqac/parallel.hpp"

namespace uqac {

void PropensityModel::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be positive");
  if (cutoff == 0) throw std::invalid_argument("cutoff must be positive");
}

double propensity(const PropensityModel& model, Rank rank) {
  if (!rank.is_finite() || rank.position() > model.cutoff) return 0.0;
  if (rank.position() == 1) return 1.0;
  return std::pow(static_cast<double>(rank.position()), -model.alpha);
}

std::vector<bool> observe_positions(const PropensityModel& model, Rng& rng) {
  std::vector<bool> observed(model.cutoff);
  for (std::uint32_t r = 1; r <= model.cutoff; ++r) {
    observed[r - 1] = rng.uniform() < propensity(model, Rank(r));
  }
  return observed;
}

std::vector<LogEntry> simulate_impression(const RankedDocs& ranking, const CorpusItem& item,
                                          const std::string& prefix, const PropensityModel& model,
                                          Rng& rng, std::uint64_t impression_seed) {
  const auto observed = observe_positions(model, rng);
  std::vector<LogEntry> entries;
  const std::size_t depth = std::min<std::size_t>(ranking.entries.size(), model.cutoff);
  for (std::size_t i = 0; i < depth; ++i) {
    if (!observed[i]) continue;
    const DocId doc = ranking.entries[i].doc;
    if (!std::binary_search(item.relevant_docs.begin(), item.relevant_docs.end(), doc)) continue;
    LogEntry e;
    e.context.prefix = prefix;
    e.logged_query = item.query_text;
    e.clicked_doc = doc;
    e.logged_rank = static_cast<std::uint32_t>(i + 1);
    e.entry_seed = impression_seed;
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<LogEntry> simulate_impression(const DocRanker& ranker, const CorpusItem& item,
                                          const std::string& prefix, const PropensityModel& model,
                                          Rng& rng, std::uint64_t impression_seed) {
  return simulate_impression(ranker.rank(item.query_text), item, prefix, model, rng, impression_seed);
}

std::vector<LogEntry> generate_log(const Corpus& corpus, const DocRanker& ranker,
                                   const PropensityModel& model, const LogGenerationOptions& options) {
  model.validate();
  if (corpus.empty()) throw std::invalid_argument("cannot simulate a log over an empty corpus");
  if (options.passes == 0) throw std::invalid_argument("passes must be positive");

  std::vector<std::vector<LogEntry>> per_item(corpus.items.size());
  parallel_for(corpus.items.size(), options.threads, [&](std::size_t i) {
    const auto& item = corpus.items[i];
    const RankedDocs ranking = ranker.rank(item.query_text);
    for (std::size_t pass = 0; pass < options.passes; ++pass) {
      const std::uint64_t seed = derive_seed(options.seed, {i, pass});
      Rng rng(seed);
      auto prefix = sample_prefix(item.query_text, options.min_prefix_len, rng);
      if (!prefix) continue;
      auto entries = simulate_impression(ranking, item, *prefix, model, rng, seed);
      per_item[i].insert(per_item[i].end(), std::make_move_iterator(entries.begin()),
                         std::make_move_iterator(entries.end()));
    }
  });

  std::vector<LogEntry> log;
  for (auto& entries : per_item) {
    log.insert(log.end(), std::make_move_iterator(entries.begin()), std::make_move_iterator(entries.end()));
  }
  return log;
}

nlohmann::json log_entry_to_json(const LogEntry& e) {
  nlohmann::json j{{"prefix", e.context.prefix},
                   {"logged_query", e.logged_query},
                   {"clicked_doc", e.clicked_doc},
                   {"logged_rank", e.logged_rank},
                   {"entry_seed", e.entry_seed}};
  if (!e.context.side_features.empty()) j["side_features"] = e.context.side_features;
  return j;
}

LogEntry log_entry_from_json(const nlohmann::json& j) {
  LogEntry e;
  e.context.prefix = j.at("prefix").get<std::string>();
  if (j.contains("side_features")) {
    e.context.side_features = j.at("side_features").get<std::map<std::string, std::string>>();
  }
  e.logged_query = j.at("logged_query").get<std::string>();
  e.clicked_doc = j.at("clicked_doc").get<DocId>();
  e.logged_rank = j.at("logged_rank").get<std::uint32_t>();
  e.entry_seed = j.at("entry_seed").get<std::uint64_t>();
  return e;
}

void write_log(std::ostream& out, std::span<const LogEntry> log) {
  for (const auto& e : log) out << log_entry_to_json(e).dump() << '\n';
}

std::vector<LogEntry> read_log(std::istream& in) {
  std::vector<LogEntry> log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      log.push_back(log_entry_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& ex) {
      throw DataError("log line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return log;
}

void save_log(const std::filesystem::path& path, std::span<const LogEntry> log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_log(out, log);
}

std::vector<LogEntry> load_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError(path.string());
  return read_log(in);
}

}  // namespace uqac
