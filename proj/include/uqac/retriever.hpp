#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace uqac {

/// (prefix, query, estimated utility) evidence for the retriever.
struct RetrieverTrainingPair {
  std::string prefix;
  std::string query;
  double utility = 0.0;
};

struct Candidate {
  std::string query;  // empty for padding
  double score = 0.0;
  bool padding = false;

  static Candidate null() { return {"", 0.0, true}; }
  bool operator==(const Candidate&) const = default;
};

struct CandidateSet {
  std::string prefix;
  std::vector<Candidate> entries;
  std::optional<std::size_t> padded_to;

  bool operator==(const CandidateSet&) const = default;
};

/// Extends with padding markers up to K, or truncates to the first K.
CandidateSet pad_candidates(CandidateSet candidates, std::size_t k);

/// Character trie over prefixes. Every node keeps the top-M queries by
/// aggregate utility summed over all training pairs whose prefix passes
/// through the node; queries aggregating below tau are dropped.
class TrieRetriever {
 public:
  struct Options {
    double tau = 0.1;
    std::size_t m_candidates = 20;
    bool operator==(const Options&) const = default;
  };

  TrieRetriever();

  static TrieRetriever train(std::span<const RetrieverTrainingPair> pairs, const Options& options);

  CandidateSet retrieve(std::string_view prefix) const;

  const Options& options() const { return options_; }
  std::size_t node_count() const { return nodes_.size(); }

  nlohmann::json to_json() const;
  static TrieRetriever from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static TrieRetriever load(const std::filesystem::path& path);

  bool operator==(const TrieRetriever&) const = default;

 private:
  struct Scored {
    std::uint32_t query;  // index into queries_
    double utility;
    bool operator==(const Scored&) const = default;
  };
  struct Node {
    std::vector<std::pair<char, std::uint32_t>> children;  // sorted by char
    std::vector<Scored> top;
    bool operator==(const Node&) const = default;
  };

  std::optional<std::uint32_t> child(std::uint32_t node, char c) const;

  Options options_;
  std::vector<std::string> queries_;  // sorted
  std::vector<Node> nodes_;           // nodes_[0] is the root
};

inline TrieRetriever train_retriever(std::span<const RetrieverTrainingPair> pairs, double tau,
                                     std::size_t m) {
  return TrieRetriever::train(pairs, {tau, m});
}
inline CandidateSet retrieve_candidates(const TrieRetriever& retriever, std::string_view prefix) {
  return retriever.retrieve(prefix);
}

/// Sorted set of distinct query texts with prefix range lookup.
class QueryUniverse {
 public:
  explicit QueryUniverse(std::vector<std::string> queries);
  std::span<const std::string> extending(std::string_view prefix) const;
  std::span<const std::string> all() const { return queries_; }

 private:
  std::vector<std::string> queries_;
};

}  // namespace uqac
