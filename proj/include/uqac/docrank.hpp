#pragma once

#include <cstdint>
#include <filesystem>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "uqac/common.hpp"
#include "uqac/corpus.hpp"

namespace uqac {

struct ScoredDoc {
  DocId doc;
  double score;

  bool operator==(const ScoredDoc&) const = default;
};

/// Top-k documents for a query: scores non-increasing, ties by ascending id.
struct RankedDocs {
  std::string query_text;
  std::vector<ScoredDoc> entries;

  Rank rank_of(DocId doc) const;
  bool operator==(const RankedDocs&) const = default;
};

/// Anything that can report rank_q(a).
class RankSource {
 public:
  virtual ~RankSource() = default;
  virtual Rank rank_of(std::string_view query, DocId doc) const = 0;
};

/// Lexical TF-IDF cosine ranker. Each document's profile is built from the
/// concatenated query texts of the training items that list it.
class DocRanker : public RankSource {
 public:
  struct TokenWeight {
    std::uint32_t token;
    double weight;
    bool operator==(const TokenWeight&) const = default;
  };

  DocRanker() = default;

  static DocRanker train(const Corpus& train, std::size_t top_k);

  RankedDocs rank(std::string_view query_text) const;
  Rank rank_of(std::string_view query, DocId doc) const override;

  std::size_t top_k() const { return top_k_; }
  std::size_t doc_count() const { return profiles_.size(); }
  std::size_t profiled_doc_count() const;

  /// Profile of a document as token -> weight; empty for unprofiled docs.
  std::unordered_map<std::string, double> profile(DocId doc) const;
  /// IDF of a token, or 0 if the token is unknown.
  double idf(std::string_view token) const;

  nlohmann::json to_json() const;
  static DocRanker from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static DocRanker load(const std::filesystem::path& path);

  bool operator==(const DocRanker& other) const;

 private:
  void build_index();

  std::size_t top_k_ = 100;
  std::vector<std::string> tokens_;  // sorted vocabulary
  std::unordered_map<std::string, std::uint32_t> token_ids_;
  std::vector<double> idf_;
  std::vector<std::vector<TokenWeight>> profiles_;  // by doc id
  std::vector<std::vector<ScoredDoc>> postings_;    // by token id
};

inline DocRanker train_doc_ranker(const Corpus& train, std::size_t top_k) {
  return DocRanker::train(train, top_k);
}
inline RankedDocs rank_documents(const DocRanker& ranker, std::string_view query_text) {
  return ranker.rank(query_text);
}
inline Rank rank_of_document(const DocRanker& ranker, std::string_view query_text, DocId doc) {
  return ranker.rank_of(query_text, doc);
}

/// Thread-safe memo of rankings per query text over an immutable ranker.
class RankCache : public RankSource {
 public:
  explicit RankCache(const DocRanker& ranker) : ranker_(&ranker) {}

  const RankedDocs& ranking(std::string_view query) const;
  Rank rank_of(std::string_view query, DocId doc) const override;
  const DocRanker& ranker() const { return *ranker_; }

 private:
  struct Entry {
    RankedDocs ranked;
    std::unordered_map<DocId, std::uint32_t> positions;
  };
  const Entry& lookup(std::string_view query) const;

  const DocRanker* ranker_;
  mutable std::shared_mutex mutex_;
  mutable std::unordered_map<std::string, Entry> entries_;
};

}  // namespace uqac
