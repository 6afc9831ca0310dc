#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "uqac/common.hpp"
#include "uqac/rng.hpp"

namespace uqac {

struct CorpusItem {
  std::string query_text;           // normalized
  std::vector<DocId> relevant_docs;  // sorted, unique, nonempty

  bool operator==(const CorpusItem&) const = default;
};

/// Query texts paired with the documents relevant to them. Doc ids are
/// dense in [0, doc_count); `source_ids` maps them back to the ids of the
/// originally loaded file when the corpus has been re-indexed.
struct Corpus {
  std::vector<CorpusItem> items;
  std::size_t doc_count = 0;
  std::vector<std::size_t> label_frequency;  // indexed by doc id
  std::vector<DocId> source_ids;             // indexed by doc id

  /// Builds a corpus from items, computing label frequencies and an
  /// identity id map. Throws DataError if any invariant is violated.
  static Corpus from_items(std::vector<CorpusItem> items, std::size_t doc_count);

  /// Sub-corpus over the same doc-id space (frequencies recomputed).
  Corpus with_items(std::vector<CorpusItem> subset) const;

  void validate() const;
  bool empty() const { return items.empty(); }
  std::size_t size() const { return items.size(); }

  bool operator==(const Corpus&) const = default;
};

/// Reads `<query text>\t<doc_id>,<doc_id>,...` lines. Errors carry the
/// 1-based line number.
Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_corpus(std::istream& in, std::string_view source_name = "<stream>");
void write_corpus(std::ostream& out, const Corpus& corpus);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);

/// Keeps the top_l most frequent doc ids (ties to the smaller id), drops
/// items left without relevant docs and re-indexes the retained ids densely
/// in ascending source order.
Corpus filter_top_labels(const Corpus& corpus, std::size_t top_l);

struct SplitFractions {
  double retriever = 0.6;
  double ranker = 0.3;
  double test = 0.1;
};

struct CorpusSplit {
  Corpus retriever_train;
  Corpus ranker_train;
  Corpus test;
  std::uint64_t seed = 0;
};

CorpusSplit split_corpus(const Corpus& corpus, SplitFractions fractions, std::uint64_t seed);

/// Keeps floor(fraction * n) items chosen by a seeded draw, in their
/// original order. fraction 1 is the identity.
Corpus subsample_corpus(const Corpus& corpus, double fraction, std::uint64_t seed);

/// Truncates a normalized query at a uniformly drawn position strictly
/// after its first word. Returns nullopt when the query has a single word or
/// the drawn prefix is shorter than min_len.
std::optional<std::string> sample_prefix(std::string_view query_text, std::size_t min_len, Rng& rng);

/// Structured synthetic stand-in for XMC title/label data. Documents belong
/// to (topic, subtype) cells and carry two attribute words. An item starts
/// from a seed document drawn by popularity (Zipf) and lists it together
/// with related documents of the same cell. Titles read "<topic> <subtype>"
/// followed, unless generic, by one or both seed attributes, and optionally
/// a generic noise word.
struct SyntheticCorpusConfig {
  std::size_t num_queries = 2000;
  std::size_t num_docs = 5000;
  double relevance_density = 6.0;  // mean relevant docs per item
  double zipf_exponent = 1.5;
  std::uint64_t seed = 20240601;

  std::size_t num_topics = 20;
  std::size_t subtypes_per_topic = 4;
  std::size_t attributes_per_topic = 10;
  std::size_t noise_vocabulary = 6;
  double generic_probability = 0.8;
  double detail_probability = 0.4;
  double noise_probability = 0.2;
  double related_affinity = 4.0;  // weight boost for attribute siblings
  double seed_relevance_probability = 1.0;
};

Corpus generate_synthetic_corpus(const SyntheticCorpusConfig& config);

}  // namespace uqac
