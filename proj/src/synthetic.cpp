#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "uqac/corpus.hpp"

namespace uqac {

namespace {

class WordFactory {
 public:
  explicit WordFactory(Rng& rng) : rng_(rng) {}

  std::string fresh() {
    static constexpr std::string_view kConsonants = "bdfgklmnprstvz";
    static constexpr std::string_view kVowels = "aeiou";
    for (;;) {
      const std::size_t syllables = 2 + static_cast<std::size_t>(rng_.below(2));
      std::string word;
      for (std::size_t s = 0; s < syllables; ++s) {
        word.push_back(kConsonants[rng_.below(kConsonants.size())]);
        word.push_back(kVowels[rng_.below(kVowels.size())]);
      }
      if (used_.insert(word).second) return word;
    }
  }

 private:
  Rng& rng_;
  std::set<std::string> used_;
};

/// Index drawn proportionally to weights via a prefix-sum table.
std::size_t draw_weighted(const std::vector<double>& cumulative, Rng& rng) {
  const double u = rng.uniform() * cumulative.back();
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

}  // namespace

Corpus generate_synthetic_corpus(const SyntheticCorpusConfig& cfg) {
  if (cfg.num_queries == 0 || cfg.num_docs == 0 || cfg.num_topics == 0 || cfg.subtypes_per_topic == 0 ||
      cfg.attributes_per_topic < 2 || cfg.noise_vocabulary == 0 || cfg.relevance_density < 1.0) {
    throw std::invalid_argument("invalid synthetic corpus configuration");
  }
  Rng rng(cfg.seed);
  WordFactory words(rng);

  std::vector<std::string> heads(cfg.num_topics);
  std::vector<std::vector<std::string>> subtypes(cfg.num_topics), attributes(cfg.num_topics);
  for (std::size_t t = 0; t < cfg.num_topics; ++t) {
    heads[t] = words.fresh();
    for (std::size_t s = 0; s < cfg.subtypes_per_topic; ++s) subtypes[t].push_back(words.fresh());
    for (std::size_t a = 0; a < cfg.attributes_per_topic; ++a) attributes[t].push_back(words.fresh());
  }
  std::vector<std::string> noise(cfg.noise_vocabulary);
  for (auto& w : noise) w = words.fresh();

  struct Doc {
    std::size_t topic, subtype, attr[2];
  };
  std::vector<Doc> docs(cfg.num_docs);
  for (auto& d : docs) {
    d.topic = rng.below(cfg.num_topics);
    d.subtype = rng.below(cfg.subtypes_per_topic);
    d.attr[0] = rng.below(cfg.attributes_per_topic);
    d.attr[1] = rng.below(cfg.attributes_per_topic - 1);
    if (d.attr[1] >= d.attr[0]) ++d.attr[1];
  }

  std::vector<std::size_t> popularity_rank(cfg.num_docs);
  std::iota(popularity_rank.begin(), popularity_rank.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(popularity_rank));
  std::vector<double> popularity(cfg.num_docs), cumulative(cfg.num_docs);
  for (std::size_t d = 0; d < cfg.num_docs; ++d) {
    popularity[d] = std::pow(static_cast<double>(popularity_rank[d] + 1), -cfg.zipf_exponent);
    cumulative[d] = popularity[d] + (d ? cumulative[d - 1] : 0.0);
  }

  std::map<std::pair<std::size_t, std::size_t>, std::vector<DocId>> cells;
  for (DocId d = 0; d < cfg.num_docs; ++d) cells[{docs[d].topic, docs[d].subtype}].push_back(d);

  auto shares_attribute = [&](DocId a, DocId b) {
    for (std::size_t x : docs[a].attr) {
      for (std::size_t y : docs[b].attr) {
        if (x == y) return true;
      }
    }
    return false;
  };

  std::vector<CorpusItem> items;
  items.reserve(cfg.num_queries);
  for (std::size_t i = 0; i < cfg.num_queries; ++i) {
    const auto seed_doc = static_cast<DocId>(draw_weighted(cumulative, rng));
    const Doc& sd = docs[seed_doc];
    const auto& pool = cells.at({sd.topic, sd.subtype});

    // Related documents: same cell, popular ones first, attribute siblings
    // of the seed favored. The seed itself may be left out, like a product
    // page whose labels are the other products it suggests.
    const bool seed_listed = rng.uniform() < cfg.seed_relevance_probability;
    const double extra = std::floor(-std::log(1.0 - rng.uniform()) * (cfg.relevance_density - 1.0));
    const std::size_t related =
        std::min(static_cast<std::size_t>(extra) + (seed_listed ? 0 : 1), pool.size() - 1);

    std::vector<DocId> relevant;
    if (seed_listed) relevant.push_back(seed_doc);
    std::vector<DocId> remaining;
    for (DocId d : pool) {
      if (d != seed_doc) remaining.push_back(d);
    }
    for (std::size_t r = 0; r < related; ++r) {
      std::vector<double> cum(remaining.size());
      for (std::size_t k = 0; k < remaining.size(); ++k) {
        const double affinity = shares_attribute(seed_doc, remaining[k]) ? cfg.related_affinity : 1.0;
        cum[k] = popularity[remaining[k]] * affinity + (k ? cum[k - 1] : 0.0);
      }
      const std::size_t pick = draw_weighted(cum, rng);
      relevant.push_back(remaining[pick]);
      remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    if (relevant.empty()) relevant.push_back(seed_doc);

    const std::size_t which = rng.below(2);
    std::string title = heads[sd.topic] + " " + subtypes[sd.topic][sd.subtype];
    if (rng.uniform() >= cfg.generic_probability) {
      title += " " + attributes[sd.topic][sd.attr[which]];
      if (rng.uniform() < cfg.detail_probability) title += " " + attributes[sd.topic][sd.attr[1 - which]];
    }
    if (rng.uniform() < cfg.noise_probability) title += " " + noise[rng.below(noise.size())];
    std::sort(relevant.begin(), relevant.end());
    items.push_back({std::move(title), std::move(relevant)});
  }
  return Corpus::from_items(std::move(items), cfg.num_docs);
}

}  // namespace uqac
