#include "uqac/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "uqac/text.hpp"

namespace uqac {

namespace {

[[noreturn]] void fail_line(std::string_view source, std::size_t line, const std::string& what) {
  std::ostringstream msg;
  msg << source << ":" << line << ": " << what;
  throw DataError(msg.str());
}

void sort_unique(std::vector<DocId>& ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
}

}  // namespace

Corpus Corpus::from_items(std::vector<CorpusItem> items, std::size_t doc_count) {
  Corpus c;
  c.doc_count = doc_count;
  c.label_frequency.assign(doc_count, 0);
  for (auto& item : items) {
    sort_unique(item.relevant_docs);
    for (DocId d : item.relevant_docs) {
      if (d >= doc_count) throw DataError("doc id " + std::to_string(d) + " out of range");
      ++c.label_frequency[d];
    }
  }
  c.items = std::move(items);
  c.source_ids.resize(doc_count);
  std::iota(c.source_ids.begin(), c.source_ids.end(), DocId{0});
  c.validate();
  return c;
}

Corpus Corpus::with_items(std::vector<CorpusItem> subset) const {
  Corpus c;
  c.doc_count = doc_count;
  c.source_ids = source_ids;
  c.label_frequency.assign(doc_count, 0);
  for (const auto& item : subset) {
    for (DocId d : item.relevant_docs) ++c.label_frequency[d];
  }
  c.items = std::move(subset);
  return c;
}

void Corpus::validate() const {
  if (label_frequency.size() != doc_count || source_ids.size() != doc_count) {
    throw DataError("corpus bookkeeping does not match doc_count");
  }
  std::vector<std::size_t> counts(doc_count, 0);
  for (const auto& item : items) {
    if (item.query_text.empty()) throw DataError("empty query text");
    if (item.relevant_docs.empty()) throw DataError("empty relevant-doc list");
    if (!std::is_sorted(item.relevant_docs.begin(), item.relevant_docs.end()) ||
        std::adjacent_find(item.relevant_docs.begin(), item.relevant_docs.end()) !=
            item.relevant_docs.end()) {
      throw DataError("relevant docs must be sorted and unique");
    }
    for (DocId d : item.relevant_docs) {
      if (d >= doc_count) throw DataError("doc id " + std::to_string(d) + " out of range");
      ++counts[d];
    }
  }
  if (counts != label_frequency) throw DataError("label frequencies out of date");
}

Corpus parse_corpus(std::istream& in, std::string_view source_name) {
  std::vector<CorpusItem> items;
  std::size_t max_id = 0;
  bool any_id = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      fail_line(source_name, line_no, "malformed line, expected <query text>\\t<doc ids>");
    }
    CorpusItem item;
    item.query_text = normalize_text(std::string_view(line).substr(0, tab));
    if (item.query_text.empty()) fail_line(source_name, line_no, "empty query text");

    std::string_view labels = std::string_view(line).substr(tab + 1);
    if (labels.find_first_not_of(" ") == std::string_view::npos) {
      fail_line(source_name, line_no, "empty relevant-doc list");
    }
    std::size_t start = 0;
    while (start <= labels.size()) {
      std::size_t end = labels.find(',', start);
      if (end == std::string_view::npos) end = labels.size();
      std::string_view field = labels.substr(start, end - start);
      while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
      while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
      DocId id = 0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), id);
      if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
        fail_line(source_name, line_no, "non-integer doc id '" + std::string(field) + "'");
      }
      item.relevant_docs.push_back(id);
      max_id = std::max<std::size_t>(max_id, id);
      any_id = true;
      start = end + 1;
    }
    items.push_back(std::move(item));
  }
  if (items.empty()) throw DataError(std::string(source_name) + ": empty corpus file");
  return Corpus::from_items(std::move(items), any_id ? max_id + 1 : 0);
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError(path.string());
  return parse_corpus(in, path.string());
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& item : corpus.items) {
    out << item.query_text << '\t';
    for (std::size_t i = 0; i < item.relevant_docs.size(); ++i) {
      if (i) out << ',';
      out << item.relevant_docs[i];
    }
    out << '\n';
  }
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_corpus(out, corpus);
}

Corpus filter_top_labels(const Corpus& corpus, std::size_t top_l) {
  if (top_l == 0) throw std::invalid_argument("top_l must be positive");
  std::vector<DocId> order;
  for (DocId d = 0; d < corpus.doc_count; ++d) {
    if (corpus.label_frequency[d] > 0) order.push_back(d);
  }
  std::stable_sort(order.begin(), order.end(), [&](DocId a, DocId b) {
    return corpus.label_frequency[a] > corpus.label_frequency[b];
  });
  if (order.size() > top_l) order.resize(top_l);
  std::sort(order.begin(), order.end());

  constexpr DocId kDropped = std::numeric_limits<DocId>::max();
  std::vector<DocId> remap(corpus.doc_count, kDropped);
  std::vector<DocId> source_ids(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    remap[order[i]] = static_cast<DocId>(i);
    source_ids[i] = corpus.source_ids[order[i]];
  }

  std::vector<CorpusItem> items;
  for (const auto& item : corpus.items) {
    CorpusItem kept{item.query_text, {}};
    for (DocId d : item.relevant_docs) {
      if (remap[d] != kDropped) kept.relevant_docs.push_back(remap[d]);
    }
    if (!kept.relevant_docs.empty()) items.push_back(std::move(kept));
  }
  Corpus out = Corpus::from_items(std::move(items), order.size());
  out.source_ids = std::move(source_ids);
  return out;
}

CorpusSplit split_corpus(const Corpus& corpus, SplitFractions f, std::uint64_t seed) {
  if (f.retriever < 0 || f.ranker < 0 || f.test < 0 ||
      std::abs(f.retriever + f.ranker + f.test - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must be nonnegative and sum to 1");
  }
  const std::size_t n = corpus.items.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  // The epsilon keeps products like (0.6 + 0.3) * 10 from flooring to 8.
  auto cut = [n](double fraction) {
    return std::min(n, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9)));
  };
  const std::size_t first = cut(f.retriever);
  const std::size_t second = std::max(first, cut(f.retriever + f.ranker));

  auto take = [&](std::size_t from, std::size_t to) {
    std::vector<CorpusItem> part;
    part.reserve(to - from);
    for (std::size_t i = from; i < to; ++i) part.push_back(corpus.items[order[i]]);
    return corpus.with_items(std::move(part));
  };
  return CorpusSplit{take(0, first), take(first, second), take(second, n), seed};
}

Corpus subsample_corpus(const Corpus& corpus, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("fraction must be in (0, 1]");
  const std::size_t n = corpus.items.size();
  const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  if (keep >= n) return corpus;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  order.resize(keep);
  std::sort(order.begin(), order.end());
  std::vector<CorpusItem> items;
  items.reserve(keep);
  for (std::size_t i : order) items.push_back(corpus.items[i]);
  return corpus.with_items(std::move(items));
}

std::optional<std::string> sample_prefix(std::string_view query_text, std::size_t min_len, Rng& rng) {
  const std::size_t first_word = std::min(query_text.find(' '), query_text.size());
  if (query_text.size() <= first_word) return std::nullopt;
  const std::size_t positions = query_text.size() - first_word;
  const std::size_t cut = first_word + 1 + static_cast<std::size_t>(rng.below(positions));
  if (cut < min_len) return std::nullopt;
  return std::string(query_text.substr(0, cut));
}

}  // namespace uqac
