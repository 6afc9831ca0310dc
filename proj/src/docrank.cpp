#include "uqac/docrank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>

#include "uqac/text.hpp"

namespace uqac {

namespace {
constexpr const char* kFormat = "uqac.docranker";
constexpr int kVersion = 1;

bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) {
  return a.score > b.score || (a.score == b.score && a.doc < b.doc);
}
}  // namespace

Rank RankedDocs::rank_of(DocId doc) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].doc == doc) return Rank(static_cast<std::uint32_t>(i + 1));
  }
  return Rank::infinite();
}

DocRanker DocRanker::train(const Corpus& train, std::size_t top_k) {
  if (train.empty()) throw std::invalid_argument("document ranker needs a nonempty corpus");
  if (top_k == 0) throw std::invalid_argument("top_k must be positive");

  // Term counts of the texts associated with each document.
  std::vector<std::map<std::string, double>> counts(train.doc_count);
  for (const auto& item : train.items) {
    const auto tokens = split_tokens(item.query_text);
    for (DocId d : item.relevant_docs) {
      for (const auto& tok : tokens) counts[d][tok] += 1.0;
    }
  }

  std::map<std::string, std::size_t> df;
  std::size_t profiled = 0;
  for (const auto& tf : counts) {
    if (tf.empty()) continue;
    ++profiled;
    for (const auto& [tok, _] : tf) ++df[tok];
  }

  DocRanker r;
  r.top_k_ = top_k;
  for (const auto& [tok, n] : df) {
    r.token_ids_.emplace(tok, static_cast<std::uint32_t>(r.tokens_.size()));
    r.tokens_.push_back(tok);
    r.idf_.push_back(std::log((1.0 + static_cast<double>(profiled)) / (1.0 + static_cast<double>(n))) + 1.0);
  }

  r.profiles_.resize(train.doc_count);
  for (DocId d = 0; d < train.doc_count; ++d) {
    auto& profile = r.profiles_[d];
    double norm2 = 0.0;
    for (const auto& [tok, tf] : counts[d]) {
      const std::uint32_t id = r.token_ids_.at(tok);
      const double w = tf * r.idf_[id];
      profile.push_back({id, w});
      norm2 += w * w;
    }
    const double norm = std::sqrt(norm2);
    for (auto& tw : profile) tw.weight /= norm;
  }
  r.build_index();
  return r;
}

void DocRanker::build_index() {
  postings_.assign(tokens_.size(), {});
  for (DocId d = 0; d < profiles_.size(); ++d) {
    for (const auto& tw : profiles_[d]) postings_[tw.token].push_back({d, tw.weight});
  }
  if (token_ids_.empty()) {
    for (std::uint32_t i = 0; i < tokens_.size(); ++i) token_ids_.emplace(tokens_[i], i);
  }
}

std::size_t DocRanker::profiled_doc_count() const {
  return static_cast<std::size_t>(
      std::count_if(profiles_.begin(), profiles_.end(), [](const auto& p) { return !p.empty(); }));
}

RankedDocs DocRanker::rank(std::string_view query_text) const {
  RankedDocs out;
  out.query_text = std::string(query_text);

  std::map<std::uint32_t, double> query;
  for (const auto& tok : split_tokens(query_text)) {
    auto it = token_ids_.find(tok);
    if (it != token_ids_.end()) query[it->second] += 1.0;
  }
  if (query.empty()) return out;
  double norm2 = 0.0;
  for (auto& [id, w] : query) {
    w *= idf_[id];
    norm2 += w * w;
  }
  const double norm = std::sqrt(norm2);

  std::vector<double> scores(profiles_.size(), 0.0);
  std::vector<DocId> touched;
  for (const auto& [id, w] : query) {
    const double qw = w / norm;
    for (const auto& posting : postings_[id]) {
      if (scores[posting.doc] == 0.0) touched.push_back(posting.doc);
      scores[posting.doc] += qw * posting.score;
    }
  }
  out.entries.reserve(touched.size());
  for (DocId d : touched) {
    if (scores[d] > 0.0) out.entries.push_back({d, std::min(scores[d], 1.0)});
  }
  const std::size_t keep = std::min(top_k_, out.entries.size());
  std::partial_sort(out.entries.begin(), out.entries.begin() + static_cast<std::ptrdiff_t>(keep),
                    out.entries.end(), ranks_before);
  out.entries.resize(keep);
  return out;
}

Rank DocRanker::rank_of(std::string_view query, DocId doc) const { return rank(query).rank_of(doc); }

std::unordered_map<std::string, double> DocRanker::profile(DocId doc) const {
  std::unordered_map<std::string, double> out;
  if (doc >= profiles_.size()) return out;
  for (const auto& tw : profiles_[doc]) out.emplace(tokens_[tw.token], tw.weight);
  return out;
}

double DocRanker::idf(std::string_view token) const {
  auto it = token_ids_.find(std::string(token));
  return it == token_ids_.end() ? 0.0 : idf_[it->second];
}

nlohmann::json DocRanker::to_json() const {
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["top_k"] = top_k_;
  j["doc_count"] = profiles_.size();
  auto& vocab = j["vocabulary"] = nlohmann::json::array();
  for (std::size_t i = 0; i < tokens_.size(); ++i) vocab.push_back({tokens_[i], idf_[i]});
  auto& profiles = j["profiles"] = nlohmann::json::array();
  for (DocId d = 0; d < profiles_.size(); ++d) {
    if (profiles_[d].empty()) continue;
    nlohmann::json weights = nlohmann::json::array();
    for (const auto& tw : profiles_[d]) weights.push_back({tw.token, tw.weight});
    profiles.push_back({{"doc", d}, {"weights", std::move(weights)}});
  }
  return j;
}

DocRanker DocRanker::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kFormat) throw DataError("not a document ranker file");
  if (j.at("version").get<int>() != kVersion) throw DataError("unsupported document ranker version");
  DocRanker r;
  r.top_k_ = j.at("top_k").get<std::size_t>();
  for (const auto& entry : j.at("vocabulary")) {
    r.tokens_.push_back(entry.at(0).get<std::string>());
    r.idf_.push_back(entry.at(1).get<double>());
  }
  r.profiles_.resize(j.at("doc_count").get<std::size_t>());
  for (const auto& p : j.at("profiles")) {
    const auto d = p.at("doc").get<DocId>();
    if (d >= r.profiles_.size()) throw DataError("profile doc id out of range");
    for (const auto& tw : p.at("weights")) {
      const auto token = tw.at(0).get<std::uint32_t>();
      if (token >= r.tokens_.size()) throw DataError("profile token id out of range");
      r.profiles_[d].push_back({token, tw.at(1).get<double>()});
    }
  }
  r.build_index();
  return r;
}

void DocRanker::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json().dump() << '\n';
}

DocRanker DocRanker::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError(path.string());
  return from_json(nlohmann::json::parse(in));
}

bool DocRanker::operator==(const DocRanker& other) const {
  return top_k_ == other.top_k_ && tokens_ == other.tokens_ && idf_ == other.idf_ &&
         profiles_ == other.profiles_;
}

const RankCache::Entry& RankCache::lookup(std::string_view query) const {
  const std::string key(query);
  {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(key);
    if (it != entries_.end()) return it->second;
  }
  Entry entry;
  entry.ranked = ranker_->rank(query);
  for (std::size_t i = 0; i < entry.ranked.entries.size(); ++i) {
    entry.positions.emplace(entry.ranked.entries[i].doc, static_cast<std::uint32_t>(i + 1));
  }
  std::unique_lock lock(mutex_);
  return entries_.try_emplace(key, std::move(entry)).first->second;
}

const RankedDocs& RankCache::ranking(std::string_view query) const { return lookup(query).ranked; }

Rank RankCache::rank_of(std::string_view query, DocId doc) const {
  const auto& positions = lookup(query).positions;
  auto it = positions.find(doc);
  return it == positions.end() ? Rank::infinite() : Rank(it->second);
}

}  // namespace uqac
