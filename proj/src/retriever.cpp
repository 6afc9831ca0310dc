#include "uqac/retriever.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

#include "uqac/common.hpp"

namespace uqac {

namespace {
constexpr const char* kFormat = "uqac.retriever";
constexpr int kVersion = 1;
}  // namespace

CandidateSet pad_candidates(CandidateSet candidates, std::size_t k) {
  if (k == 0) throw std::invalid_argument("padding size must be positive");
  if (candidates.entries.size() > k) candidates.entries.resize(k);
  while (candidates.entries.size() < k) candidates.entries.push_back(Candidate::null());
  candidates.padded_to = k;
  return candidates;
}

TrieRetriever::TrieRetriever() : nodes_(1) {}

std::optional<std::uint32_t> TrieRetriever::child(std::uint32_t node, char c) const {
  const auto& children = nodes_[node].children;
  auto it = std::lower_bound(children.begin(), children.end(), c,
                             [](const auto& edge, char value) { return edge.first < value; });
  if (it == children.end() || it->first != c) return std::nullopt;
  return it->second;
}

TrieRetriever TrieRetriever::train(std::span<const RetrieverTrainingPair> pairs, const Options& options) {
  if (options.m_candidates == 0) throw std::invalid_argument("m_candidates must be positive");
  TrieRetriever r;
  r.options_ = options;

  for (const auto& p : pairs) {
    if (!(p.utility >= 0.0)) throw DataError("retriever training utilities must be nonnegative");
    r.queries_.push_back(p.query);
  }
  std::sort(r.queries_.begin(), r.queries_.end());
  r.queries_.erase(std::unique(r.queries_.begin(), r.queries_.end()), r.queries_.end());
  auto query_index = [&r](const std::string& q) {
    return static_cast<std::uint32_t>(std::lower_bound(r.queries_.begin(), r.queries_.end(), q) -
                                      r.queries_.begin());
  };

  // Utility mass recorded at the node of each exact prefix.
  std::map<std::string, std::map<std::uint32_t, double>> by_prefix;
  for (const auto& p : pairs) {
    if (p.utility > 0.0) by_prefix[p.prefix][query_index(p.query)] += p.utility;
  }

  std::vector<std::uint32_t> parent{0};
  std::vector<std::map<std::uint32_t, double>> mass(1);
  for (auto& [prefix, sums] : by_prefix) {
    std::uint32_t node = 0;
    for (char c : prefix) {
      auto next = r.child(node, c);
      if (!next) {
        next = static_cast<std::uint32_t>(r.nodes_.size());
        r.nodes_.emplace_back();
        parent.push_back(node);
        mass.emplace_back();
        auto& children = r.nodes_[node].children;
        children.insert(std::lower_bound(children.begin(), children.end(), std::make_pair(c, 0u)),
                        {c, *next});
      }
      node = *next;
    }
    for (const auto& [q, u] : sums) mass[node][q] += u;
  }

  // Children always have larger indices than their parents, so a reverse
  // sweep sees every subtree complete before folding it upward.
  for (std::size_t i = r.nodes_.size(); i-- > 0;) {
    auto& top = r.nodes_[i].top;
    for (const auto& [q, u] : mass[i]) {
      if (u >= options.tau) top.push_back({q, u});
    }
    std::sort(top.begin(), top.end(), [](const Scored& a, const Scored& b) {
      return a.utility > b.utility || (a.utility == b.utility && a.query < b.query);
    });
    if (top.size() > options.m_candidates) top.resize(options.m_candidates);
    if (i > 0) {
      for (const auto& [q, u] : mass[i]) mass[parent[i]][q] += u;
    }
    mass[i].clear();
  }
  return r;
}

CandidateSet TrieRetriever::retrieve(std::string_view prefix) const {
  CandidateSet out;
  out.prefix = std::string(prefix);
  std::uint32_t node = 0;
  std::size_t matched = 0;
  for (char c : prefix) {
    auto next = child(node, c);
    if (!next) break;
    node = *next;
    ++matched;
  }
  for (const auto& s : nodes_[node].top) {
    const std::string& q = queries_[s.query];
    if (matched < prefix.size() && !q.starts_with(prefix)) continue;
    out.entries.push_back({q, s.utility, false});
  }
  return out;
}

nlohmann::json TrieRetriever::to_json() const {
  std::vector<std::uint32_t> parent(nodes_.size(), 0);
  std::vector<int> edge(nodes_.size(), -1);
  for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
    for (const auto& [c, n] : nodes_[i].children) {
      parent[n] = i;
      edge[n] = static_cast<unsigned char>(c);
    }
  }
  nlohmann::json nodes = nlohmann::json::array();
  for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
    nlohmann::json top = nlohmann::json::array();
    for (const auto& s : nodes_[i].top) top.push_back({s.query, s.utility});
    nodes.push_back({i == 0 ? -1 : static_cast<long long>(parent[i]), edge[i], std::move(top)});
  }
  return {{"format", kFormat},
          {"version", kVersion},
          {"tau", options_.tau},
          {"m_candidates", options_.m_candidates},
          {"queries", queries_},
          {"nodes", std::move(nodes)}};
}

TrieRetriever TrieRetriever::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kFormat) throw DataError("not a retriever file");
  if (j.at("version").get<int>() != kVersion) throw DataError("unsupported retriever version");
  TrieRetriever r;
  r.options_.tau = j.at("tau").get<double>();
  r.options_.m_candidates = j.at("m_candidates").get<std::size_t>();
  r.queries_ = j.at("queries").get<std::vector<std::string>>();
  const auto& nodes = j.at("nodes");
  r.nodes_.assign(nodes.size(), Node{});
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    for (const auto& s : n.at(2)) {
      const auto q = s.at(0).get<std::uint32_t>();
      if (q >= r.queries_.size()) throw DataError("retriever query index out of range");
      r.nodes_[i].top.push_back({q, s.at(1).get<double>()});
    }
    if (i == 0) continue;
    const auto p = n.at(0).get<long long>();
    if (p < 0 || static_cast<std::size_t>(p) >= nodes.size()) throw DataError("bad retriever node parent");
    r.nodes_[static_cast<std::size_t>(p)].children.push_back(
        {static_cast<char>(n.at(1).get<int>()), static_cast<std::uint32_t>(i)});
  }
  for (auto& node : r.nodes_) std::sort(node.children.begin(), node.children.end());
  return r;
}

void TrieRetriever::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json().dump() << '\n';
}

TrieRetriever TrieRetriever::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError(path.string());
  return from_json(nlohmann::json::parse(in));
}

QueryUniverse::QueryUniverse(std::vector<std::string> queries) : queries_(std::move(queries)) {
  std::sort(queries_.begin(), queries_.end());
  queries_.erase(std::unique(queries_.begin(), queries_.end()), queries_.end());
}

std::span<const std::string> QueryUniverse::extending(std::string_view prefix) const {
  auto first = std::lower_bound(queries_.begin(), queries_.end(), prefix,
                                [](const std::string& q, std::string_view p) { return q < p; });
  auto last = std::partition_point(first, queries_.end(),
                                   [prefix](const std::string& q) { return q.starts_with(prefix); });
  return {first, last};
}

}  // namespace uqac
