#include <optional>
#include <sstream>

#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "uqac/pipeline.hpp"
#include "uqac/text.hpp"

namespace py = pybind11;
using namespace uqac;

namespace {

std::optional<std::uint32_t> rank_out(Rank r) {
  if (!r.is_finite()) return std::nullopt;
  return r.position();
}

Rank rank_in(std::optional<std::uint32_t> r) { return r ? Rank(*r) : Rank::infinite(); }

py::dict context_dict(const ScoredContext& c) {
  py::list candidates;
  for (std::size_t i = 0; i < c.candidates.entries.size(); ++i) {
    const auto& e = c.candidates.entries[i];
    py::dict d;
    d["query"] = e.query;
    d["score"] = e.score;
    d["padding"] = e.padding;
    d["clicked_doc_rank"] = rank_out(c.clicked_doc_ranks[i]);
    candidates.append(d);
  }
  py::dict out;
  out["id"] = c.id;
  out["prefix"] = c.entry.context.prefix;
  out["logged_query"] = c.entry.logged_query;
  out["clicked_doc"] = c.entry.clicked_doc;
  out["logged_rank"] = c.entry.logged_rank;
  out["candidates"] = candidates;
  return out;
}

std::vector<std::pair<std::string, std::vector<DocId>>> items_of(const Corpus& c) {
  std::vector<std::pair<std::string, std::vector<DocId>>> out;
  for (const auto& item : c.items) out.emplace_back(item.query_text, item.relevant_docs);
  return out;
}

Corpus corpus_from(const std::vector<std::pair<std::string, std::vector<DocId>>>& items, std::size_t doc_count) {
  std::vector<CorpusItem> v;
  for (const auto& [q, docs] : items) v.push_back({q, docs});
  return Corpus::from_items(std::move(v), doc_count);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Utility-aware query autocompletion workbench";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<MissingArtifactError>(m, "MissingArtifactError", PyExc_FileNotFoundError);

  // Corpus
  py::class_<SyntheticCorpusConfig>(m, "SyntheticCorpusConfig")
      .def(py::init<>())
      .def_readwrite("num_queries", &SyntheticCorpusConfig::num_queries)
      .def_readwrite("num_docs", &SyntheticCorpusConfig::num_docs)
      .def_readwrite("relevance_density", &SyntheticCorpusConfig::relevance_density)
      .def_readwrite("zipf_exponent", &SyntheticCorpusConfig::zipf_exponent)
      .def_readwrite("seed", &SyntheticCorpusConfig::seed)
      .def_readwrite("num_topics", &SyntheticCorpusConfig::num_topics)
      .def_readwrite("subtypes_per_topic", &SyntheticCorpusConfig::subtypes_per_topic)
      .def_readwrite("attributes_per_topic", &SyntheticCorpusConfig::attributes_per_topic)
      .def_readwrite("noise_vocabulary", &SyntheticCorpusConfig::noise_vocabulary)
      .def_readwrite("generic_probability", &SyntheticCorpusConfig::generic_probability)
      .def_readwrite("detail_probability", &SyntheticCorpusConfig::detail_probability)
      .def_readwrite("noise_probability", &SyntheticCorpusConfig::noise_probability)
      .def_readwrite("related_affinity", &SyntheticCorpusConfig::related_affinity);

  py::class_<Corpus>(m, "Corpus")
      .def(py::init(&corpus_from), py::arg("items"), py::arg("doc_count"))
      .def_property_readonly("items", &items_of)
      .def_readonly("doc_count", &Corpus::doc_count)
      .def_readonly("label_frequency", &Corpus::label_frequency)
      .def_readonly("source_ids", &Corpus::source_ids)
      .def("__len__", &Corpus::size)
      .def(py::self == py::self)
      .def_static("load", &load_corpus)
      .def("save", [](const Corpus& c, const std::filesystem::path& p) { save_corpus(p, c); });

  m.def("generate_synthetic_corpus", &generate_synthetic_corpus, py::arg("config") = SyntheticCorpusConfig{});
  m.def("normalize_text", &normalize_text);
  m.def("filter_top_labels", &filter_top_labels, py::arg("corpus"), py::arg("top_l"));
  m.def(
      "split_corpus",
      [](const Corpus& c, std::tuple<double, double, double> f, std::uint64_t seed) {
        const auto s = split_corpus(c, {std::get<0>(f), std::get<1>(f), std::get<2>(f)}, seed);
        return py::make_tuple(s.retriever_train, s.ranker_train, s.test);
      },
      py::arg("corpus"), py::arg("fractions") = std::make_tuple(0.6, 0.3, 0.1), py::arg("seed"));
  m.def(
      "sample_prefix",
      [](const std::string& q, std::size_t min_len, std::uint64_t seed) {
        Rng rng(seed);
        return sample_prefix(q, min_len, rng);
      },
      py::arg("query"), py::arg("min_len"), py::arg("seed"));

  // Document ranker
  py::class_<DocRanker>(m, "DocRanker")
      .def_static("train", &DocRanker::train, py::arg("corpus"), py::arg("top_k"))
      .def_static("load", &DocRanker::load)
      .def("save", &DocRanker::save)
      .def("rank",
           [](const DocRanker& r, std::string_view q) {
             std::vector<std::pair<DocId, double>> out;
             for (const auto& e : r.rank(q).entries) out.emplace_back(e.doc, e.score);
             return out;
           })
      .def("rank_of", [](const DocRanker& r, std::string_view q, DocId d) { return rank_out(r.rank_of(q, d)); });

  // Clicks
  py::class_<PropensityModel>(m, "PropensityModel")
      .def(py::init([](double alpha, std::uint32_t cutoff) { return PropensityModel{alpha, cutoff}; }),
           py::arg("alpha") = 1.0, py::arg("cutoff") = 20)
      .def_readwrite("alpha", &PropensityModel::alpha)
      .def_readwrite("cutoff", &PropensityModel::cutoff);
  m.def("propensity", [](const PropensityModel& pm, std::optional<std::uint32_t> r) {
    return propensity(pm, rank_in(r));
  });

  py::class_<LogEntry>(m, "LogEntry")
      .def_property_readonly("prefix", [](const LogEntry& e) { return e.context.prefix; })
      .def_readonly("logged_query", &LogEntry::logged_query)
      .def_readonly("clicked_doc", &LogEntry::clicked_doc)
      .def_readonly("logged_rank", &LogEntry::logged_rank)
      .def_readonly("entry_seed", &LogEntry::entry_seed)
      .def(py::self == py::self);
  m.def(
      "generate_log",
      [](const Corpus& c, const DocRanker& r, const PropensityModel& pm, std::size_t passes,
         std::size_t min_prefix_len, std::uint64_t seed, unsigned threads) {
        return generate_log(c, r, pm, {passes, min_prefix_len, seed, threads});
      },
      py::arg("corpus"), py::arg("ranker"), py::arg("model"), py::arg("passes") = 1,
      py::arg("min_prefix_len") = 3, py::arg("seed"), py::arg("threads") = 1);
  m.def("load_log", &load_log);
  m.def("save_log", [](const std::filesystem::path& p, const std::vector<LogEntry>& log) { save_log(p, log); });

  // Estimator
  m.def(
      "utility_value",
      [](std::optional<std::uint32_t> candidate_rank, std::uint32_t logged_rank, const PropensityModel& pm,
         const std::string& variant) {
        return utility_value(rank_in(candidate_rank), logged_rank, pm, EstimatorVariant::parse(variant));
      },
      py::arg("candidate_rank"), py::arg("logged_rank"), py::arg("model"), py::arg("variant") = "unbiased");
  m.def("canonical_variant_name", [](const std::string& v) { return EstimatorVariant::parse(v).name(); });

  // Retriever
  py::class_<TrieRetriever>(m, "TrieRetriever")
      .def_static(
          "train",
          [](const std::vector<std::tuple<std::string, std::string, double>>& pairs, double tau, std::size_t m) {
            std::vector<RetrieverTrainingPair> v;
            for (const auto& [p, q, u] : pairs) v.push_back({p, q, u});
            return TrieRetriever::train(v, {tau, m});
          },
          py::arg("pairs"), py::arg("tau") = 0.1, py::arg("m") = 20)
      .def("retrieve",
           [](const TrieRetriever& r, std::string_view prefix) {
             std::vector<std::pair<std::string, double>> out;
             for (const auto& c : r.retrieve(prefix).entries) out.emplace_back(c.query, c.score);
             return out;
           })
      .def_property_readonly("node_count", &TrieRetriever::node_count)
      .def("save", &TrieRetriever::save)
      .def_static("load", &TrieRetriever::load);

  // Ranking and metrics
  m.def(
      "utility_at_k",
      [](const std::vector<std::string>& ranked, const UtilityMap& targets, std::size_t k) {
        std::vector<Candidate> c;
        for (const auto& q : ranked) c.push_back(q.empty() ? Candidate::null() : Candidate{q, 0.0, false});
        return utility_at_k(c, targets, k);
      },
      py::arg("ranked"), py::arg("targets"), py::arg("k"));
  m.def(
      "empirical_pairwise_loss",
      [](const std::vector<std::pair<std::vector<std::string>, std::unordered_map<std::string, double>>>& contexts,
         std::size_t k) {
        std::vector<RankedContext> v;
        for (const auto& [r, u] : contexts) v.push_back({r, u});
        return empirical_pairwise_loss(v, k);
      },
      py::arg("contexts"), py::arg("k"));
  m.def("spearman_correlation", [](const std::vector<double>& x, const std::vector<double>& y) {
    return spearman_correlation(x, y);
  });

  // Pipeline
  m.def("default_config_text", [] { return pipeline::default_config().to_text(); });
  m.def("canonical_config_text", [](const std::string& text) { return pipeline::parse_config(text).to_text(); });
  m.def("config_fingerprint", [](const std::string& text) { return pipeline::parse_config(text).fingerprint(); });
  m.def("reseed_config", [](const std::string& text, std::uint64_t master) {
    return pipeline::parse_config(text).reseeded(master).to_text();
  });

  py::class_<pipeline::Workbench>(m, "Workbench")
      .def_property_readonly("training_contexts",
                             [](const pipeline::Workbench& w) { return w.training.size(); })
      .def_property_readonly("evaluation_contexts",
                             [](const pipeline::Workbench& w) { return w.evaluation.size(); })
      .def_property_readonly("corpus", [](const pipeline::Workbench& w) { return w.data.corpus; })
      .def_property_readonly("docranker", [](const pipeline::Workbench& w) { return w.data.docranker; })
      .def_property_readonly("retriever", [](const pipeline::Workbench& w) { return w.retriever; })
      .def("context", [](const pipeline::Workbench& w, const std::string& which, std::size_t i) {
        const auto& v = which == "training" ? w.training : w.evaluation;
        return context_dict(v.at(i));
      });
  m.def(
      "build_workbench",
      [](const std::string& config_text) {
        py::gil_scoped_release release;
        return pipeline::build_workbench(pipeline::parse_config(config_text));
      },
      py::arg("config_text"));
  m.def(
      "run_experiment_json",
      [](const std::string& config_text, const pipeline::Workbench& w) {
        const auto setup = pipeline::experiment_setup(pipeline::parse_config(config_text));
        py::gil_scoped_release release;
        return run_experiment(setup, w.training, w.evaluation).eval.report.to_json().dump();
      },
      py::arg("config_text"), py::arg("workbench"));
  m.def(
      "run_ablations_json",
      [](const std::string& config_text, const pipeline::Workbench& w) {
        const auto config = pipeline::parse_config(config_text);
        const auto setup = pipeline::experiment_setup(config);
        std::vector<EstimatorVariant> variants;
        for (const auto& v : config.variants) variants.push_back(EstimatorVariant::parse(v));
        if (variants.empty()) variants = default_ablation_variants();
        py::gil_scoped_release release;
        return run_ablations(setup, w.training, w.evaluation, variants).report.to_json().dump();
      },
      py::arg("config_text"), py::arg("workbench"));
  m.def(
      "size_curve_csv",
      [](const std::string& config_text, const pipeline::Workbench& w) {
        const auto config = pipeline::parse_config(config_text);
        py::gil_scoped_release release;
        return data_size_curve(pipeline::experiment_setup(config), w.training, w.evaluation,
                               config.size_fractions, config.subsample_seed)
            .to_csv();
      },
      py::arg("config_text"), py::arg("workbench"));
  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "uqac");
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        py::gil_scoped_release release;
        return pipeline::run_cli(static_cast<int>(argv.size()), argv.data());
      },
      py::arg("args"));
  m.def("emit_manifest_json", [](const std::filesystem::path& dir) { return pipeline::emit_manifest(dir).dump(); });
}
