#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "uqac/pipeline.hpp"

using namespace uqac;
using namespace uqac::pipeline;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config() {
  RunConfig c = default_config();
  c.synthetic.num_queries = 300;
  c.synthetic.num_docs = 300;
  c.top_k = 20;
  c.retriever_passes = 3;
  c.ranker_passes = 2;
  c.test_passes = 2;
  c.train.epochs = 2;
  c.features.dimension = 1u << 12;
  c.size_fractions = {0.5, 1.0};
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct CliResult {
  int code;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "uqac");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream err, out;
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  const int code = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cerr.rdbuf(old_err);
  std::cout.rdbuf(old_out);
  return {code, err.str() + out.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("config text round-trips") {
    const RunConfig c = tiny_config();
    const RunConfig back = parse_config(c.to_text());
    CHECK(back.to_text() == c.to_text());
    CHECK(back.fingerprint() == c.fingerprint());
  }

  TEST_CASE("fingerprint ignores workdir and threads") {
    RunConfig a = tiny_config();
    RunConfig b = a;
    b.workdir = "/elsewhere";
    b.threads = 8;
    CHECK(a.fingerprint() == b.fingerprint());
    b.train.seed += 1;
    CHECK(a.fingerprint() != b.fingerprint());
  }

  TEST_CASE("unknown keys and missing seeds are config errors") {
    const std::string text = tiny_config().to_text();
    try {
      std::string bad = text;
      bad.insert(bad.find("[training]\n") + 11, "bogus_key = 1\n");
      parse_config(bad);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("bogus_key") != std::string::npos);
    }
    std::string no_seed;
    std::istringstream in(text);
    std::string section, line;
    while (std::getline(in, line)) {
      if (!line.empty() && line[0] == '[') section = line;
      if (section == "[training]" && line.rfind("seed =", 0) == 0) continue;
      no_seed += line + "\n";
    }
    CHECK_THROWS_AS(parse_config(no_seed), ConfigError);
    std::string negative = text;
    const auto at = negative.find("alpha = ");
    negative.replace(at, negative.find('\n', at) - at, "alpha = -1");
    CHECK_THROWS_AS(parse_config(negative), ConfigError);
  }

  TEST_CASE("reseeding changes every seed deterministically") {
    const RunConfig c = tiny_config();
    const auto a = c.reseeded(7), b = c.reseeded(7), d = c.reseeded(8);
    CHECK(a.seeds() == b.seeds());
    CHECK(a.seeds() != d.seeds());
    for (const auto& [name, value] : a.seeds()) CHECK(value != c.seeds().at(name));
  }

  TEST_CASE("empty workdir gives an empty manifest") {
    const auto dir = fresh_dir("uqac_empty_manifest");
    const auto m = emit_manifest(dir);
    CHECK(m.at("artifacts").is_array());
    CHECK(m.at("artifacts").empty());
    fs::remove_all(dir);
  }

  TEST_CASE("CLI stages, errors and manifest") {
    const auto dir = fresh_dir("uqac_cli_tiny");
    const auto cfg = dir / "tiny.cfg";
    std::ofstream(cfg) << tiny_config().to_text();
    const auto work = (dir / "work").string();

    CHECK(cli({"--print-config"}).code == kExitOk);
    CHECK(cli({"-c", (dir / "absent.cfg").string(), "full-run"}).code == kExitConfig);
    CHECK(cli({"--no-such-flag"}).code == kExitConfig);

    auto missing = cli({"-c", cfg.string(), "-w", work, "evaluate"});
    CHECK(missing.code == kExitMissingArtifact);
    CHECK(missing.err.find("error[missing-artifact]") != std::string::npos);
    CHECK(missing.err.find("missing artifact: ") != std::string::npos);

    REQUIRE(cli({"-c", cfg.string(), "-w", work, "full-run"}).code == kExitOk);
    const auto manifest = emit_manifest(work);
    CHECK(manifest.at("artifacts").size() >= 8);
    CHECK(manifest.at("config_fingerprint") == parse_config(slurp(cfg)).fingerprint());
    const std::string first_report = slurp(fs::path(work) / artifact::kReportCsv);
    const std::string first_manifest = slurp(fs::path(work) / artifact::kManifest);

    // Re-running a stage with unchanged inputs reproduces its outputs.
    REQUIRE(cli({"-c", cfg.string(), "-w", work, "-t", "3", "evaluate"}).code == kExitOk);
    CHECK(slurp(fs::path(work) / artifact::kReportCsv) == first_report);
    CHECK(slurp(fs::path(work) / artifact::kManifest) == first_manifest);
    fs::remove_all(dir);
  }
}
