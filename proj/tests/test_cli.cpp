#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <json.hpp>

#include "edgemask/cli.hpp"
#include "edgemask/graph_io.hpp"

using namespace edgemask;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code = 0;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Per-process root: ctest runs each case as its own process, possibly in parallel.
fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("edgemask_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> small_model(const std::string& epochs = "2") {
  return {"--epochs",      epochs, "--heads",    "2", "--head-dim", "4", "--mask-proj-dim", "8",
          "--mask-hidden", "8",    "--knn-k",    "3", "--clusters", "3"};
}

// Three small synthetic domains written as text datasets, shared by the tests below.
const fs::path& synth_dir() {
  static const fs::path dir = [] {
    fs::path d = scratch("synth");
    const Outcome o = run({"synth", "--out-dir", d.string(), "--synth-nodes", "30", "--synth-dim", "4"});
    if (o.code != 0) throw std::runtime_error("synth failed: " + o.err);
    return d;
  }();
  return dir;
}

std::vector<std::string> train_args(const fs::path& out) {
  std::vector<std::string> a{"train",
                             "--out-dir",
                             out.string(),
                             "--sources",
                             (synth_dir() / "domain0").string() + "," + (synth_dir() / "domain1").string(),
                             "--target",
                             (synth_dir() / "domain2").string()};
  const auto model = small_model();
  a.insert(a.end(), model.begin(), model.end());
  return a;
}

}  // namespace

TEST(Cli, SynthWritesDomainsAndReport) {
  const fs::path d = synth_dir();
  for (const char* dom : {"domain0", "domain1", "domain2"}) {
    EXPECT_TRUE(fs::exists(d / dom / "features.csv"));
    EXPECT_TRUE(fs::exists(d / dom / "edges.csv"));
    EXPECT_TRUE(fs::exists(d / dom / "labels.csv"));
  }
  const json r = read_json(d / "synth_report.json");
  EXPECT_EQ(r["schema_version"], cli::kMetricsSchemaVersion);
  EXPECT_EQ(r["homophily"].size(), 3u);
}

TEST(Cli, TrainThenEvalProducesMetrics) {
  const fs::path out = scratch("train");
  const Outcome t = run(train_args(out));
  ASSERT_EQ(t.code, 0) << t.err;
  for (const char* f : {"checkpoint.json", "history.csv", "metrics.json", "manifest.json", "mask_domain0.csv"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const json m = read_json(out / "metrics.json");
  EXPECT_EQ(m["subcommand"], "train");
  EXPECT_EQ(m["counters"]["blocks"], 4);
  ASSERT_TRUE(m.contains("target"));
  EXPECT_TRUE(m["target"].contains("all-ones"));
  EXPECT_TRUE(m["target"].contains("masknet"));
  EXPECT_TRUE(m["target"]["mask_stats"].contains("pruned_augmented_percent"));
  const json manifest = read_json(out / "manifest.json");
  EXPECT_EQ(manifest["hash"], m["manifest_hash"]);
  EXPECT_FALSE(manifest["timings"].is_null());

  const fs::path ev = scratch("eval");
  const Outcome e = run({"eval", "--out-dir", ev.string(), "--checkpoint", (out / "checkpoint.json").string(),
                         "--target", (synth_dir() / "domain2").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  const json em = read_json(ev / "metrics.json");
  EXPECT_EQ(em["domains"][0]["all-ones"], m["target"]["all-ones"]);
  EXPECT_DOUBLE_EQ(em["aggregate"]["worst_micro_f1"].get<double>(),
                   m["target"]["all-ones"]["micro_f1"].get<double>());
}

TEST(Cli, TargetIsReadOnlyAfterTraining) {
  const fs::path out = scratch("audit");
  std::vector<std::string> events;
  set_audit_observer([&](const std::string& e) { events.push_back(e); });
  const Outcome t = run(train_args(out));
  set_audit_observer(nullptr);
  ASSERT_EQ(t.code, 0) << t.err;
  auto pos = [&](const std::string& needle) {
    for (std::size_t i = 0; i < events.size(); ++i) {
      if (events[i].find(needle) != std::string::npos) return static_cast<long>(i);
    }
    return -1L;
  };
  const long begin = pos("phase:train-begin"), end = pos("phase:train-end"), eval = pos("phase:eval-begin");
  const long target = pos("domain2");
  ASSERT_GE(begin, 0);
  EXPECT_LT(pos("domain0"), begin);
  EXPECT_LT(begin, end);
  EXPECT_LT(end, eval);
  EXPECT_GT(target, eval);
}

TEST(Cli, RepeatedRunsAreBitIdentical) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  ASSERT_EQ(run(train_args(a)).code, 0);
  ASSERT_EQ(run(train_args(b)).code, 0);
  EXPECT_EQ(slurp(a / "checkpoint.json"), slurp(b / "checkpoint.json"));
  json ma = read_json(a / "metrics.json"), mb = read_json(b / "metrics.json");
  // The output directory is part of the hashed config, so compare everything else.
  ma.erase("manifest_hash");
  mb.erase("manifest_hash");
  EXPECT_EQ(ma, mb);
}

TEST(Cli, MissingInputFileExitsWithConfigError) {
  const fs::path d = scratch("missing");
  fs::create_directories(d / "dom");
  std::ofstream(d / "dom" / "edges.csv") << "0 1\n";
  std::ofstream(d / "dom" / "labels.csv") << "0\n1\n";
  const Outcome o = run({"train", "--out-dir", (d / "out").string(), "--sources", (d / "dom").string()});
  EXPECT_EQ(o.code, cli::kConfigError);
  EXPECT_NE(o.err.find((d / "dom" / "features.csv").string()), std::string::npos) << o.err;

  const Outcome nopath = run({"train", "--out-dir", (d / "out").string(), "--sources", (d / "nowhere").string()});
  EXPECT_EQ(nopath.code, cli::kConfigError);
  EXPECT_NE(nopath.err.find("nowhere"), std::string::npos);
}

TEST(Cli, ConfigErrors) {
  const fs::path d = scratch("config");
  EXPECT_EQ(run({"train", "--out-dir", d.string(), "--epochs", "0", "--sources", "x"}).code, cli::kConfigError);
  EXPECT_EQ(run({"train", "--out-dir", d.string(), "--bogus", "1"}).code, cli::kConfigError);
  EXPECT_EQ(run({"eval", "--out-dir", d.string()}).code, cli::kConfigError);
  EXPECT_EQ(run({}).code, cli::kConfigError);
  std::ofstream(d / "bad.json") << R"({"epochs": 3, "not-a-key": 1})";
  const Outcome o = run({"train", "--out-dir", d.string(), "--config", (d / "bad.json").string()});
  EXPECT_EQ(o.code, cli::kConfigError);
  EXPECT_NE(o.err.find("not-a-key"), std::string::npos);
}

TEST(Cli, ConfigFileEnvironmentAndFlagPrecedence) {
  const fs::path d = scratch("precedence");
  std::ofstream(d / "cfg.json") << R"({"synth-nodes": 12, "synth-dim": 3, "out-dir": ")" << (d / "from_file").string()
                                << R"("})";
  const fs::path env_dir = d / "from_env";
  ::setenv("EDGEMASK_OUT_DIR", env_dir.c_str(), 1);
  Outcome o = run({"synth", "--config", (d / "cfg.json").string()});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_TRUE(fs::exists(env_dir / "synth_report.json"));
  EXPECT_FALSE(fs::exists(d / "from_file"));
  const json manifest = read_json(env_dir / "manifest.json");
  EXPECT_EQ(manifest["config"]["synth-nodes"], 12);

  o = run({"synth", "--config", (d / "cfg.json").string(), "--out-dir", (d / "from_flag").string(), "--synth-nodes",
           "15"});
  ::unsetenv("EDGEMASK_OUT_DIR");
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(read_json(d / "from_flag" / "manifest.json")["config"]["synth-nodes"], 15);
}

TEST(Cli, EnrichAndAblations) {
  const fs::path d = scratch("ablate");
  const std::vector<std::string> base{"--sources",
                                      (synth_dir() / "domain0").string() + "," + (synth_dir() / "domain1").string()};
  auto with = [&](std::vector<std::string> a, const std::string& epochs = "2") {
    a.insert(a.end(), base.begin(), base.end());
    const auto model = small_model(epochs);
    a.insert(a.end(), model.begin(), model.end());
    return a;
  };

  ASSERT_EQ(run(with({"enrich", "--out-dir", (d / "enrich").string()})).code, 0);
  const json stats = read_json(d / "enrich" / "enrich_stats.json");
  EXPECT_GT(stats["domains"][0]["knn"].get<int>(), 0);

  const Outcome lo = run(with({"ablate-lambda", "--out-dir", (d / "lambda").string(), "--lambda-grid", "0,0.5",
                                "--target", (synth_dir() / "domain2").string()}));
  ASSERT_EQ(lo.code, 0) << lo.err;
  EXPECT_EQ(read_json(d / "lambda" / "metrics.json")["rows"].size(), 2u);

  const Outcome xo = run(with({"ablate-2x2", "--out-dir", (d / "2x2").string(), "--seeds", "0"}, "1"));
  ASSERT_EQ(xo.code, 0) << xo.err;
  const json rows = read_json(d / "2x2" / "metrics.json")["rows"];
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[3]["config"], "union+mask");
  EXPECT_EQ(rows[0]["runs"].size(), 2u);
}

TEST(Cli, VerificationSubcommandsPass) {
  const fs::path d = scratch("verify");
  const Outcome g = run({"gradcheck", "--out-dir", (d / "g").string()});
  EXPECT_EQ(g.code, 0) << g.err;
  const Outcome o = run({"oracle", "--out-dir", (d / "o").string(), "--surrogate", "--kkt"});
  EXPECT_EQ(o.code, 0) << o.err;
  const Outcome all = run({"oracle", "--out-dir", (d / "all").string()});
  EXPECT_EQ(all.code, 0) << all.err;
}

TEST(Cli, HashIsStableFnv1a) {
  EXPECT_EQ(cli::fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(cli::fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(Cli, BinaryExitCodes) {
  const std::string bin = EDGEMASK_BINARY;
  EXPECT_EQ(std::system((bin + " --version > /dev/null").c_str()), 0);
  const int bad = std::system((bin + " train --epochs zero > /dev/null 2>&1").c_str());
  ASSERT_TRUE(WIFEXITED(bad));
  EXPECT_EQ(WEXITSTATUS(bad), cli::kConfigError);
}
