#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "app.hpp"
#include "mstree/calibration.hpp"
#include "mstree/pricing.hpp"

namespace mstree::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome mstree(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

json without_timings(json j) {
  if (j.is_object()) {
    j.erase("computational_performance");
    for (auto& [k, v] : j.items()) v = without_timings(v);
  } else if (j.is_array()) {
    for (auto& v : j) v = without_timings(v);
  }
  return j;
}

fs::path scratch(const std::string& name) {
  const char* env = std::getenv("MSTREE_TEST_TMP");
  const fs::path dir = fs::path(env ? env : fs::temp_directory_path().string()) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// One synthetic pipeline shared by the artifact tests.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = scratch("pipeline");
    const auto p = [](const char* f) { return (dir_ / f).string(); };
    ASSERT_EQ(mstree({"--seed", "7", "synth", "--bars", "12000", "--out", p("bars.csv")}).code, 0);
    ASSERT_EQ(mstree({"train", "--bars", p("bars.csv"), "--model", p("model.json"), "--report",
                      p("eval.json"), "--trees", "40", "--folds", "3", "--seed", "7"})
                  .code,
              0);
    ASSERT_EQ(mstree({"calibrate", "--bars", p("bars.csv"), "--model", p("model.json"), "--out",
                      p("states.json")})
                  .code,
              0);
  }
  static fs::path path(const char* f) { return dir_ / f; }
  static inline fs::path dir_;
};

TEST(Cli, SynthIsDeterministic) {
  const fs::path dir = scratch("synth");
  ASSERT_EQ(mstree({"synth", "--bars", "3000", "--seed", "7", "--out", (dir / "a.csv").string()}).code, 0);
  ASSERT_EQ(mstree({"--seed", "7", "synth", "--bars", "3000", "--out", (dir / "b.csv").string()}).code, 0);
  ASSERT_EQ(mstree({"synth", "--bars", "3000", "--seed", "8", "--out", (dir / "c.csv").string()}).code, 0);
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  EXPECT_NE(slurp(dir / "a.csv"), slurp(dir / "c.csv"));
  EXPECT_EQ(slurp(dir / "a.csv").rfind("timestamp,open,high,low,close,volume,num_ticks\n", 0), 0u);
}

TEST(Cli, ValidationExitCodes) {
  const Outcome tiny = mstree({"synth", "--bars", "50", "--out", (scratch("tiny") / "x.csv").string()});
  EXPECT_EQ(tiny.code, kValidation);
  EXPECT_NE(tiny.err.find("n_bars"), std::string::npos);
  EXPECT_EQ(mstree({}).code, kValidation);
  EXPECT_EQ(mstree({"frobnicate"}).code, kValidation);
  EXPECT_EQ(mstree({"price", "--method", "bogus"}).code, kValidation);
  EXPECT_EQ(mstree({"price", "--method", "bs"}).code, kValidation);  // --vol missing
  EXPECT_EQ(mstree({"--help"}).code, kOk);
}

TEST(Cli, BlackScholesReport) {
  const Outcome o = mstree({"price", "--method", "bs", "--spot", "600", "--strike", "600", "--days", "30",
                            "--rate", "0.05", "--vol", "0.243"});
  ASSERT_EQ(o.code, kOk) << o.err;
  const json j = json::parse(o.out);
  const double price = j.at("results")[0].at("price");
  EXPECT_NEAR(price, black_scholes(600, {OptionKind::kCall, 600, 30.0 / 365.0, 0.05}, 0.243).price, 1e-12);
  EXPECT_NEAR(j.at("option").at("time_to_expiration_years").get<double>(), 30.0 / 365.0, 1e-15);
}

TEST(Cli, NumericalAndResourceExitCodes) {
  EXPECT_EQ(mstree({"price", "--method", "crr", "--vol", "0.0001", "--rate", "5", "--crr-steps", "1"}).code,
            kNumerical);
}

TEST(Cli, DegenerateLabelsFailTraining) {
  const fs::path dir = scratch("degenerate");
  {
    std::ofstream f(dir / "up.csv");
    f << "timestamp,open,high,low,close,volume,num_ticks\n";
    for (int i = 0; i < 300; ++i) {
      const double c = 100.0 + 0.01 * i;
      char stamp[32];
      std::snprintf(stamp, sizeof stamp, "2025-01-02T%02d:%02d:00", (570 + i) / 60, (570 + i) % 60);
      f << stamp << ',' << c << ',' << c + 0.005 << ',' << c - 0.005 << ',' << c << ",100,5\n";
    }
  }
  const Outcome o = mstree({"train", "--bars", (dir / "up.csv").string(), "--model",
                            (dir / "m.json").string(), "--report", (dir / "r.json").string()});
  EXPECT_EQ(o.code, kNumerical);
  EXPECT_NE(o.err.find("single class"), std::string::npos) << o.err;
}

TEST(Cli, ConfigFileSuppliesFlags) {
  const fs::path dir = scratch("config");
  {
    std::ofstream f(dir / "run.ini");
    f << "seed=5\n[synth]\nbars=400\nout=" << (dir / "cfg.csv").string() << "\n";
  }
  ASSERT_EQ(mstree({"--config", (dir / "run.ini").string(), "synth"}).code, kOk);
  ASSERT_EQ(mstree({"--seed", "5", "synth", "--bars", "400", "--out", (dir / "flags.csv").string()}).code, kOk);
  EXPECT_EQ(slurp(dir / "cfg.csv"), slurp(dir / "flags.csv"));
  // Flags override the file.
  ASSERT_EQ(mstree({"--config", (dir / "run.ini").string(), "synth", "--bars", "500"}).code, kOk);
  EXPECT_EQ(read_csv(dir / "cfg.csv").size(), 501u);
}

TEST_F(Pipeline, IngestAndFeatures) {
  const Outcome o = mstree({"ingest", "--in", path("bars.csv").string()});
  ASSERT_EQ(o.code, kOk) << o.err;
  const json summary = json::parse(o.out).at("summary");
  EXPECT_EQ(summary.at("n_bars"), 12000);
  EXPECT_LE(summary.at("close").at("p25").get<double>(), summary.at("close").at("p75").get<double>());
  ASSERT_EQ(mstree({"features", "--bars", path("bars.csv").string(), "--out", path("features.csv").string()})
                .code,
            kOk);
  const auto rows = read_csv(path("features.csv"));
  EXPECT_EQ(rows.front().size(), 1u + 17u + 1u);
  EXPECT_EQ(rows.front().back(), "label");
  EXPECT_EQ(mstree({"ingest", "--in", path("missing.csv").string()}).code, kValidation);
}

TEST_F(Pipeline, TrainReport) {
  const json r = load(path("eval.json"));
  EXPECT_GE(r.at("auc_roc").get<double>(), 0.80);
  EXPECT_EQ(r.at("cross_validation").at("fold_aucs").size(), 3u);
  const json& imp = r.at("feature_analysis").at("importances");
  ASSERT_EQ(imp.size(), 17u);
  double total = 0.0;
  for (const auto& [k, v] : imp.items()) total += v.get<double>();
  EXPECT_NEAR(total, 1.0, 1e-9);
  EXPECT_EQ(r.at("feature_analysis").at("top_feature"), "ofi");
}

TEST_F(Pipeline, ShuffledLabelsRemoveSignal) {
  const Outcome o = mstree({"train", "--bars", path("bars.csv").string(), "--model",
                            path("shuffled_model.json").string(), "--report", path("shuffled.json").string(),
                            "--trees", "40", "--folds", "0", "--shuffle-labels"});
  ASSERT_EQ(o.code, kOk) << o.err;
  const double auc = load(path("shuffled.json")).at("auc_roc");
  EXPECT_GE(auc, 0.45);
  EXPECT_LE(auc, 0.55);
}

TEST_F(Pipeline, TrainIsDeterministic) {
  ASSERT_EQ(mstree({"train", "--bars", path("bars.csv").string(), "--model", path("model2.json").string(),
                    "--report", path("eval2.json").string(), "--trees", "40", "--folds", "3", "--seed", "7",
                    "--threads", "1"})
                .code,
            kOk);
  EXPECT_EQ(slurp(path("model.json")), slurp(path("model2.json")));
  EXPECT_EQ(slurp(path("eval.json")), slurp(path("eval2.json")));
}

TEST_F(Pipeline, CalibratedStatesBracketGrowth) {
  const json t = load(path("states.json"));
  ASSERT_EQ(t.at("states").size(), 20u);
  const double g = std::exp(t.at("r").get<double>() * t.at("dt_tree").get<double>());
  EXPECT_NEAR(t.at("dt_tree").get<double>(), 30.0 / 365.0 / 10.0, 1e-15);
  for (const json& s : t.at("states")) {
    EXPECT_TRUE(s.contains("kl"));
    EXPECT_TRUE(s.contains("n_samples"));
    EXPECT_GT(s.at("d").get<double>(), 0.0);
    EXPECT_LT(s.at("d").get<double>(), g);
    EXPECT_GT(s.at("u").get<double>(), g);
  }
  ASSERT_EQ(mstree({"calibrate", "--bars", path("bars.csv").string(), "--model", path("model.json").string(),
                    "--out", path("states2.json").string()})
                .code,
            kOk);
  EXPECT_EQ(slurp(path("states.json")), slurp(path("states2.json")));
}

TEST_F(Pipeline, BuildTreeDump) {
  const Outcome o = mstree({"build-tree", "--states", path("states.json").string(), "--out",
                            path("tree.json").string()});
  ASSERT_EQ(o.code, kOk) << o.err;
  const json t = load(path("tree.json"));
  EXPECT_EQ(t.at("node_count"), 2047);
  EXPECT_EQ(t.at("levels").size(), 11u);
  EXPECT_EQ(mstree({"build-tree", "--states", path("states.json").string(), "--days", "60", "--out",
                    path("mismatch.json").string()})
                .code,
            kValidation);
  EXPECT_EQ(mstree({"build-tree", "--states", path("states.json").string(), "--steps", "25", "--days", "75",
                    "--out", path("big.json").string()})
                .code,
            kResource);
  EXPECT_EQ(mstree({"build-tree", "--states", path("states.json").string(), "--max-nodes", "1000", "--out",
                    path("capped.json").string()})
                .code,
            kResource);
  EXPECT_FALSE(fs::exists(path("capped.json")));
}

TEST_F(Pipeline, TreeAndMonteCarloPricing) {
  const Outcome tree = mstree({"price", "--method", "tree", "--steps", "10", "--states",
                               path("states.json").string()});
  ASSERT_EQ(tree.code, kOk) << tree.err;
  const json tj = json::parse(tree.out).at("results")[0];
  EXPECT_EQ(tj.at("computational_performance").at("tree_nodes_generated"), 2047);
  EXPECT_TRUE(tj.at("computational_performance").contains("tree_construction_time_sec"));
  EXPECT_TRUE(tj.at("computational_performance").contains("pricing_time_sec"));

  const Outcome mc = mstree({"price", "--method", "mc", "--paths", "200000", "--states",
                             path("states.json").string()});
  ASSERT_EQ(mc.code, kOk) << mc.err;
  const json mj = json::parse(mc.out).at("results")[0];
  EXPECT_LT(std::abs(mj.at("price").get<double>() - tj.at("price").get<double>()),
            3.0 * mj.at("std_error").get<double>());
}

TEST_F(Pipeline, AllMethodsReportIsReproducible) {
  const std::vector<std::string> args{"price", "--vol", "0.243", "--states", path("states.json").string(),
                                      "--paths", "20000"};
  const Outcome a = mstree(args);
  const Outcome b = mstree(args);
  ASSERT_EQ(a.code, kOk) << a.err;
  const json ja = json::parse(a.out);
  EXPECT_EQ(ja.at("results").size(), 4u);
  EXPECT_EQ(ja.at("comparison").at("rows").size(), 4u);
  EXPECT_EQ(without_timings(ja).dump(), without_timings(json::parse(b.out)).dump());
}

TEST_F(Pipeline, ReportPanels) {
  const fs::path out = dir_ / "panels";
  const Outcome o = mstree({"report", "--bars", path("bars.csv").string(), "--eval", path("eval.json").string(),
                            "--states", path("states.json").string(), "--out-dir", out.string()});
  ASSERT_EQ(o.code, kOk) << o.err;
  for (const char* f : {"return_histogram.csv", "ofi_histogram.csv", "intraday_volume.csv", "roc.csv",
                        "calibration.csv", "factor_scatter.csv", "kl_scatter.csv"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const auto roc = read_csv(out / "roc.csv");
  ASSERT_GT(roc.size(), 2u);
  for (std::size_t i = 2; i < roc.size(); ++i) {
    EXPECT_GE(std::stod(roc[i][0]), std::stod(roc[i - 1][0]));
    EXPECT_GE(std::stod(roc[i][1]), std::stod(roc[i - 1][1]));
  }
  EXPECT_EQ(read_csv(out / "factor_scatter.csv").size(), 1u + 20u);
  const auto kl = read_csv(out / "kl_scatter.csv");
  std::vector<double> gap, div;
  for (std::size_t i = 1; i < kl.size(); ++i) {
    gap.push_back(std::stod(kl[i][1]));
    div.push_back(std::stod(kl[i][2]));
  }
  EXPECT_GT(spearman_correlation(gap, div), 0.0);
  EXPECT_EQ(read_csv(out / "intraday_volume.csv").size(), 1u + 390u);
}

TEST_F(Pipeline, ReportNamesMissingArtifact) {
  const Outcome o = mstree({"report", "--bars", path("bars.csv").string(), "--eval",
                            path("nope.json").string(), "--states", path("states.json").string(),
                            "--out-dir", (dir_ / "p2").string()});
  EXPECT_EQ(o.code, kValidation);
  EXPECT_NE(o.err.find("nope.json"), std::string::npos) << o.err;
}

}  // namespace
}  // namespace mstree::cli
