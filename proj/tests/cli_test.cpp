#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "mlf/commands.hpp"
#include "mlf/data.hpp"

namespace mlf {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CliResult {
  int code;
  std::string out, err;
};

CliResult run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    unsetenv(kOutputDirEnv);
    dir_ = fs::temp_directory_path() /
           ("mlf_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { unsetenv(kOutputDirEnv); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  json toy_config(const std::string& out_dir) const {
    json j = json::parse(R"({
      "dataset": {"synth": {"kind": "trend", "length": 400, "channels": 2, "seed": 3}},
      "model": {"period_lengths": [8, 16], "horizon": 3, "patch_count": 4, "squeeze_factor": 2,
                "d_model": 4, "n_heads": 2, "n_blocks": 2, "conv_filters": 2},
      "train": {"learning_rate": 0.003, "batch_size": 32, "epochs": 2},
      "seed": 5
    })");
    j["output_dir"] = out_dir;
    return j;
  }

  std::string write_config(const json& j, const std::string& name = "config.json") const {
    std::ofstream(path(name)) << j.dump(2);
    return path(name);
  }

  static json read_json(const std::string& p) {
    std::ifstream in(p);
    return json::parse(in);
  }

  static std::vector<json> read_lines(const std::string& p) {
    std::ifstream in(p);
    std::vector<json> out;
    for (std::string line; std::getline(in, line);) out.push_back(json::parse(line));
    return out;
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
  }

  fs::path dir_;
};

TEST_F(Cli, TrainOnSyntheticDataWritesArtifacts) {
  const auto out = path("run");
  const auto r = run({"train", "--config", write_config(toy_config(out))});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out + "/checkpoint.json"));
  EXPECT_TRUE(fs::exists(out + "/resolved_config.json"));
  const auto log = read_lines(out + "/train_log.jsonl");
  ASSERT_EQ(log.size(), 3u);
  EXPECT_EQ(log[0]["type"], "epoch");
  EXPECT_EQ(log.back()["type"], "test");
  EXPECT_TRUE(log.back()["metrics"]["normalized"].contains("mse"));
}

TEST_F(Cli, MissingPeriodLengthsNamesTheField) {
  auto cfg = toy_config(path("run"));
  cfg["model"].erase("period_lengths");
  const auto r = run({"train", "--config", write_config(cfg)});
  EXPECT_EQ(r.code, static_cast<int>(ExitCode::kConfig));
  EXPECT_NE(r.err.find("error[E_CONFIG]"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("model.period_lengths"), std::string::npos) << r.err;
}

TEST_F(Cli, ErrorsUseMachineParsableCodes) {
  EXPECT_EQ(run({}).code, static_cast<int>(ExitCode::kUsage));
  auto r = run({"train", "--config", path("absent.json")});
  EXPECT_EQ(r.code, static_cast<int>(ExitCode::kConfig));
  EXPECT_EQ(r.err.rfind("error[E_CONFIG]: ", 0), 0u) << r.err;
  r = run({"train", "--config", write_config(toy_config(path("run"))), "--set", "model.n_heads=3"});
  EXPECT_EQ(r.code, static_cast<int>(ExitCode::kConfig));
  EXPECT_NE(r.err.find("model.n_heads"), std::string::npos) << r.err;
  auto cfg = toy_config(path("run"));
  cfg["dataset"] = {{"path", path("missing.csv")}};
  r = run({"train", "--config", write_config(cfg)});
  EXPECT_EQ(r.code, static_cast<int>(ExitCode::kData)) << r.err;
}

TEST_F(Cli, EvalMatchesFinalTrainRecordExactly) {
  const auto out = path("run");
  ASSERT_EQ(run({"train", "--config", write_config(toy_config(out))}).code, 0);
  const auto r = run({"eval", "--checkpoint", out + "/checkpoint.json", "--naive"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto eval = read_json(out + "/eval_metrics.json");
  const auto record = read_lines(out + "/train_log.jsonl").back()["metrics"];
  EXPECT_EQ(eval["normalized"], record["normalized"]);
  EXPECT_EQ(eval["original"], record["original"]);
  ASSERT_TRUE(eval.contains("naive"));
  EXPECT_TRUE(eval["naive"]["normalized"].contains("mse"));
  EXPECT_EQ(json::parse(r.out), eval);
}

TEST_F(Cli, ExportsAttentionAndWeights) {
  const auto out = path("run");
  ASSERT_EQ(run({"train", "--config", write_config(toy_config(out))}).code, 0);
  const auto r = run({"eval", "--checkpoint", out + "/checkpoint.json", "--export-attention",
                      "--export-weights", "-o", path("eval")});
  ASSERT_EQ(r.code, 0) << r.err;
  // S * N / r = 2 * 4 / 2 = 4 tokens -> 16 entries per block
  for (int e = 0; e < 2; ++e) {
    std::ifstream in(path("eval/attention/block" + std::to_string(e) + ".csv"));
    std::size_t rows = 0, entries = 0;
    for (std::string line; std::getline(in, line); ++rows) {
      std::stringstream ss(line);
      double total = 0.0;
      for (std::string cell; std::getline(ss, cell, ','); ++entries) total += std::stod(cell);
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
    EXPECT_EQ(rows, 4u);
    EXPECT_EQ(entries, 16u);
  }
  const auto tokens = read_json(path("eval/attention/tokens.json"));
  EXPECT_EQ(tokens["periods"][1]["token_begin"], 2);
  std::ifstream w(path("eval/lwi_weights.csv"));
  std::string header;
  std::getline(w, header);
  std::size_t rows = 0;
  for (std::string line; std::getline(w, line); ++rows) {
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    std::getline(ss, cell, ',');
    while (std::getline(ss, cell, ',')) {
      EXPECT_GT(std::stod(cell), 0.2689);
      EXPECT_LT(std::stod(cell), 0.7311);
    }
  }
  EXPECT_EQ(rows, 2u);
}

TEST_F(Cli, EvalRejectsChannelMismatch) {
  const auto out = path("run");
  ASSERT_EQ(run({"train", "--config", write_config(toy_config(out))}).code, 0);
  SynthOptions o;
  o.length = 300;
  o.channels = 3;
  write_csv(path("three.csv"), synthesize(o));
  const auto r = run({"eval", "--checkpoint", out + "/checkpoint.json", "--data", path("three.csv")});
  EXPECT_EQ(r.code, static_cast<int>(ExitCode::kShape)) << r.err;
}

TEST_F(Cli, ForecastWritesHorizonRowsAndChecksHistory) {
  const auto out = path("run");
  ASSERT_EQ(run({"train", "--config", write_config(toy_config(out))}).code, 0);
  SynthOptions o;
  o.kind = SynthKind::kTrend;
  o.length = 40;
  o.channels = 2;
  write_csv(path("recent.csv"), synthesize(o));
  auto r = run({"forecast", "--checkpoint", out + "/checkpoint.json", "--data", path("recent.csv"),
                "--out", path("fc.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ds = load_csv(path("fc.csv"), "step");
  EXPECT_EQ(ds.length, 3u);
  EXPECT_EQ(ds.channels(), 2u);

  o.length = 10;
  write_csv(path("short.csv"), synthesize(o));
  r = run({"forecast", "--checkpoint", out + "/checkpoint.json", "--data", path("short.csv")});
  EXPECT_EQ(r.code, static_cast<int>(ExitCode::kData));
  EXPECT_NE(r.err.find("history"), std::string::npos) << r.err;
}

TEST_F(Cli, ConstantSeriesGivesNearConstantForecast) {
  // nearly constant training data (exactly constant channels cannot be standardised)
  SeriesDataset ds;
  ds.channel_names = {"level"};
  std::mt19937_64 rng(1);
  std::normal_distribution<double> noise(0.0, 0.01);
  ds.length = 400;
  for (std::size_t t = 0; t < ds.length; ++t) {
    ds.timestamps.push_back(std::to_string(t));
    ds.values.push_back(5.0 + noise(rng));
  }
  write_csv(path("flat.csv"), ds);
  auto cfg = toy_config(path("run"));
  cfg["dataset"] = {{"path", path("flat.csv")}};
  cfg["train"]["epochs"] = 10;
  cfg["train"]["learning_rate"] = 0.01;
  ASSERT_EQ(run({"train", "--config", write_config(cfg)}).code, 0);

  SeriesDataset flat = ds;
  std::fill(flat.values.begin(), flat.values.end(), 5.0);
  write_csv(path("const.csv"), flat);
  const auto r = run({"forecast", "--checkpoint", path("run/checkpoint.json"), "--data",
                      path("const.csv"), "--out", path("fc.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto fc = load_csv(path("fc.csv"), "step");
  ASSERT_EQ(fc.length, 3u);
  for (double v : fc.values) EXPECT_NEAR(v, 5.0, 0.05);
}

TEST_F(Cli, AblateProducesDeduplicatedTable) {
  const auto out = path("ab");
  auto cfg = toy_config(out);
  cfg["train"]["epochs"] = 1;
  const auto r = run({"ablate", "--config", write_config(cfg), "--flags", "irf,lwi,irf",
                      "--seeds", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = read_json(out + "/ablation.json");
  ASSERT_EQ(report["rows"].size(), 3u);
  EXPECT_EQ(report["rows"][0]["variant"], "base");
  EXPECT_EQ(report["rows"][1]["variant"], "w/o irf");
  EXPECT_EQ(report["rows"][2]["variant"], "w/o lwi");
  EXPECT_EQ(report["rows"][0]["mse"].size(), 3u);
  EXPECT_TRUE(report["rows"][0].contains("mse_std"));
  EXPECT_NE(r.out.find("mse_std"), std::string::npos);
  EXPECT_TRUE(fs::exists(out + "/resolved_config.json"));

  const auto bad = run({"ablate", "--config", write_config(cfg), "--flags", "dropout"});
  EXPECT_EQ(bad.code, static_cast<int>(ExitCode::kConfig));
}

TEST_F(Cli, ResolvedSnapshotReproducesCheckpointBitwise) {
  const auto out = path("a");
  ASSERT_EQ(run({"train", "--config", write_config(toy_config(out)), "--set", "train.epochs=1",
                 "--seed", "11"})
                .code,
            0);
  const auto snapshot = read_json(out + "/resolved_config.json");
  EXPECT_EQ(snapshot["seed"], 11);
  EXPECT_EQ(snapshot["train"]["epochs"], 1);
  ASSERT_EQ(run({"train", "--config", out + "/resolved_config.json", "-o", path("b")}).code, 0);
  EXPECT_EQ(slurp(out + "/checkpoint.json"), slurp(path("b/checkpoint.json")));
}

TEST_F(Cli, OutputDirEnvironmentOverride) {
  setenv(kOutputDirEnv, path("from_env").c_str(), 1);
  auto cfg = toy_config(path("from_config"));
  cfg["train"]["epochs"] = 1;
  ASSERT_EQ(run({"train", "--config", write_config(cfg)}).code, 0);
  EXPECT_TRUE(fs::exists(path("from_env/checkpoint.json")));
  EXPECT_FALSE(fs::exists(path("from_config")));
}

TEST_F(Cli, SynthDataCommand) {
  const auto r = run({"synth-data", "--kind", "regime-switch", "--length", "123", "--channels", "2",
                      "--out", path("s.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ds = load_csv(path("s.csv"), "date");
  EXPECT_EQ(ds.length, 123u);
  EXPECT_EQ(ds.channels(), 2u);
  EXPECT_EQ(run({"synth-data", "--kind", "noise", "--out", path("x.csv")}).code,
            static_cast<int>(ExitCode::kUsage));
}

TEST_F(Cli, SynthFlagReplacesDatasetPath) {
  auto cfg = toy_config(path("run"));
  cfg["dataset"] = {{"path", path("does_not_exist.csv")}};
  cfg["train"]["epochs"] = 1;
  const auto r = run({"train", "--config", write_config(cfg), "--synth", "trend"});
  EXPECT_EQ(r.code, 0) << r.err;
}

}  // namespace
}  // namespace mlf
