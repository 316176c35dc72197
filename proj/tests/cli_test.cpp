// Copyright 2026 The Cardfuse Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli_app.hpp"

#include <fstream>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace cardfuse {
namespace {

using ::cardfuse::testing::TempDir;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome RunCli(std::vector<std::string> args) {
  args.insert(args.begin(), "cardfuse");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::Run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string Slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t CountLines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

// Small dataset so that training in tests stays fast.
std::vector<std::string> SmallSynthArgs(const std::string& out) {
  return {"synth", "--out", out, "--dim", "8", "--per-subcat", "10", "--categories", "2",
          "--subcats", "3"};
}

TEST(CliSynthTest, WritesDefaultDatasetDeterministically) {
  TempDir dir("cli_synth");
  const auto a = RunCli({"synth", "--out", dir / "a"});
  ASSERT_EQ(a.code, cli::kExitOk) << a.err;
  const auto b = RunCli({"synth", "--out", dir / "b"});
  ASSERT_EQ(b.code, cli::kExitOk) << b.err;
  const Dataset ds = LoadDataset(dir / "a/manifest.json", dir / "a/embeddings.f32");
  EXPECT_EQ(ds.records.size(), 600u);
  EXPECT_EQ(Slurp(dir / "a/embeddings.f32"), Slurp(dir / "b/embeddings.f32"));
  EXPECT_EQ(Slurp(dir / "a/manifest.json"), Slurp(dir / "b/manifest.json"));
  const auto c = RunCli({"synth", "--out", dir / "c", "--seed", "8"});
  EXPECT_NE(Slurp(dir / "a/embeddings.f32"), Slurp(dir / "c/embeddings.f32"));
}

TEST(CliSynthTest, ZeroPerSubcategoryIsUsageError) {
  TempDir dir("cli_synth0");
  EXPECT_EQ(RunCli({"synth", "--out", dir / "d", "--per-subcat", "0"}).code, cli::kExitUsage);
}

TEST(CliTest, UnknownCommandAndOptionAreUsageErrors) {
  EXPECT_EQ(RunCli({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(RunCli({"train", "--no-such-flag"}).code, cli::kExitUsage);
  EXPECT_EQ(RunCli({}).code, cli::kExitUsage);
}

TEST(CliTrainTest, StepsAliasAndLossCurve) {
  TempDir dir("cli_train");
  ASSERT_EQ(RunCli(SmallSynthArgs(dir / "data")).code, 0);
  const auto r = RunCli({"train", "--data", dir / "data", "--k-steps", "2000", "--batch-size",
                         "16", "--run-dir", dir / "run", "--seed", "3"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const std::string csv = Slurp(dir / "run/loss.csv");
  EXPECT_EQ(CountLines(csv), 2001u);
  EXPECT_EQ(csv.substr(0, 10), "step,loss\n");
  const Checkpoint ck = LoadCheckpoint(dir / "run/checkpoint.json", dir / "run/checkpoint.f32");
  EXPECT_EQ(ck.step, 2000u);
  EXPECT_EQ(ck.seed, 3u);
  const auto meta = nlohmann::json::parse(Slurp(dir / "run/meta.json"));
  EXPECT_TRUE(meta.contains("train"));
}

TEST(CliTrainTest, MissingDatasetIsUsageError) {
  TempDir dir("cli_nodata");
  EXPECT_EQ(RunCli({"train", "--run-dir", dir / "run"}).code, cli::kExitUsage);
}

TEST(CliTrainTest, SameSeedSameCheckpoint) {
  TempDir dir("cli_det");
  ASSERT_EQ(RunCli(SmallSynthArgs(dir / "data")).code, 0);
  for (const char* run : {"r1", "r2"}) {
    ASSERT_EQ(RunCli({"train", "--data", dir / "data", "--steps", "50", "--batch-size", "16",
                      "--run-dir", dir / run, "--seed", "5"})
                  .code,
              0);
  }
  EXPECT_EQ(Slurp(dir / "r1/checkpoint.f32"), Slurp(dir / "r2/checkpoint.f32"));
  EXPECT_EQ(Slurp(dir / "r1/checkpoint.json"), Slurp(dir / "r2/checkpoint.json"));
  EXPECT_EQ(Slurp(dir / "r1/loss.csv"), Slurp(dir / "r2/loss.csv"));
}

TEST(CliEvalTest, FourModeTableMatchesJson) {
  TempDir dir("cli_eval");
  ASSERT_EQ(RunCli(SmallSynthArgs(dir / "data")).code, 0);
  ASSERT_EQ(RunCli({"train", "--data", dir / "data", "--steps", "100", "--batch-size", "16",
                    "--run-dir", dir / "run"})
                .code,
            0);
  const auto r = RunCli({"eval", "--data", dir / "data", "--run-dir", dir / "run", "--k", "5"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  std::istringstream table(r.out);
  std::string header;
  std::getline(table, header);
  std::istringstream cols(header);
  std::vector<std::string> names;
  for (std::string w; cols >> w;) names.push_back(w);
  EXPECT_EQ(names, (std::vector<std::string>{"Category", "image", "text", "concat", "fused"}));
  EXPECT_EQ(Slurp(dir / "run/report.txt"), r.out);

  const auto reports = ReportsFromJson(Slurp(dir / "run/report.json"));
  ASSERT_EQ(reports.size(), 4u);
  std::string line, average;
  while (std::getline(table, line)) {
    if (line.rfind("Average", 0) == 0) average = line;
  }
  std::istringstream avg(average.substr(7));
  for (const auto& rep : reports) {
    EXPECT_EQ(rep.k, 5u);
    double mean = 0;
    for (const auto& [name, acc] : rep.per_category) mean += acc;
    mean /= static_cast<double>(rep.per_category.size());
    EXPECT_NEAR(rep.overall, mean, 1e-9);
    double shown = 0;
    avg >> shown;
    EXPECT_NEAR(shown, 100 * mean, 0.005 + 1e-9);
  }
}

TEST(CliEvalTest, ZeroKIsUsageError) {
  TempDir dir("cli_k0");
  ASSERT_EQ(RunCli(SmallSynthArgs(dir / "data")).code, 0);
  EXPECT_EQ(RunCli({"eval", "--data", dir / "data", "--modes", "image", "--k", "0",
                    "--run-dir", dir / "run"})
                .code,
            cli::kExitUsage);
}

TEST(CliEvalTest, FusedWithoutCheckpointFails) {
  TempDir dir("cli_nockpt");
  ASSERT_EQ(RunCli(SmallSynthArgs(dir / "data")).code, 0);
  EXPECT_EQ(RunCli({"eval", "--data", dir / "data", "--run-dir", dir / "none"}).code,
            cli::kExitRuntime);
}

TEST(CliInspectTest, CountsAndFractions) {
  TempDir dir("cli_inspect");
  ASSERT_EQ(RunCli({"synth", "--out", dir / "data"}).code, 0);
  const auto r = RunCli({"inspect", "--data", dir / "data", "--json"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["records"], 600);
  EXPECT_EQ(j["split"]["train"], 480);
  EXPECT_EQ(j["split"]["test"], 120);
  EXPECT_EQ(j["subcategories"].size(), 12u);
  for (const auto& [name, c] : j["subcategories"].items()) {
    const double total = c["total"].get<double>();
    EXPECT_LE(std::abs(c["train"].get<double>() - 0.8 * total), 1.0) << name;
  }
  const auto text = RunCli({"inspect", "--data", dir / "data"});
  EXPECT_NE(text.out.find("records: 600"), std::string::npos);
}

TEST(CliInspectTest, CorruptBlobIsRuntimeError) {
  TempDir dir("cli_corrupt");
  ASSERT_EQ(RunCli(SmallSynthArgs(dir / "data")).code, 0);
  std::string blob = Slurp(dir / "data/embeddings.f32");
  blob.resize(blob.size() - 3);
  std::ofstream(dir / "data/embeddings.f32", std::ios::binary) << blob;
  const auto r = RunCli({"inspect", "--data", dir / "data"});
  EXPECT_EQ(r.code, cli::kExitRuntime);
  EXPECT_FALSE(r.err.empty());
}

}  // namespace
}  // namespace cardfuse
