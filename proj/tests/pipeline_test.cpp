#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <string>

#include "test_util.hpp"
#include "tomdecomp/pipeline.hpp"
#include "tomdecomp/report.hpp"

using namespace tomdecomp;

namespace {

PipelineConfig small_config(const std::filesystem::path& out) {
  PipelineConfig cfg;
  cfg.out = out;
  cfg.seed = 11;
  cfg.jobs = 2;
  cfg.n_per_class = 4;
  cfg.n_scenarios = 6;
  cfg.n_triplets = 6;
  cfg.model_config.n_layers = 3;
  cfg.model_config.hidden_dim = 16;
  cfg.model_config.n_heads = 2;
  cfg.train.max_epochs = 10;
  return cfg;
}

void run_all(const PipelineConfig& cfg) {
  stage_gen_synthetic(cfg);
  stage_train_probes(cfg);
  stage_build_steering(cfg);
  stage_eval_tom(cfg);
  stage_decompose(cfg);
  stage_report(cfg);
}

struct Run {
  int status = -1;
  std::string output;
};

Run run_cli(const std::string& args, const testutil::TempDir& dir) {
  const auto log = dir / "cli.log";
  const std::string cmd = std::string(TOMDECOMP_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  Run r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(log);
  r.output.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return r;
}

}  // namespace

TEST(ParseLayers, Forms) {
  EXPECT_EQ(parse_layers("all", 4, 0, 0), (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(parse_layers("1-3", 9, 0, 0), (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_EQ(parse_layers("5,2,7", 9, 0, 0), (std::vector<std::size_t>{2, 5, 7}));
  EXPECT_EQ(parse_layers("auto", 9, 14, 30), (std::vector<std::size_t>{4, 5, 6, 7, 8}));
  EXPECT_THROW(parse_layers("3-1", 9, 0, 0), Error);
  EXPECT_THROW(parse_layers("12", 9, 0, 0), Error);
  EXPECT_THROW(parse_layers("x", 9, 0, 0), Error);
}

TEST(Pipeline, FullRunWritesArtifacts) {
  testutil::TempDir dir("pipe");
  const auto cfg = small_config(dir.path());
  run_all(cfg);
  for (const char* f : {"model.tlm", "activations.actv", "activations.meta.jsonl", "probes/index.json",
                        "probes/report.tsv", "steering/index.json", "scenarios.jsonl", "triplets.jsonl",
                        "eval/results.tsv", "eval/summary.json", "decomposition.json", "report/deltas.tsv",
                        "report/deltas.json", "report/radar.svg", "report/bars.svg", "report/heatmap.svg"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  const auto ds = read_dataset(dir / "activations.actv");
  EXPECT_EQ(ds.records.size(), 45u * 4u);
  EXPECT_EQ(ds.n_layers, 4u);
  const auto rep = load_delta_report(dir / "decomposition.json");
  EXPECT_EQ(rep.n_scenarios, 6u);
  EXPECT_EQ(rep.actions.size(), 45u);
  EXPECT_EQ(load_delta_report(dir / "report/deltas.json"), rep);
}

TEST(Pipeline, DeterministicAcrossRunsAndJobs) {
  testutil::TempDir a("pipe"), b("pipe");
  auto ca = small_config(a.path()), cb = small_config(b.path());
  ca.jobs = 1;
  cb.jobs = 8;
  run_all(ca);
  run_all(cb);
  for (const char* f : {"decomposition.json", "eval/summary.json", "probes/index.json", "activations.actv"})
    EXPECT_EQ(binio::read_file(a / f, "test"), binio::read_file(b / f, "test")) << f;
}

TEST(Pipeline, ZeroMultiplierGivesAllZeroDeltas) {
  testutil::TempDir dir("pipe");
  auto cfg = small_config(dir.path());
  stage_gen_synthetic(cfg);
  stage_train_probes(cfg);
  stage_build_steering(cfg);
  cfg.multiplier = 0.0;
  const auto rep = run_decomposition(cfg);
  for (const auto& a : rep.actions)
    for (const auto& c : a.cells) EXPECT_EQ(c.delta, 0.0);
  for (const auto& c : rep.categories)
    for (const auto& cell : c.cells) EXPECT_EQ(cell.delta, 0.0);
}

TEST(Pipeline, MissingProbesNamesPath) {
  testutil::TempDir dir("pipe");
  auto cfg = small_config(dir.path());
  stage_gen_synthetic(cfg);
  try {
    stage_decompose(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find((dir / "probes").string()), std::string::npos) << e.what();
  }
}

TEST(Pipeline, GaussianModeAndPrompts) {
  testutil::TempDir dir("pipe");
  auto cfg = small_config(dir.path());
  cfg.synthetic_mode = "gaussian";
  cfg.n_per_class = 10;
  stage_gen_synthetic(cfg);
  EXPECT_EQ(read_dataset(dir / "activations.actv").records.size(), 450u);
  stage_gen_prompts(cfg);
  std::ifstream in(dir / "generation_prompts.jsonl");
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, 900u);
  cfg.synthetic_mode = "neural";
  EXPECT_THROW(stage_gen_synthetic(cfg), Error);
}

TEST(Cli, MissingProbesExitsOneNamingPath) {
  testutil::TempDir dir("cli");
  const auto out = (dir / "run").string();
  const auto small = " --out " + out + " --n-layers 2 --hidden-dim 8 --n-heads 2 --n-per-class 2 --n-scenarios 2"
                     " --n-triplets 2";
  ASSERT_EQ(run_cli("gen-synthetic" + small, dir).status, 0);
  const auto r = run_cli("decompose" + small, dir);
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find(out + "/probes"), std::string::npos) << r.output;
}

TEST(Cli, BadUsageExitsTwo) {
  testutil::TempDir dir("cli");
  EXPECT_EQ(run_cli("decompose --no-such-flag", dir).status, 2);
  EXPECT_EQ(run_cli("", dir).status, 2);
  EXPECT_EQ(run_cli("train-probes --jobs many", dir).status, 2);
}

TEST(Cli, ConfigFileAndFlagOverride) {
  testutil::TempDir dir("cli");
  const auto out = (dir / "run").string();
  std::ofstream(dir / "cfg.toml") << "out = \"" << out << "\"\nseed = 5\nn-layers = 2\nhidden-dim = 8\nn-heads = 2\n"
                                  << "n-per-class = 2\nn-scenarios = 3\nn-triplets = 2\n";
  const auto r = run_cli("gen-synthetic --config " + (dir / "cfg.toml").string() + " --n-scenarios 4", dir);
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(load_scenarios(dir / "run/scenarios.jsonl").size(), 4u);
  const auto echo = binio::read_file(dir / "run/effective_config.toml", "test");
  EXPECT_NE(echo.find("seed=5"), std::string::npos) << echo;
  EXPECT_NE(echo.find("n-scenarios=4"), std::string::npos) << echo;
}
