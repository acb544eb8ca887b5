#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "test_util.hpp"
#include "tomdecomp/probe.hpp"
#include "tomdecomp/taxonomy.hpp"

using namespace tomdecomp;

namespace {

ActivationDataset synthetic(double separation, std::size_t n_per_class, std::size_t n_actions,
                            std::size_t n_layers = 1, std::uint64_t seed = 3) {
  const auto tax = load_taxonomy();
  SyntheticSpec spec;
  spec.n_per_class = n_per_class;
  spec.class_separation = separation;
  spec.n_layers = n_layers;
  spec.seed = seed;
  auto ds = gen_synthetic_activations(spec, std::vector<CognitiveAction>(tax.begin(), tax.begin() + n_actions));
  return split_dataset(std::move(ds), 0.8, seed);
}

}  // namespace

TEST(Predict, ClosedForms) {
  LinearProbe p;
  p.weights = {0.0, 0.0};
  EXPECT_EQ(predict(p, std::vector<double>{3.0, -1.0}), 0.5);
  p.weights = {1.0, 0.0};
  // logit(0.9) = ln 9
  EXPECT_NEAR(predict(p, std::vector<double>{std::log(9.0), 0.0}), 0.9, 1e-12);
  EXPECT_NEAR(predict(p, std::vector<double>{2.1972, 0.0}), 0.9, 1e-5);
  p.bias = 800.0;
  EXPECT_EQ(predict(p, std::vector<double>{0.0, 0.0}), 1.0);
  p.bias = -800.0;
  EXPECT_EQ(predict(p, std::vector<double>{0.0, 0.0}), 0.0);
  EXPECT_THROW(predict(p, std::vector<double>{1.0}), Error);
}

TEST(TrainProbe, SeparableDataReachesHighAuc) {
  const auto ds = synthetic(4.0, 200, 6);
  TrainConfig cfg;
  cfg.seed = 1;
  for (const auto* name : {"reconsidering", "meta_awareness", "metacognitive_regulation"}) {
    const auto trace = train_probe_traced(ds, name, 0, cfg);
    EXPECT_GE(trace.probe.val_auc, 0.99) << name;
    EXPECT_LE(trace.probe.trained_epochs, 100u);
    EXPECT_EQ(trace.val_auc_history.size(), trace.probe.trained_epochs);
    EXPECT_EQ(trace.val_auc_history[trace.best_epoch - 1], trace.probe.val_auc);
  }
}

TEST(TrainProbe, NoSignalIsChance) {
  // Averaged over several one-vs-rest probes; a single probe on a finite
  // validation set scatters around 0.5.
  const auto ds = synthetic(0.0, 600, 8);
  TrainConfig cfg;
  cfg.seed = 2;
  double sum = 0.0;
  const auto tax = load_taxonomy();
  for (std::size_t a = 0; a < 8; ++a) sum += train_probe(ds, tax[a].name, 0, cfg).val_auc;
  EXPECT_GE(sum / 8.0, 0.45);
  EXPECT_LE(sum / 8.0, 0.55);
}

TEST(TrainProbe, BitIdenticalAcrossRuns) {
  const auto ds = synthetic(2.0, 50, 4);
  TrainConfig cfg;
  cfg.seed = 17;
  EXPECT_EQ(train_probe(ds, "meta_awareness", 0, cfg), train_probe(ds, "meta_awareness", 0, cfg));
  auto other = cfg;
  other.seed = 18;
  EXPECT_NE(train_probe(ds, "meta_awareness", 0, cfg).weights, train_probe(ds, "meta_awareness", 0, other).weights);
}

TEST(TrainProbe, EarlyStoppingRestoresBestEpoch) {
  const auto ds = synthetic(1.0, 40, 4);
  TrainConfig cfg;
  cfg.seed = 5;
  cfg.patience = 2;
  cfg.lr_max = 0.05;
  const auto trace = train_probe_traced(ds, "updating_beliefs", 0, cfg);
  double best = -1.0;
  std::size_t best_epoch = 0;
  for (std::size_t e = 0; e < trace.val_auc_history.size(); ++e)
    if (trace.val_auc_history[e] > best) best = trace.val_auc_history[e], best_epoch = e + 1;
  EXPECT_EQ(trace.best_epoch, best_epoch);
  EXPECT_EQ(trace.probe.val_auc, best);
  if (trace.probe.trained_epochs < cfg.max_epochs) EXPECT_EQ(trace.probe.trained_epochs, best_epoch + cfg.patience);
}

TEST(TrainProbe, Rejections) {
  const auto ds = synthetic(1.0, 10, 2);
  TrainConfig cfg;
  EXPECT_THROW(train_probe(ds, "juggling", 0, cfg), Error);
  EXPECT_THROW(train_probe(ds, "reconsidering", 1, cfg), Error);
  cfg.lr_min = 1.0;
  EXPECT_THROW(train_probe(ds, "reconsidering", 0, cfg), Error);
}

TEST(TrainSuite, CartesianShapeAndLayerRows) {
  const auto ds = synthetic(4.0, 40, 3, 5);
  TrainConfig cfg;
  cfg.max_epochs = 20;
  const auto tax = load_taxonomy();
  const std::vector<std::string> actions{tax[0].name, tax[1].name, tax[2].name};
  const auto suite = train_suite(ds, actions, {0, 1, 2, 3, 4}, cfg, 2);
  EXPECT_EQ(suite.probes.size(), 15u);
  EXPECT_EQ(suite.layer_summary().size(), 5u);
  EXPECT_EQ(suite.action_ranking().size(), 3u);
  // No layer structure in the generator: early and middle layers alike.
  for (const auto& row : suite.layer_summary()) EXPECT_GE(row.mean_auc, 0.99) << row.layer;
}

TEST(TrainSuite, IndependentOfJobs) {
  const auto ds = synthetic(2.0, 30, 4, 2);
  TrainConfig cfg;
  cfg.max_epochs = 15;
  const std::vector<std::string> actions{"reconsidering", "updating_beliefs", "meta_awareness"};
  const auto a = train_suite(ds, actions, {0, 1}, cfg, 1);
  const auto b = train_suite(ds, actions, {0, 1}, cfg, 8);
  EXPECT_EQ(a.probes, b.probes);
}

TEST(TrainSuite, SaveLoadRoundTrip) {
  testutil::TempDir dir("probes");
  const auto ds = synthetic(2.0, 20, 2, 2);
  TrainConfig cfg;
  cfg.max_epochs = 5;
  const auto suite = train_suite(ds, {"reconsidering", "updating_beliefs"}, {0, 1}, cfg);
  save_suite(suite, dir.path());
  const auto back = load_suite(dir.path());
  EXPECT_EQ(back.probes, as_stored(suite).probes);
  EXPECT_EQ(back.hidden_dim, suite.hidden_dim);
  try {
    load_suite(dir / "nowhere");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("nowhere"), std::string::npos);
  }
}

TEST(ProbeReport, HasOneRowPerProbe) {
  ProbeSuite suite;
  suite.hidden_dim = 1;
  for (std::size_t l = 0; l < 3; ++l) suite.probes[{"a", l}] = LinearProbe{"a", l, {0.0}, 0.0, 0.5 + 0.1 * l};
  const auto text = probe_report(suite);
  EXPECT_NE(text.find("a\t2\t0.7000"), std::string::npos);
  EXPECT_NEAR(suite.mean_auc(), 0.6, 1e-12);
}
