#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <vector>

#include "test_util.hpp"
#include "tomdecomp/steering.hpp"

using namespace tomdecomp;

namespace {

Matrix constant_rows(std::size_t n, const std::vector<double>& row) {
  Matrix m(n, row.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < row.size(); ++k) m(i, k) = row[k];
  return m;
}

}  // namespace

TEST(BuildSteering, ConstantClustersGiveExactDifference) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t n = 1 + rng() % 40, d = 1 + rng() % 16;
    std::vector<double> p(d), q(d), want(d);
    for (std::size_t k = 0; k < d; ++k) {
      p[k] = normal(rng) * 10;
      q[k] = normal(rng) * 10;
      want[k] = p[k] - q[k];
    }
    const auto v = build_steering_vector(constant_rows(n, p), constant_rows(n, q), 3, SteeringMode::mean_diff);
    EXPECT_EQ(v.direction, want);
    EXPECT_EQ(v.layer, 3u);
    EXPECT_EQ(v.n_pairs, n);
  }
  // Summing three copies and dividing by three would not give this back.
  const auto v = build_steering_vector(constant_rows(3, {0.3}), constant_rows(3, {0.2}), 0, SteeringMode::mean_diff);
  EXPECT_EQ(v.direction[0], 0.3 - 0.2);
}

TEST(BuildSteering, MeanDiffMatchesDirectAveraging) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  const std::size_t n = 37, d = 9;
  Matrix pos(n, d), neg(n, d);
  for (auto& v : pos.data) v = normal(rng);
  for (auto& v : neg.data) v = normal(rng);
  const auto v = build_steering_vector(pos, neg, 0, SteeringMode::mean_diff);
  for (std::size_t k = 0; k < d; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += pos(i, k) - neg(i, k);
    EXPECT_NEAR(v.direction[k], s / n, 1e-14);
  }
}

TEST(BuildSteering, PcaRecoversPlantedLine) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  const std::size_t n = 60, d = 12;
  std::vector<double> u(d);
  for (auto& x : u) x = normal(rng);
  Matrix pos(n, d), neg(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = 1.0 + normal(rng);
    for (std::size_t k = 0; k < d; ++k) {
      neg(i, k) = normal(rng);
      pos(i, k) = neg(i, k) + c * u[k] + 1e-4 * normal(rng);
    }
  }
  const auto v = build_steering_vector(pos, neg, 0, SteeringMode::pca_top1);
  EXPECT_GE(testutil::cosine(v.direction, u), 0.999);

  // Power-iteration oracle on the centered differences.
  Matrix centered(n, d);
  const auto mean = build_steering_vector(pos, neg, 0, SteeringMode::mean_diff).direction;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) centered(i, k) = pos(i, k) - neg(i, k) - mean[k];
  EXPECT_GE(std::abs(testutil::cosine(v.direction, testutil::power_iteration(centered))), 1.0 - 1e-9);
  EXPECT_NEAR(norm2(v.direction), norm2(mean), 1e-12);
  EXPECT_GT(dot(v.direction, mean), 0.0);
}

TEST(BuildSteering, PerLayerAndRejections) {
  std::vector<Matrix> pos{constant_rows(2, {1, 1}), constant_rows(2, {2, 2}), constant_rows(2, {3, 3})};
  std::vector<Matrix> neg{constant_rows(2, {0, 0}), constant_rows(2, {0, 1}), constant_rows(2, {1, 0})};
  SteeringConfig cfg;
  cfg.layers = {1, 2};
  const auto vs = build_steering_vectors(pos, neg, cfg);
  ASSERT_EQ(vs.size(), 2u);
  EXPECT_EQ(vs[0].direction, (std::vector<double>{2, 1}));
  EXPECT_EQ(vs[1].direction, (std::vector<double>{2, 3}));
  cfg.layers = {3};
  EXPECT_THROW(build_steering_vectors(pos, neg, cfg), Error);
  cfg.layers = {};
  EXPECT_THROW(build_steering_vectors(pos, neg, cfg), Error);
  EXPECT_THROW(build_steering_vector(Matrix(2, 2), Matrix(3, 2), 0, SteeringMode::mean_diff), Error);
  EXPECT_THROW(build_steering_vector(Matrix(1, 2), Matrix(1, 2), 0, SteeringMode::pca_top1), Error);
}

TEST(ApplySteering, IdentityInverseAndZeroBase) {
  const SteeringVector v{0, {0.25, -1.5, 3.0}};
  const std::vector<double> x{1.1, 2.2, -0.3};
  EXPECT_EQ(apply_steering(x, v, 0.0), x);
  const auto there = apply_steering(x, v, 2.5);
  const auto back = apply_steering(there, v, -2.5);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(there[i], x[i] + 2.5 * v.direction[i]);
    EXPECT_NEAR(back[i], x[i], 4 * std::numeric_limits<double>::epsilon() * (std::abs(x[i]) + 7.5));
  }
  EXPECT_EQ(apply_steering(std::vector<double>(3, 0.0), v, 1.0), v.direction);
  EXPECT_THROW(apply_steering(std::vector<double>(2, 0.0), v, 1.0), Error);
}

TEST(SteeringVectors, SaveLoadRoundTrip) {
  testutil::TempDir dir("vec");
  std::vector<SteeringVector> vs{{4, {0.5, -0.25}, SteeringMode::mean_diff, 10},
                                 {5, {1.0, 2.0}, SteeringMode::pca_top1, 10}};
  save_vectors(vs, dir.path());
  EXPECT_EQ(load_vectors(dir.path()), vs);
  EXPECT_THROW(load_vectors(dir / "absent"), Error);
}

TEST(Triplets, LoadCountsAndRejections) {
  testutil::TempDir dir("trip");
  const auto write = [&](const std::string& body) {
    std::ofstream(dir / "t.jsonl") << body;
    return dir / "t.jsonl";
  };
  const std::string f = R"({"story":"s","question":"q","positive":"p","negative":"n","condition":"false_belief"})";
  const std::string t = R"({"story":"s","question":"q","positive":"p","negative":"n","condition":"true_belief"})";
  auto set = load_triplets(write(f + "\n" + t + "\n" + f + "\n" + t + "\n"));
  EXPECT_EQ(set.triplets.size(), 4u);
  EXPECT_EQ(set.n_false_belief, 2u);
  EXPECT_EQ(set.n_true_belief, 2u);
  EXPECT_TRUE(set.warnings.empty());

  set = load_triplets(write(""));
  EXPECT_TRUE(set.triplets.empty());
  EXPECT_EQ(set.warnings.size(), 1u);

  try {
    load_triplets(write(f + "\n" + R"({"story":"s","question":"q","positive":"p","condition":"true_belief"})" + "\n"));
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(":2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("negative"), std::string::npos) << msg;
  }
  EXPECT_THROW(load_triplets(write(R"({"story":"s","question":"q","positive":"p","negative":"n","condition":"x"})")),
               Error);
}

TEST(Triplets, FullSizeFileCounts) {
  testutil::TempDir dir("trip");
  {
    std::ofstream out(dir / "big.jsonl");
    for (int i = 0; i < 752; ++i) {
      ContrastiveTriplet tr{"story " + std::to_string(i), "q?", "yes", "no",
                            i % 2 ? BeliefCondition::true_belief : BeliefCondition::false_belief};
      out << to_json(tr).dump() << "\n";
    }
  }
  const auto set = load_triplets(dir / "big.jsonl");
  EXPECT_EQ(set.triplets.size(), 752u);
  EXPECT_EQ(set.n_false_belief, 376u);
  EXPECT_EQ(set.n_true_belief, 376u);
}
