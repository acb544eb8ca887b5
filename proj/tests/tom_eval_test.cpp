#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "test_util.hpp"
#include "tomdecomp/synthetic_text.hpp"
#include "tomdecomp/tom_eval.hpp"

using namespace tomdecomp;

namespace {

std::size_t occurrences(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

Scenario scenario(const std::string& id) {
  return {id, "Noor fills the jar with sugar. Noor leaves.", "What does Noor think the jar holds?",
          "Noor thinks it holds sugar.", "Noor thinks it holds salt.", ScenarioCondition::forward_belief_false};
}

ToyLM small_model() {
  ToyLMConfig c;
  c.n_layers = 2;
  c.hidden_dim = 16;
  c.n_heads = 2;
  c.max_seq = 512;
  c.init_seed = 77;
  return ToyLM(c);
}

}  // namespace

TEST(FormatPrompt, TemplateAndAnswersOnce) {
  const auto s = scenario("s1");
  const auto p = format_prompt(s, 3);
  EXPECT_EQ(occurrences(p.text, s.true_answer), 1u);
  EXPECT_EQ(occurrences(p.text, s.wrong_answer), 1u);
  EXPECT_EQ(p.text.rfind("Story: ", 0), 0u);
  EXPECT_NE(p.text.find("Choose one of the following:\na) "), std::string::npos);
  EXPECT_NE(p.text.find("Please answer with the letter of your choice (a or b).\nAnswer:"), std::string::npos);
  const auto& at_a = p.a_holds_true_answer ? s.true_answer : s.wrong_answer;
  EXPECT_NE(p.text.find("a) " + at_a + "\nb) "), std::string::npos);
  EXPECT_EQ(format_prompt(s, 3).text, p.text);
}

TEST(FormatPrompt, PositionsBalancedOverManyItems) {
  std::size_t at_a = 0;
  for (int i = 0; i < 10000; ++i) at_a += true_answer_at_a("item-" + std::to_string(i), 12345) ? 1 : 0;
  EXPECT_NEAR(at_a / 10000.0, 0.5, 0.02);
  std::size_t differs = 0;
  for (int i = 0; i < 1000; ++i)
    differs += true_answer_at_a("item-" + std::to_string(i), 1) != true_answer_at_a("item-" + std::to_string(i), 2);
  EXPECT_GT(differs, 400u);
}

TEST(FormatPrompt, RejectsBadScenario) {
  auto s = scenario("x");
  s.wrong_answer = s.true_answer;
  EXPECT_THROW(format_prompt(s, 1), Error);
}

TEST(Decide, DirectAndTieRules) {
  auto r = decide("x", true, {0.7, 0.3}, ConditionTag::baseline);
  EXPECT_EQ(r.chosen, 'a');
  EXPECT_TRUE(r.correct);
  r = decide("x", false, {0.5, 0.5}, ConditionTag::baseline);
  EXPECT_EQ(r.chosen, 'a');
  EXPECT_FALSE(r.correct);
  r = decide("x", false, {0.2, 0.8}, ConditionTag::steered);
  EXPECT_EQ(r.chosen, 'b');
  EXPECT_TRUE(r.correct);
}

TEST(Compare, IdenticalListsHaveNoFlips) {
  std::vector<EvalResult> rs{decide("a", true, {0.9, 0.1}, ConditionTag::baseline),
                             decide("b", false, {0.9, 0.1}, ConditionTag::baseline)};
  const auto rep = compare_conditions(rs, rs);
  EXPECT_EQ(rep.flips_to_correct, 0u);
  EXPECT_EQ(rep.flips_to_incorrect, 0u);
  EXPECT_EQ(rep.acc_baseline, 0.5);
}

TEST(Compare, FlipIdentityOnRandomFixtures) {
  std::mt19937_64 rng(5);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 1 + rng() % 300;
    std::vector<EvalResult> base, steer;
    long to_correct = 0, to_incorrect = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool a_true = rng() & 1;
      const double pb = static_cast<double>(rng() % 5) / 4.0, ps = static_cast<double>(rng() % 5) / 4.0;
      base.push_back(decide("s" + std::to_string(i), a_true, {pb, 1 - pb}, ConditionTag::baseline));
      steer.push_back(decide("s" + std::to_string(i), a_true, {ps, 1 - ps}, ConditionTag::steered));
      to_correct += !base.back().correct && steer.back().correct;
      to_incorrect += base.back().correct && !steer.back().correct;
    }
    std::shuffle(steer.begin(), steer.end(), rng);
    const auto rep = compare_conditions(base, steer);
    EXPECT_EQ(static_cast<long>(rep.flips_to_correct), to_correct);
    EXPECT_EQ(static_cast<long>(rep.flips_to_incorrect), to_incorrect);
    EXPECT_NEAR(static_cast<double>(n) * (rep.acc_steered - rep.acc_baseline),
                static_cast<double>(to_correct - to_incorrect), 1e-9);
  }
}

TEST(Compare, Rejections) {
  const std::vector<EvalResult> a{decide("x", true, {0.6, 0.4}, ConditionTag::baseline)};
  const std::vector<EvalResult> moved{decide("x", false, {0.6, 0.4}, ConditionTag::steered)};
  const std::vector<EvalResult> other{decide("y", true, {0.6, 0.4}, ConditionTag::steered)};
  try {
    compare_conditions(a, moved);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("position mismatch"), std::string::npos);
  }
  EXPECT_THROW(compare_conditions(a, other), Error);
  EXPECT_THROW(compare_conditions(a, {}), Error);
}

TEST(Compare, ReferenceFlipArithmetic) {
  // 46.7% - 32.5% of 1000 scenarios is a net gain of 142; with 217 flips to
  // correct, 75 flips went the other way.
  EXPECT_EQ(reference_run::implied_flips_to_incorrect(), 217 - 142);
  EXPECT_EQ(reference_run::implied_flips_to_incorrect(), 75);
}

TEST(EvaluateSet, DifferentSeedsAreRejectedOnCompare) {
  const auto model = small_model();
  const auto scenarios = synthetic::false_belief_scenarios(6);
  const auto a = evaluate_set(model, scenarios, nullptr, 1);
  std::uint64_t seed = 2;
  while (std::all_of(scenarios.begin(), scenarios.end(),
                     [&](const Scenario& s) { return true_answer_at_a(s.id, 1) == true_answer_at_a(s.id, seed); }))
    ++seed;
  const auto b = evaluate_set(model, scenarios, nullptr, seed);
  EXPECT_THROW(compare_conditions(a.results, b.results), Error);
}

TEST(EvaluateSet, ZeroMultiplierAndJobsIndependence) {
  const auto model = small_model();
  const auto scenarios = synthetic::false_belief_scenarios(8);
  const auto base = evaluate_set(model, scenarios, nullptr, 9, 1);
  const auto base8 = evaluate_set(model, scenarios, nullptr, 9, 8);
  EXPECT_EQ(base.results, base8.results);
  std::vector<SteeringVector> vs{{1, Vector(16, 0.3)}};
  const ActiveSteering zero{vs, 0.0};
  const auto st = evaluate_set(model, scenarios, &zero, 9, 3);
  const auto rep = compare_conditions(base.results, st.results);
  EXPECT_EQ(rep.flips_to_correct + rep.flips_to_incorrect, 0u);
  for (std::size_t i = 0; i < base.results.size(); ++i) EXPECT_EQ(base.results[i].p_a, st.results[i].p_a);
  EXPECT_THROW(evaluate_set(model, {}, nullptr, 9), Error);
}

TEST(Scenarios, SaveLoadRoundTrip) {
  testutil::TempDir dir("scen");
  auto scenarios = synthetic::false_belief_scenarios(5);
  scenarios[2].condition = ScenarioCondition::forward_belief_true;
  save_scenarios(scenarios, dir / "s.jsonl");
  EXPECT_EQ(load_scenarios(dir / "s.jsonl"), scenarios);
  std::ofstream(dir / "dup.jsonl") << to_json(scenarios[0]).dump() << "\n" << to_json(scenarios[0]).dump() << "\n";
  EXPECT_THROW(load_scenarios(dir / "dup.jsonl"), Error);
  EXPECT_THROW(load_scenarios(dir / "none.jsonl"), Error);
}
