#pragma once

// Belief-attribution evaluation by answer ranking: two-option prompt with
// seeded answer positions, letter probabilities from the final-position
// logits, and baseline-vs-steered flip accounting.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tomdecomp/binary_io.hpp"
#include "tomdecomp/core.hpp"
#include "tomdecomp/reference.hpp"
#include "tomdecomp/toy_lm.hpp"

namespace tomdecomp {

enum class ScenarioCondition { forward_belief_false, forward_belief_true, other };

inline const char* to_string(ScenarioCondition c) {
  switch (c) {
    case ScenarioCondition::forward_belief_false: return "forward_belief_false";
    case ScenarioCondition::forward_belief_true: return "forward_belief_true";
    case ScenarioCondition::other: return "other";
  }
  return "other";
}

inline ScenarioCondition parse_scenario_condition(std::string_view s) {
  if (s == "forward_belief_false") return ScenarioCondition::forward_belief_false;
  if (s == "forward_belief_true") return ScenarioCondition::forward_belief_true;
  return ScenarioCondition::other;
}

struct Scenario {
  std::string id;
  std::string story;
  std::string question;
  std::string true_answer;
  std::string wrong_answer;
  ScenarioCondition condition = ScenarioCondition::forward_belief_false;

  bool operator==(const Scenario&) const = default;
};

inline void check_scenario(const Scenario& s) {
  if (s.id.empty() || s.story.empty() || s.question.empty() || s.true_answer.empty() || s.wrong_answer.empty())
    throw Error("tom-eval", "scenario " + s.id + " has an empty field");
  if (s.true_answer == s.wrong_answer) throw Error("tom-eval", "scenario " + s.id + " has identical answers");
}

inline nlohmann::json to_json(const Scenario& s) {
  return {{"id", s.id},
          {"story", s.story},
          {"question", s.question},
          {"true_answer", s.true_answer},
          {"wrong_answer", s.wrong_answer},
          {"condition", to_string(s.condition)}};
}

/// One {id, story, question, true_answer, wrong_answer, condition} per line.
inline std::vector<Scenario> load_scenarios(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("tom-eval", "cannot open scenario file " + path.string());
  std::vector<Scenario> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    try {
      const auto j = nlohmann::json::parse(line);
      Scenario s{j.at("id").get<std::string>(),          j.at("story").get<std::string>(),
                 j.at("question").get<std::string>(),    j.at("true_answer").get<std::string>(),
                 j.at("wrong_answer").get<std::string>(), parse_scenario_condition(j.value("condition", ""))};
      check_scenario(s);
      if (!ids.insert(s.id).second) throw Error("tom-eval", "duplicate scenario id " + s.id + " at " + where);
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw Error("tom-eval", "malformed scenario at " + where + ": " + e.what());
    }
  }
  return out;
}

inline void save_scenarios(const std::vector<Scenario>& scenarios, const std::filesystem::path& path) {
  std::string out;
  for (const auto& s : scenarios) out += to_json(s).dump() + "\n";
  binio::write_file(path, out, "tom-eval");
}

struct FormattedPrompt {
  std::string text;
  bool a_holds_true_answer = true;
};

/// Answer position for (scenario id, seed): true answer at "a" when the low
/// bit of the mixed hash is zero.
inline bool true_answer_at_a(std::string_view scenario_id, std::uint64_t seed) {
  return (mix64(fnv1a64(scenario_id) ^ mix64(seed)) & 1u) == 0;
}

inline FormattedPrompt format_prompt(const Scenario& s, std::uint64_t seed) {
  check_scenario(s);
  FormattedPrompt out;
  out.a_holds_true_answer = true_answer_at_a(s.id, seed);
  const auto& first = out.a_holds_true_answer ? s.true_answer : s.wrong_answer;
  const auto& second = out.a_holds_true_answer ? s.wrong_answer : s.true_answer;
  out.text = "Story: " + s.story + "\n\nQuestion: " + s.question + "\nChoose one of the following:\na) " + first +
             "\nb) " + second + "\n\nPlease answer with the letter of your choice (a or b).\nAnswer:";
  return out;
}

enum class ConditionTag { baseline, steered };

inline const char* to_string(ConditionTag c) { return c == ConditionTag::baseline ? "baseline" : "steered"; }

struct EvalResult {
  std::string scenario_id;
  bool a_holds_true_answer = true;
  double p_a = 0.5;
  double p_b = 0.5;
  char chosen = 'a';
  bool correct = false;
  ConditionTag condition_tag = ConditionTag::baseline;

  bool operator==(const EvalResult&) const = default;
};

/// Higher-probability letter wins; equal probabilities choose "a".
inline EvalResult decide(std::string scenario_id, bool a_holds_true_answer, LetterProbs probs, ConditionTag tag) {
  EvalResult r{std::move(scenario_id), a_holds_true_answer, probs.p_a, probs.p_b, 'a', false, tag};
  r.chosen = probs.p_b > probs.p_a ? 'b' : 'a';
  r.correct = (r.chosen == 'a') == a_holds_true_answer;
  return r;
}

struct EvalSet {
  std::vector<EvalResult> results;  // ordered by scenario id
  std::size_t n_correct = 0;
  double accuracy = 0.0;
};

inline EvalSet evaluate_set(const ToyLM& model, const std::vector<Scenario>& scenarios,
                            const ActiveSteering* steering, std::uint64_t seed, unsigned jobs = 1,
                            const LetterTokens& letters = LetterTokens::bytes()) {
  if (scenarios.empty()) throw Error("tom-eval", "empty scenario list");
  const auto tag = steering ? ConditionTag::steered : ConditionTag::baseline;
  EvalSet out;
  out.results.resize(scenarios.size());
  parallel_for(scenarios.size(), jobs, [&](std::size_t i) {
    const auto prompt = format_prompt(scenarios[i], seed);
    const auto tokens = ByteTokenizer::encode(prompt.text);
    const auto probs = letter_probabilities(model, tokens, letters, steering);
    out.results[i] = decide(scenarios[i].id, prompt.a_holds_true_answer, probs, tag);
  });
  std::sort(out.results.begin(), out.results.end(),
            [](const EvalResult& a, const EvalResult& b) { return a.scenario_id < b.scenario_id; });
  for (const auto& r : out.results) out.n_correct += r.correct ? 1 : 0;
  out.accuracy = static_cast<double>(out.n_correct) / static_cast<double>(out.results.size());
  return out;
}

struct ComparisonReport {
  std::size_t n = 0;
  std::size_t n_correct_baseline = 0;
  std::size_t n_correct_steered = 0;
  double acc_baseline = 0.0;
  double acc_steered = 0.0;
  std::size_t flips_to_correct = 0;
  std::size_t flips_to_incorrect = 0;
};

/// Pairs results by scenario id and counts correctness transitions.
inline ComparisonReport compare_conditions(const std::vector<EvalResult>& baseline,
                                           const std::vector<EvalResult>& steered) {
  if (baseline.size() != steered.size())
    throw Error("tom-eval", "id mismatch: " + std::to_string(baseline.size()) + " baseline vs " +
                                std::to_string(steered.size()) + " steered results");
  std::map<std::string_view, const EvalResult*> by_id;
  for (const auto& r : steered)
    if (!by_id.emplace(r.scenario_id, &r).second) throw Error("tom-eval", "duplicate scenario id " + r.scenario_id);
  ComparisonReport rep;
  rep.n = baseline.size();
  for (const auto& b : baseline) {
    const auto it = by_id.find(b.scenario_id);
    if (it == by_id.end()) throw Error("tom-eval", "id mismatch: " + b.scenario_id + " has no steered result");
    const auto& s = *it->second;
    if (s.a_holds_true_answer != b.a_holds_true_answer)
      throw Error("tom-eval", "position mismatch for scenario " + b.scenario_id);
    rep.n_correct_baseline += b.correct ? 1 : 0;
    rep.n_correct_steered += s.correct ? 1 : 0;
    if (!b.correct && s.correct) ++rep.flips_to_correct;
    if (b.correct && !s.correct) ++rep.flips_to_incorrect;
  }
  if (rep.n > 0) {
    rep.acc_baseline = static_cast<double>(rep.n_correct_baseline) / static_cast<double>(rep.n);
    rep.acc_steered = static_cast<double>(rep.n_correct_steered) / static_cast<double>(rep.n);
  }
  // n * (acc_steered - acc_baseline) == flips_to_correct - flips_to_incorrect, in counts.
  if (static_cast<long long>(rep.n_correct_steered) - static_cast<long long>(rep.n_correct_baseline) !=
      static_cast<long long>(rep.flips_to_correct) - static_cast<long long>(rep.flips_to_incorrect))
    throw Error("tom-eval", "flip identity violated");
  return rep;
}

inline std::string results_table(const EvalSet& set) {
  std::ostringstream os;
  os << "scenario_id\tcondition\ta_holds_true\tp_a\tp_b\tchosen\tcorrect\n";
  for (const auto& r : set.results) {
    char pa[32], pb[32];
    std::snprintf(pa, sizeof pa, "%.6f", r.p_a);
    std::snprintf(pb, sizeof pb, "%.6f", r.p_b);
    os << r.scenario_id << '\t' << to_string(r.condition_tag) << '\t' << (r.a_holds_true_answer ? 1 : 0) << '\t'
       << pa << '\t' << pb << '\t' << r.chosen << '\t' << (r.correct ? 1 : 0) << '\n';
  }
  return os.str();
}

inline nlohmann::json to_json(const ComparisonReport& r) {
  return {{"n", r.n},
          {"n_correct_baseline", r.n_correct_baseline},
          {"n_correct_steered", r.n_correct_steered},
          {"acc_baseline", r.acc_baseline},
          {"acc_steered", r.acc_steered},
          {"flips_to_correct", r.flips_to_correct},
          {"flips_to_incorrect", r.flips_to_incorrect},
          {"reference", reference_run::evaluation_metadata()}};
}

inline std::string comparison_summary(const ComparisonReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "n=%zu acc_baseline=%.4f acc_steered=%.4f flips_to_correct=%zu flips_to_incorrect=%zu\n", r.n,
                r.acc_baseline, r.acc_steered, r.flips_to_correct, r.flips_to_incorrect);
  return buf;
}

}  // namespace tomdecomp
