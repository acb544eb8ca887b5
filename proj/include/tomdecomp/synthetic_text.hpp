#pragma once

// Template-generated texts for running the whole pipeline on the toy model:
// labeled first-person narratives per cognitive action, false-belief
// scenarios, and contrastive triplets.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tomdecomp/steering.hpp"
#include "tomdecomp/taxonomy.hpp"
#include "tomdecomp/tom_eval.hpp"

namespace tomdecomp::synthetic {

struct LabeledText {
  std::string id;
  std::string text;
  std::string action;
  Category category;
};

inline std::string narrative(const CognitiveAction& action, std::string_view domain, std::size_t variant) {
  static constexpr std::array<std::string_view, 4> kOpeners = {
      "While dealing with ", "During some ", "In the middle of ", "Thinking about "};
  static constexpr std::array<std::string_view, 4> kClosers = {
      " It changed what I did next.", " I took a moment with it.", " Then I kept going.",
      " That felt important to me."};
  std::string s(kOpeners[variant % kOpeners.size()]);
  s += domain;
  s += ", I noticed I was ";
  s += action.description;
  s += '.';
  s += kClosers[(variant / kOpeners.size()) % kClosers.size()];
  return s;
}

/// n_per_action narratives per action, domains cycling, each with the probe
/// suffix appended.
inline std::vector<LabeledText> labeled_narratives(const Taxonomy& tax, std::size_t n_per_action) {
  std::vector<LabeledText> out;
  out.reserve(tax.size() * n_per_action);
  for (std::size_t a = 0; a < tax.size(); ++a) {
    for (std::size_t i = 0; i < n_per_action; ++i) {
      const auto domain = kDomains[(i + a) % kDomains.size()];
      out.push_back({tax[a].name + "-" + std::to_string(i), with_probe_suffix(narrative(tax[a], domain, i)),
                     tax[a].name, tax[a].category});
    }
  }
  return out;
}

struct BeliefItem {
  std::string_view container;
  std::string_view original;
  std::string_view swapped;
};

inline constexpr std::array<std::string_view, 10> kNames = {"Noor", "Sam", "Ava", "Leo", "Maya",
                                                            "Omar", "Iris", "Theo", "Lena", "Ravi"};

inline constexpr std::array<BeliefItem, 8> kItems = {{
    {"milk pitcher", "oat milk", "almond milk"},
    {"jar", "sugar", "salt"},
    {"box", "crayons", "pencils"},
    {"bottle", "water", "vinegar"},
    {"basket", "apples", "pears"},
    {"tin", "cookies", "crackers"},
    {"bag", "rice", "lentils"},
    {"mug", "tea", "coffee"},
}};

struct BeliefStory {
  std::string story;
  std::string question;
  std::string believes_original;
  std::string believes_swapped;
};

inline BeliefStory belief_story(std::size_t index, bool sees_swap) {
  const std::string name(kNames[index % kNames.size()]);
  const auto& item = kItems[(index / kNames.size() + index) % kItems.size()];
  const std::string c(item.container), a(item.original), b(item.swapped);
  BeliefStory s;
  s.story = name + " fills the " + c + " with " + a + ". While " + name + " is busy, a friend swaps the " + a +
            " for " + b + ". " + name + (sees_swap ? " watches the swap happen." : " does not see the swap.");
  s.question = "Does " + name + " believe the " + c + " contains " + a + " or " + b + "?";
  s.believes_original = name + " believes the " + c + " contains " + a + ".";
  s.believes_swapped = name + " believes the " + c + " contains " + b + ".";
  return s;
}

/// Forward false-belief scenarios: the protagonist misses the swap, so the
/// true answer is the original content.
inline std::vector<Scenario> false_belief_scenarios(std::size_t n) {
  std::vector<Scenario> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = belief_story(i, false);
    char id[32];
    std::snprintf(id, sizeof id, "fb-%04zu", i);
    out.push_back({id, s.story, s.question, s.believes_original, s.believes_swapped,
                   ScenarioCondition::forward_belief_false});
  }
  return out;
}

/// Alternating false/true belief triplets; the positive completion is the
/// correct attribution in each case.
inline std::vector<ContrastiveTriplet> belief_triplets(std::size_t n, std::size_t offset = 1000) {
  std::vector<ContrastiveTriplet> out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool true_belief = i % 2 == 1;
    const auto s = belief_story(offset + i, true_belief);
    out.push_back({s.story, s.question, true_belief ? s.believes_swapped : s.believes_original,
                   true_belief ? s.believes_original : s.believes_swapped,
                   true_belief ? BeliefCondition::true_belief : BeliefCondition::false_belief});
  }
  return out;
}

/// Text whose final token is read for a triplet completion.
inline std::string completion_text(const ContrastiveTriplet& t, const std::string& completion) {
  return t.story + " " + t.question + " " + completion;
}

}  // namespace tomdecomp::synthetic
