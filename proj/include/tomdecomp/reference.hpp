#pragma once

// Published full-scale reference run: Gemma-3-4B, 31 capture layers, 1,000
// BigToM forward_belief_false items. Not reproducible with the toy model; the
// values travel with reports as metadata so desk-scale output can be read next
// to them.

#include <array>
#include <string_view>

#include "json.hpp"

namespace tomdecomp::reference_run {

inline constexpr std::string_view kModel = "Gemma-3-4B";
inline constexpr int kCaptureLayers = 31;  // layers 0..30
inline constexpr int kAnalysisFirst = 10;
inline constexpr int kAnalysisLast = 20;
inline constexpr int kSteeringFirst = 14;
inline constexpr int kSteeringLast = 30;

inline constexpr int kExamplesPerAction = 700;
inline constexpr int kTotalExamples = 31500;
inline constexpr int kTriplets = 752;

inline constexpr double kProbeMeanAuc = 0.78;
inline constexpr double kProbeMeanF1 = 0.68;
inline constexpr int kPeakLayer = 9;
inline constexpr double kPeakLayerAuc = 0.948;

inline constexpr int kScenarios = 1000;
inline constexpr double kBaselineAccuracy = 0.325;
inline constexpr double kSteeredAccuracy = 0.467;
inline constexpr int kFlipsToCorrect = 217;

struct NamedValue {
  std::string_view name;
  double value;
};

inline constexpr std::array<NamedValue, 7> kActionDeltas = {{
    {"emotion_perception", 1.73},
    {"hypothesis_generation", 1.63},
    {"emotion_valuing", 0.85},
    {"emotion_understanding", 0.77},
    {"questioning", -1.24},
    {"convergent_thinking", -1.13},
    {"understanding", -0.77},
}};

// A second reported set of per-action deltas, aggregated differently.
inline constexpr std::array<NamedValue, 4> kAlternateActionDeltas = {{
    {"emotion_perception", 2.23},
    {"emotion_valuing", 2.20},
    {"questioning", -0.78},
    {"convergent_thinking", -1.59},
}};

// Category deltas at (at_question, after_true_answer, after_wrong_answer).
inline constexpr std::array<double, 3> kCreativeDeltas = {0.35, 0.28, 0.24};
inline constexpr std::array<double, 3> kEmotionalDeltas = {0.35, 0.20, 0.22};
inline constexpr std::array<double, 3> kAnalyticalDeltas = {0.06, -0.19, -0.19};

/// Flips to incorrect implied by the accuracy gain and the flips to correct.
inline constexpr int implied_flips_to_incorrect() {
  // n * (acc_steered - acc_baseline) in whole items: 1000 * 0.142 = 142.
  const int net_gain = static_cast<int>((kSteeredAccuracy - kBaselineAccuracy) * kScenarios + 0.5);
  return kFlipsToCorrect - net_gain;
}

inline nlohmann::json probe_metadata() {
  return {{"model", kModel},           {"mean_auc", kProbeMeanAuc}, {"mean_f1", kProbeMeanF1},
          {"peak_layer", kPeakLayer},  {"peak_layer_auc", kPeakLayerAuc},
          {"note", "full-scale reference values; not expected at desk scale"}};
}

inline nlohmann::json evaluation_metadata() {
  return {{"model", kModel},
          {"n", kScenarios},
          {"acc_baseline", kBaselineAccuracy},
          {"acc_steered", kSteeredAccuracy},
          {"flips_to_correct", kFlipsToCorrect},
          {"flips_to_incorrect_implied", implied_flips_to_incorrect()},
          {"note", "full-scale reference values; not expected at desk scale"}};
}

inline nlohmann::json decomposition_metadata() {
  nlohmann::json deltas = nlohmann::json::object(), alt = nlohmann::json::object();
  for (const auto& d : kActionDeltas) deltas[std::string(d.name)] = d.value;
  for (const auto& d : kAlternateActionDeltas) alt[std::string(d.name)] = d.value;
  return {{"model", kModel},
          {"analysis_layers", {kAnalysisFirst, kAnalysisLast}},
          {"action_deltas", deltas},
          {"alternate_action_deltas", alt},
          {"category_deltas",
           {{"Creative", kCreativeDeltas}, {"Emotional", kEmotionalDeltas}, {"Analytical", kAnalyticalDeltas}}},
          {"note", "full-scale reference values; not expected at desk scale"}};
}

}  // namespace tomdecomp::reference_run
