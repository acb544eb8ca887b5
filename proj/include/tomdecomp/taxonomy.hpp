#pragma once

// The 45-action cognitive taxonomy, generation-prompt emission and the
// synthetic Gaussian activation generator used as a desk-scale oracle.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tomdecomp/activation_store.hpp"
#include "tomdecomp/core.hpp"

namespace tomdecomp {

enum class Category { Metacognitive, Analytical, Creative, Emotional, Memory };

inline constexpr std::array<Category, 5> kCategories = {Category::Metacognitive, Category::Analytical,
                                                        Category::Creative, Category::Emotional, Category::Memory};

inline const char* to_string(Category c) {
  switch (c) {
    case Category::Metacognitive: return "Metacognitive";
    case Category::Analytical: return "Analytical";
    case Category::Creative: return "Creative";
    case Category::Emotional: return "Emotional";
    case Category::Memory: return "Memory";
  }
  return "";
}

inline std::optional<Category> parse_category(std::string_view s) {
  for (auto c : kCategories)
    if (s == to_string(c)) return c;
  return std::nullopt;
}

struct CognitiveAction {
  std::string name;
  Category category;
  std::string description;

  bool operator==(const CognitiveAction&) const = default;
};

using Taxonomy = std::vector<CognitiveAction>;

/// Appended to every text before final-token extraction.
inline constexpr std::string_view kProbeSuffix = "The cognitive action being demonstrated here is";

inline constexpr std::array<std::string_view, 20> kDomains = {
    "work",          "school",        "daily life",  "cooking",   "shopping",
    "exercise",      "reading",       "writing",     "planning",  "learning",
    "organizing",    "problem-solving", "hobbies",   "personal goals", "time management",
    "finances",      "health",        "relationships", "home projects", "travel"};

inline Taxonomy default_taxonomy() {
  using C = Category;
  return {
      {"reconsidering", C::Metacognitive, "reconsidering a belief or decision"},
      {"updating_beliefs", C::Metacognitive, "updating mental models or beliefs"},
      {"suspending_judgment", C::Metacognitive, "suspending judgment and staying with uncertainty"},
      {"meta_awareness", C::Metacognitive, "reflecting on one's own thinking process"},
      {"metacognitive_monitoring", C::Metacognitive, "tracking one's own comprehension"},
      {"metacognitive_regulation", C::Metacognitive, "adjusting thinking strategies"},
      {"self_questioning", C::Metacognitive, "interrogating one's own understanding"},

      {"noticing", C::Analytical, "noticing a pattern, feeling, or dynamic"},
      {"pattern_recognition", C::Analytical, "recognizing recurring patterns across situations"},
      {"zooming_out", C::Analytical, "zooming out for broader context"},
      {"zooming_in", C::Analytical, "zooming in on specific details"},
      {"questioning", C::Analytical, "questioning an assumption or belief"},
      {"abstracting", C::Analytical, "abstracting from specifics to general patterns"},
      {"concretizing", C::Analytical, "making abstract concepts concrete and specific"},
      {"connecting", C::Analytical, "connecting disparate ideas or experiences"},
      {"distinguishing", C::Analytical, "distinguishing between previously conflated concepts"},
      {"perspective_taking", C::Analytical, "taking another's perspective or temporal view"},
      {"convergent_thinking", C::Analytical, "finding the single best solution"},
      {"understanding", C::Analytical, "interpreting and explaining meaning"},
      {"applying", C::Analytical, "using knowledge in new situations"},
      {"analyzing", C::Analytical, "breaking down into components"},
      {"evaluating", C::Analytical, "making judgments about value or effectiveness"},
      {"cognition_awareness", C::Analytical, "becoming aware and comprehending"},

      {"creating", C::Creative, "generating new ideas or solutions"},
      {"divergent_thinking", C::Creative, "generating multiple creative solutions"},
      {"hypothesis_generation", C::Creative, "generating possible explanations"},
      {"counterfactual_reasoning", C::Creative, "engaging in 'what if' thinking"},
      {"analogical_thinking", C::Creative, "drawing analogies between domains"},
      {"reframing", C::Creative, "reframing a situation or perspective"},

      {"emotional_reappraisal", C::Emotional, "reinterpreting emotional meaning"},
      {"emotion_receiving", C::Emotional, "becoming aware of emotions"},
      {"emotion_responding", C::Emotional, "actively engaging with emotions"},
      {"emotion_valuing", C::Emotional, "attaching worth to emotional experiences"},
      {"emotion_organizing", C::Emotional, "integrating conflicting emotions"},
      {"emotion_characterizing", C::Emotional, "aligning emotions with core values"},
      {"situation_selection", C::Emotional, "choosing emotional contexts deliberately"},
      {"situation_modification", C::Emotional, "changing circumstances to regulate emotion"},
      {"attentional_deployment", C::Emotional, "directing attention for emotional regulation"},
      {"response_modulation", C::Emotional, "modifying emotional expression"},
      {"emotion_perception", C::Emotional, "identifying emotions in self/others"},
      {"emotion_facilitation", C::Emotional, "using emotions to enhance thinking"},
      {"emotion_understanding", C::Emotional, "comprehending emotional complexity"},
      {"emotion_management", C::Emotional, "regulating emotions in self/others"},
      {"accepting", C::Emotional, "accepting and letting go of control"},

      {"remembering", C::Memory, "recalling relevant information or experiences"},
  };
}

inline void check_taxonomy(const Taxonomy& tax) {
  std::set<std::string_view> seen;
  for (const auto& a : tax) {
    if (a.name.empty()) throw Error("taxonomy", "action with empty name");
    if (!seen.insert(a.name).second) throw Error("taxonomy", "duplicate action name " + a.name);
  }
}

/// Built-in taxonomy when `path` is empty, otherwise a JSONL override with one
/// {name, category, description} object per line.
inline Taxonomy load_taxonomy(const std::optional<std::filesystem::path>& path = std::nullopt) {
  if (!path) return default_taxonomy();
  std::ifstream in(*path);
  if (!in) throw Error("taxonomy", "cannot open " + path->string());
  Taxonomy tax;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw Error("taxonomy", "malformed line " + std::to_string(lineno));
    }
    if (!j.is_object() || !j.contains("name") || !j.contains("category") || !j["name"].is_string() ||
        !j["category"].is_string())
      throw Error("taxonomy", "malformed line " + std::to_string(lineno) + ": need name and category");
    const auto cat_name = j["category"].get<std::string>();
    const auto cat = parse_category(cat_name);
    if (!cat) throw Error("taxonomy", "unknown category " + cat_name + " on line " + std::to_string(lineno));
    tax.push_back({j["name"].get<std::string>(), *cat, j.value("description", std::string{})});
  }
  check_taxonomy(tax);
  return tax;
}

inline std::vector<CognitiveAction> actions_in(const Taxonomy& tax, Category c) {
  std::vector<CognitiveAction> out;
  for (const auto& a : tax)
    if (a.category == c) out.push_back(a);
  return out;
}

inline const CognitiveAction& find_action(const Taxonomy& tax, std::string_view name) {
  for (const auto& a : tax)
    if (a.name == name) return a;
  throw Error("taxonomy", "unknown action " + std::string(name));
}

inline std::set<std::string> action_names(const Taxonomy& tax) {
  std::set<std::string> out;
  for (const auto& a : tax) out.insert(a.name);
  return out;
}

inline std::string with_probe_suffix(std::string_view text) {
  std::string out(text);
  out += ' ';
  out += kProbeSuffix;
  return out;
}

inline std::string emit_generation_prompt(const CognitiveAction& action, std::string_view domain,
                                          bool suffixed = false) {
  if (std::find(kDomains.begin(), kDomains.end(), domain) == kDomains.end())
    throw Error("taxonomy", "unknown domain \"" + std::string(domain) + "\"");
  std::string p;
  p += "Generate a simple, first-person example of\nsomeone ";
  p += action.description;
  p += ".\n\nAction: ";
  p += action.name;
  p += "\nDescription: ";
  p += action.description;
  p += "\nDomain: ";
  p += domain;
  p += "\n\nRequirements:\n- Write in first person (I, my, me)\n- Keep it simple and realistic\n"
       "- 2-4 sentences maximum\n- Focus on the ";
  p += action.name;
  p += " cognitive action\n- Use everyday language\n\nExample only (no explanation):";
  return suffixed ? with_probe_suffix(p) : p;
}

struct SyntheticSpec {
  std::size_t n_per_class = 200;
  std::size_t hidden_dim = 32;
  std::size_t n_layers = 1;
  double class_separation = 4.0;
  std::uint64_t seed = 0;
};

/// Class means: one seeded random unit direction per action, scaled by
/// class_separation / 2. Shared by every layer.
inline std::vector<Vector> synthetic_class_means(const SyntheticSpec& spec, std::size_t n_actions) {
  std::mt19937_64 rng(derive_seed(spec.seed, "synthetic-means"));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> means(n_actions, Vector(spec.hidden_dim));
  for (auto& m : means) {
    double n = 0.0;
    do {
      for (auto& v : m) v = normal(rng);
      n = norm2(m);
    } while (n == 0.0);
    for (auto& v : m) v *= spec.class_separation / 2.0 / n;
  }
  return means;
}

/// Per action, n_per_class records drawn from N(mean, I / hidden_dim): the
/// noise vector has unit RMS length, so class_separation is measured in units
/// of the within-class spread.
inline ActivationDataset gen_synthetic_activations(const SyntheticSpec& spec,
                                                   const std::vector<CognitiveAction>& actions) {
  if (spec.n_per_class < 2) throw Error("taxonomy", "n_per_class must be >= 2");
  if (!(spec.class_separation >= 0.0)) throw Error("taxonomy", "class_separation must be >= 0");
  if (spec.hidden_dim == 0 || spec.n_layers == 0) throw Error("taxonomy", "hidden_dim and n_layers must be >= 1");
  if (actions.empty()) throw Error("taxonomy", "no actions given");

  const auto means = synthetic_class_means(spec, actions.size());
  const double sigma = 1.0 / std::sqrt(static_cast<double>(spec.hidden_dim));
  std::mt19937_64 rng(derive_seed(spec.seed, "synthetic-samples"));
  std::normal_distribution<double> normal(0.0, 1.0);

  ActivationDataset ds;
  ds.n_layers = static_cast<std::uint32_t>(spec.n_layers);
  ds.hidden_dim = static_cast<std::uint32_t>(spec.hidden_dim);
  ds.source = "synthetic-gaussian seed=" + std::to_string(spec.seed) +
              " separation=" + std::to_string(spec.class_separation);
  ds.records.reserve(actions.size() * spec.n_per_class);
  for (std::size_t a = 0; a < actions.size(); ++a) {
    for (std::size_t i = 0; i < spec.n_per_class; ++i) {
      ActivationRecord r;
      r.id = actions[a].name + "-" + std::to_string(i);
      r.label = actions[a].name;
      r.category = to_string(actions[a].category);
      r.text_hash = fnv1a64(r.id);
      r.values.resize(spec.n_layers * spec.hidden_dim);
      for (std::size_t l = 0; l < spec.n_layers; ++l)
        for (std::size_t d = 0; d < spec.hidden_dim; ++d)
          r.values[l * spec.hidden_dim + d] = static_cast<float>(means[a][d] + sigma * normal(rng));
      ds.records.push_back(std::move(r));
    }
  }
  return ds;
}

}  // namespace tomdecomp
