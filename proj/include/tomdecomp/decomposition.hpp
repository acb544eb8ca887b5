#pragma once

// Layer-count decomposition: probe confidences at three timepoints under
// baseline and steered forwards, layer counts over an analysis window, and
// per-action / per-category mean differences (steered - baseline).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tomdecomp/binary_io.hpp"
#include "tomdecomp/core.hpp"
#include "tomdecomp/probe.hpp"
#include "tomdecomp/reference.hpp"
#include "tomdecomp/taxonomy.hpp"
#include "tomdecomp/tom_eval.hpp"
#include "tomdecomp/toy_lm.hpp"

namespace tomdecomp {

enum class Timepoint { at_question, after_true_answer, after_wrong_answer };

inline constexpr std::array<Timepoint, 3> kTimepoints = {Timepoint::at_question, Timepoint::after_true_answer,
                                                         Timepoint::after_wrong_answer};

inline const char* to_string(Timepoint t) {
  switch (t) {
    case Timepoint::at_question: return "at_question";
    case Timepoint::after_true_answer: return "after_true_answer";
    case Timepoint::after_wrong_answer: return "after_wrong_answer";
  }
  return "";
}

/// Inclusive range of capture layers.
struct AnalysisWindow {
  std::size_t first = reference_run::kAnalysisFirst;
  std::size_t last = reference_run::kAnalysisLast;

  std::size_t size() const { return last - first + 1; }

  std::vector<std::size_t> layers() const {
    std::vector<std::size_t> out;
    for (auto l = first; l <= last; ++l) out.push_back(l);
    return out;
  }

  /// Maps a window over the 0..30 reference depth onto a model whose capture
  /// points run 0..n_layers: each bound becomes ceil(bound * n_layers / 30).
  static AnalysisWindow scaled(std::size_t first, std::size_t last, std::size_t n_layers) {
    const auto ref = static_cast<std::size_t>(reference_run::kCaptureLayers - 1);
    auto scale = [&](std::size_t l) { return (l * n_layers + ref - 1) / ref; };
    return {scale(first), scale(last)};
  }
};

struct TimepointCapture {
  std::string scenario_id;
  Timepoint timepoint = Timepoint::at_question;
  ConditionTag condition_tag = ConditionTag::baseline;
  Matrix confidences;  // actions (taxonomy order) x window layers

  bool operator==(const TimepointCapture&) const = default;
};

/// Question prompt, and the same prompt followed by each answer.
inline std::array<std::string, 3> timepoint_prompts(const Scenario& s, std::uint64_t seed) {
  const auto q = format_prompt(s, seed).text;
  return {q, q + " " + s.true_answer, q + " " + s.wrong_answer};
}

inline void check_probe_coverage(const ProbeSuite& probes, const Taxonomy& tax, const AnalysisWindow& window) {
  for (const auto& a : tax)
    for (auto l : window.layers())
      if (!probes.find(a.name, l))
        throw Error("decomposition", "missing probe for (" + a.name + ", layer " + std::to_string(l) + ")");
}

inline std::array<TimepointCapture, 3> capture_timepoints(const ToyLM& model, const Scenario& scenario,
                                                          const ProbeSuite& probes, const Taxonomy& tax,
                                                          const ActiveSteering* steering,
                                                          const AnalysisWindow& window, std::uint64_t seed) {
  check_probe_coverage(probes, tax, window);
  if (window.last > model.config().n_layers)
    throw Error("decomposition", "analysis window ends at layer " + std::to_string(window.last) +
                                     " but the model has capture points 0.." +
                                     std::to_string(model.config().n_layers));
  const auto prompts = timepoint_prompts(scenario, seed);
  const auto layers = window.layers();
  // The answer prompts extend the question prompt, so its keys and values
  // are computed once. Final-position steering would inject at the question's
  // last token, which a full forward over an answer prompt does not do.
  const bool reuse = !steering || steering->positions == PositionPolicy::all_positions;
  PrefixCache question;
  std::array<TimepointCapture, 3> out;
  for (std::size_t t = 0; t < 3; ++t) {
    PrefixCache extended = question;
    const auto trace = !reuse   ? model.forward(std::string_view(prompts[t]), steering)
                       : t == 0 ? model.forward(std::string_view(prompts[t]), steering, &question)
                                : model.forward(std::string_view(prompts[t]), steering, &extended);
    auto& cap = out[t];
    cap.scenario_id = scenario.id;
    cap.timepoint = kTimepoints[t];
    cap.condition_tag = steering ? ConditionTag::steered : ConditionTag::baseline;
    cap.confidences = Matrix(tax.size(), layers.size());
    for (std::size_t a = 0; a < tax.size(); ++a)
      for (std::size_t k = 0; k < layers.size(); ++k)
        cap.confidences(a, k) = predict(*probes.find(tax[a].name, layers[k]), trace.residuals.row(layers[k]));
  }
  return out;
}

/// Captures for every scenario, three per scenario in scenario order.
inline std::vector<TimepointCapture> capture_all(const ToyLM& model, const std::vector<Scenario>& scenarios,
                                                 const ProbeSuite& probes, const Taxonomy& tax,
                                                 const ActiveSteering* steering, const AnalysisWindow& window,
                                                 std::uint64_t seed, unsigned jobs = 1) {
  check_probe_coverage(probes, tax, window);
  std::vector<std::array<TimepointCapture, 3>> per(scenarios.size());
  parallel_for(scenarios.size(), jobs, [&](std::size_t i) {
    per[i] = capture_timepoints(model, scenarios[i], probes, tax, steering, window, seed);
  });
  std::vector<TimepointCapture> out;
  out.reserve(3 * scenarios.size());
  for (auto& caps : per)
    for (auto& c : caps) out.push_back(std::move(c));
  return out;
}

/// Number of layers whose confidence exceeds `threshold`.
inline std::size_t layer_count(std::span<const double> confidences, double threshold = 0.5) {
  return static_cast<std::size_t>(
      std::count_if(confidences.begin(), confidences.end(), [&](double c) { return c > threshold; }));
}

struct DeltaCell {
  double delta = 0.0;     // mean(steered - baseline)
  double baseline = 0.0;  // mean baseline layer count
  double steered = 0.0;   // mean steered layer count
  std::size_t n = 0;

  bool operator==(const DeltaCell&) const = default;
};

struct ActionDelta {
  std::string action;
  Category category = Category::Analytical;
  std::array<DeltaCell, 3> cells;

  bool operator==(const ActionDelta&) const = default;
};

struct CategoryDelta {
  Category category = Category::Analytical;
  std::size_t n_actions = 0;
  std::array<DeltaCell, 3> cells;  // means over member actions

  bool operator==(const CategoryDelta&) const = default;
};

struct Mover {
  std::string action;
  double delta = 0.0;

  bool operator==(const Mover&) const = default;
};

struct DeltaReport {
  double threshold = 0.5;
  AnalysisWindow window;
  std::size_t n_scenarios = 0;
  std::vector<ActionDelta> actions;
  std::vector<CategoryDelta> categories;
  std::array<std::vector<Mover>, 3> top_increases;
  std::array<std::vector<Mover>, 3> top_decreases;

  bool operator==(const DeltaReport& o) const {
    return threshold == o.threshold && window.first == o.window.first && window.last == o.window.last &&
           n_scenarios == o.n_scenarios && actions == o.actions && categories == o.categories &&
           top_increases == o.top_increases && top_decreases == o.top_decreases;
  }
};

/// Category rows: arithmetic means of the member actions' cells, summed in
/// the order the actions appear.
inline std::vector<CategoryDelta> category_means(const std::vector<ActionDelta>& actions) {
  std::vector<CategoryDelta> out;
  for (auto cat : kCategories) {
    CategoryDelta row{cat, 0, {}};
    for (const auto& a : actions) {
      if (a.category != cat) continue;
      ++row.n_actions;
      for (std::size_t t = 0; t < 3; ++t) {
        row.cells[t].delta += a.cells[t].delta;
        row.cells[t].baseline += a.cells[t].baseline;
        row.cells[t].steered += a.cells[t].steered;
        row.cells[t].n = a.cells[t].n;
      }
    }
    if (row.n_actions == 0) continue;
    const double n = static_cast<double>(row.n_actions);
    for (auto& c : row.cells) {
      c.delta /= n;
      c.baseline /= n;
      c.steered /= n;
    }
    out.push_back(row);
  }
  return out;
}

inline DeltaReport compute_deltas(const std::vector<TimepointCapture>& baseline,
                                  const std::vector<TimepointCapture>& steered, const Taxonomy& tax,
                                  const AnalysisWindow& window, double threshold = 0.5, std::size_t top_k = 10) {
  using Key = std::pair<std::string, int>;
  std::map<Key, const TimepointCapture*> base_by_key, steer_by_key;
  const std::array<std::pair<const std::vector<TimepointCapture>*, std::map<Key, const TimepointCapture*>*>, 2>
      sides{{{&baseline, &base_by_key}, {&steered, &steer_by_key}}};
  for (const auto& [side, dst_ptr] : sides) {
    auto& dst = *dst_ptr;
    for (const auto& c : *side) {
      if (c.confidences.rows != tax.size() || c.confidences.cols != window.size())
        throw Error("decomposition", "capture for " + c.scenario_id + " has shape " +
                                         std::to_string(c.confidences.rows) + "x" +
                                         std::to_string(c.confidences.cols) + ", expected " +
                                         std::to_string(tax.size()) + "x" + std::to_string(window.size()));
      if (!dst.emplace(Key{c.scenario_id, static_cast<int>(c.timepoint)}, &c).second)
        throw Error("decomposition", "duplicate capture for " + c.scenario_id + " at " + to_string(c.timepoint));
    }
  }
  for (const auto& [key, c] : base_by_key)
    if (!steer_by_key.contains(key))
      throw Error("decomposition", "unpaired capture: " + key.first + " at " +
                                       to_string(static_cast<Timepoint>(key.second)) + " has no steered match");
  for (const auto& [key, c] : steer_by_key)
    if (!base_by_key.contains(key))
      throw Error("decomposition", "unpaired capture: " + key.first + " at " +
                                       to_string(static_cast<Timepoint>(key.second)) + " has no baseline match");

  DeltaReport rep;
  rep.threshold = threshold;
  rep.window = window;
  std::set<std::string> scenario_ids;
  for (const auto& [key, c] : base_by_key) scenario_ids.insert(key.first);
  rep.n_scenarios = scenario_ids.size();

  // Integer sums per (action, timepoint); means taken once at the end.
  struct Sums {
    long long base = 0, steer = 0;
    std::size_t n = 0;
  };
  std::vector<std::array<Sums, 3>> sums(tax.size());
  for (const auto& [key, b] : base_by_key) {
    const auto* s = steer_by_key.at(key);
    for (std::size_t a = 0; a < tax.size(); ++a) {
      auto& cell = sums[a][static_cast<std::size_t>(key.second)];
      cell.base += static_cast<long long>(layer_count(b->confidences.row(a), threshold));
      cell.steer += static_cast<long long>(layer_count(s->confidences.row(a), threshold));
      ++cell.n;
    }
  }
  for (std::size_t a = 0; a < tax.size(); ++a) {
    ActionDelta row{tax[a].name, tax[a].category, {}};
    for (std::size_t t = 0; t < 3; ++t) {
      const auto& s = sums[a][t];
      if (s.n == 0) continue;
      const double n = static_cast<double>(s.n);
      row.cells[t] = {static_cast<double>(s.steer - s.base) / n, static_cast<double>(s.base) / n,
                      static_cast<double>(s.steer) / n, s.n};
    }
    rep.actions.push_back(std::move(row));
  }
  rep.categories = category_means(rep.actions);

  for (std::size_t t = 0; t < 3; ++t) {
    std::vector<Mover> movers;
    for (const auto& row : rep.actions) movers.push_back({row.action, row.cells[t].delta});
    auto up = movers, down = movers;
    std::stable_sort(up.begin(), up.end(), [](const Mover& a, const Mover& b) { return a.delta > b.delta; });
    std::stable_sort(down.begin(), down.end(), [](const Mover& a, const Mover& b) { return a.delta < b.delta; });
    std::erase_if(up, [](const Mover& m) { return !(m.delta > 0.0); });
    std::erase_if(down, [](const Mover& m) { return !(m.delta < 0.0); });
    if (up.size() > top_k) up.resize(top_k);
    if (down.size() > top_k) down.resize(top_k);
    rep.top_increases[t] = std::move(up);
    rep.top_decreases[t] = std::move(down);
  }
  return rep;
}

}  // namespace tomdecomp
