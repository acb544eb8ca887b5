#pragma once

// Pipeline stages behind the command-line tool. Every stage reads and writes
// files under the configured output root and returns a one-line summary.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tomdecomp/activation_store.hpp"
#include "tomdecomp/decomposition.hpp"
#include "tomdecomp/probe.hpp"
#include "tomdecomp/report.hpp"
#include "tomdecomp/steering.hpp"
#include "tomdecomp/synthetic_text.hpp"
#include "tomdecomp/taxonomy.hpp"
#include "tomdecomp/tom_eval.hpp"
#include "tomdecomp/toy_lm.hpp"

namespace tomdecomp {

namespace fs = std::filesystem;

struct PipelineConfig {
  fs::path out = "tomdecomp-out";
  std::uint64_t seed = 0;
  unsigned jobs = 1;

  // Paths; empty means the default location under `out`.
  fs::path taxonomy;
  fs::path model;
  fs::path dataset;
  fs::path probes;
  fs::path vectors;
  fs::path scenarios;
  fs::path triplets;
  fs::path report;

  // gen-synthetic
  std::string synthetic_mode = "toy";  // toy | gaussian
  std::size_t n_per_class = 12;
  double class_separation = 4.0;
  std::size_t gaussian_hidden_dim = 32;
  std::size_t gaussian_layers = 1;
  ToyLMConfig model_config;
  std::size_t n_scenarios = 50;
  std::size_t n_triplets = 40;
  double train_fraction = 0.8;

  // train-probes
  TrainConfig train;
  std::string probe_layers = "all";

  // build-steering / eval-tom / decompose
  std::string steering_layers = "auto";
  double multiplier = 1.0;
  SteeringMode steering_mode = SteeringMode::mean_diff;
  PositionPolicy positions = PositionPolicy::all_positions;

  // decompose / report
  std::string window = "auto";
  double threshold = 0.5;
  std::size_t top_k = 10;
  std::string formats = "table,structured,figure";

  fs::path model_path() const { return model.empty() ? out / "model.tlm" : model; }
  fs::path dataset_path() const { return dataset.empty() ? out / "activations.actv" : dataset; }
  fs::path probes_path() const { return probes.empty() ? out / "probes" : probes; }
  fs::path vectors_path() const { return vectors.empty() ? out / "steering" : vectors; }
  fs::path scenarios_path() const { return scenarios.empty() ? out / "scenarios.jsonl" : scenarios; }
  fs::path triplets_path() const { return triplets.empty() ? out / "triplets.jsonl" : triplets; }
  fs::path report_path() const { return report.empty() ? out / "decomposition.json" : report; }

  Taxonomy load_tax() const {
    return taxonomy.empty() ? load_taxonomy() : load_taxonomy(std::optional<fs::path>(taxonomy));
  }
};

/// Parses "all", "auto", "a-b" or "a,b,c" into layer indices. "auto" maps
/// `auto_first..auto_last` on the 0..30 reference depth onto `n_layers`.
inline std::vector<std::size_t> parse_layers(const std::string& spec, std::size_t n_capture_points,
                                             std::size_t auto_first, std::size_t auto_last) {
  std::vector<std::size_t> out;
  if (spec == "all") {
    for (std::size_t l = 0; l < n_capture_points; ++l) out.push_back(l);
    return out;
  }
  if (spec == "auto") return AnalysisWindow::scaled(auto_first, auto_last, n_capture_points - 1).layers();
  try {
    if (const auto dash = spec.find('-'); dash != std::string::npos) {
      const auto a = std::stoul(spec.substr(0, dash)), b = std::stoul(spec.substr(dash + 1));
      if (a > b) throw Error("cli", "empty layer range " + spec);
      for (auto l = a; l <= b; ++l) out.push_back(l);
    } else {
      std::stringstream ss(spec);
      std::string item;
      while (std::getline(ss, item, ',')) out.push_back(std::stoul(item));
    }
  } catch (const std::logic_error&) {
    throw Error("cli", "cannot parse layer list \"" + spec + "\"");
  }
  for (auto l : out)
    if (l >= n_capture_points)
      throw Error("cli", "layer " + std::to_string(l) + " outside 0.." + std::to_string(n_capture_points - 1));
  if (out.empty()) throw Error("cli", "empty layer list \"" + spec + "\"");
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline AnalysisWindow resolve_window(const PipelineConfig& cfg, std::size_t n_capture_points) {
  const auto layers =
      parse_layers(cfg.window, n_capture_points, reference_run::kAnalysisFirst, reference_run::kAnalysisLast);
  for (std::size_t i = 1; i < layers.size(); ++i)
    if (layers[i] != layers[i - 1] + 1) throw Error("cli", "analysis window must be a contiguous range");
  return {layers.front(), layers.back()};
}

inline void require_file(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw Error("cli", std::string("missing ") + what + " " + p.string());
}

inline std::uint64_t positions_seed(const PipelineConfig& cfg) { return derive_seed(cfg.seed, "positions"); }

inline std::string stage_gen_prompts(const PipelineConfig& cfg) {
  const auto tax = cfg.load_tax();
  std::string out;
  std::size_t n = 0;
  for (const auto& a : tax)
    for (auto d : kDomains) {
      out += nlohmann::json{{"action", a.name}, {"domain", d}, {"prompt", emit_generation_prompt(a, d)}}.dump() +
             "\n";
      ++n;
    }
  const auto path = cfg.out / "generation_prompts.jsonl";
  binio::write_file(path, out, "taxonomy");
  return "gen-prompts: wrote " + std::to_string(n) + " prompts to " + path.string();
}

/// Final-token residuals at every capture point for each text.
inline std::vector<Matrix> collect_residuals(const ToyLM& model, const std::vector<std::string>& texts,
                                             unsigned jobs) {
  std::vector<Matrix> out(texts.size());
  parallel_for(texts.size(), jobs, [&](std::size_t i) { out[i] = model.forward(std::string_view(texts[i])).residuals; });
  return out;
}

inline std::string stage_gen_synthetic(const PipelineConfig& cfg) {
  const auto tax = cfg.load_tax();
  ActivationDataset ds;
  std::ostringstream summary;
  if (cfg.synthetic_mode == "gaussian") {
    SyntheticSpec spec{cfg.n_per_class, cfg.gaussian_hidden_dim, cfg.gaussian_layers, cfg.class_separation,
                       derive_seed(cfg.seed, "gen-synthetic")};
    ds = gen_synthetic_activations(spec, tax);
    summary << "gen-synthetic: gaussian dataset";
  } else if (cfg.synthetic_mode == "toy") {
    auto mc = cfg.model_config;
    mc.init_seed = derive_seed(cfg.seed, "model");
    const ToyLM model(mc);
    model.save(cfg.model_path());

    const auto texts = synthetic::labeled_narratives(tax, cfg.n_per_class);
    std::vector<std::string> raw;
    for (const auto& t : texts) raw.push_back(t.text);
    const auto residuals = collect_residuals(model, raw, cfg.jobs);
    ds.n_layers = mc.n_layers + 1;
    ds.hidden_dim = mc.hidden_dim;
    ds.source = "toy-lm narratives seed=" + std::to_string(cfg.seed);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      ActivationRecord r;
      r.id = texts[i].id;
      r.label = texts[i].action;
      r.category = to_string(texts[i].category);
      r.text_hash = fnv1a64(texts[i].text);
      r.values.reserve(residuals[i].data.size());
      for (double v : residuals[i].data) r.values.push_back(static_cast<float>(v));
      ds.records.push_back(std::move(r));
    }
    save_scenarios(synthetic::false_belief_scenarios(cfg.n_scenarios), cfg.scenarios_path());
    std::string trip;
    for (const auto& t : synthetic::belief_triplets(cfg.n_triplets)) trip += to_json(t).dump() + "\n";
    binio::write_file(cfg.triplets_path(), trip, "steering");
    summary << "gen-synthetic: toy model " << cfg.model_path().string() << ", " << cfg.n_scenarios
            << " scenarios, " << cfg.n_triplets << " triplets, narrative activations";
  } else {
    throw Error("cli", "unknown synthetic mode \"" + cfg.synthetic_mode + "\" (toy|gaussian)");
  }
  ds = split_dataset(std::move(ds), cfg.train_fraction, derive_seed(cfg.seed, "split"));
  const auto ws = write_dataset(ds, cfg.dataset_path());
  summary << " (" << ws.n_records << " records, " << ds.n_layers << " layers x " << ds.hidden_dim << ") -> "
          << cfg.dataset_path().string();
  return summary.str();
}

inline std::string stage_train_probes(const PipelineConfig& cfg) {
  require_file(cfg.dataset_path(), "dataset");
  const auto tax = cfg.load_tax();
  const auto ds = read_dataset(cfg.dataset_path());
  validate_labels(ds, action_names(tax));
  std::set<std::string> present;
  for (const auto& r : ds.records)
    if (r.label) present.insert(*r.label);
  std::vector<std::string> actions;
  for (const auto& a : tax)
    if (present.contains(a.name)) actions.push_back(a.name);
  const auto layers = parse_layers(cfg.probe_layers, ds.n_layers, reference_run::kAnalysisFirst,
                                   reference_run::kAnalysisLast);
  auto tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, "train-probes");
  const auto suite = train_suite(ds, actions, layers, tc, cfg.jobs);
  save_suite(suite, cfg.probes_path());
  binio::write_file(cfg.probes_path() / "report.tsv", probe_report(suite), "probe");
  std::ostringstream os;
  os << "train-probes: " << suite.probes.size() << " probes (" << actions.size() << " actions x " << layers.size()
     << " layers), mean AUC " << format_fixed(suite.mean_auc()) << ", mean F1 " << format_fixed(suite.mean_f1())
     << " -> " << cfg.probes_path().string();
  return os.str();
}

inline std::string stage_build_steering(const PipelineConfig& cfg) {
  require_file(cfg.model_path(), "model");
  require_file(cfg.triplets_path(), "triplets");
  const auto model = ToyLM::load(cfg.model_path());
  const auto set = load_triplets(cfg.triplets_path());
  if (set.triplets.empty()) throw Error("steering", "no triplets in " + cfg.triplets_path().string());

  std::vector<std::string> pos_texts, neg_texts;
  for (const auto& t : set.triplets) {
    pos_texts.push_back(synthetic::completion_text(t, t.positive));
    neg_texts.push_back(synthetic::completion_text(t, t.negative));
  }
  const auto pos_res = collect_residuals(model, pos_texts, cfg.jobs);
  const auto neg_res = collect_residuals(model, neg_texts, cfg.jobs);
  const std::size_t n_points = model.config().n_layers + 1, d = model.config().hidden_dim;
  std::vector<Matrix> pos(n_points, Matrix(set.triplets.size(), d)), neg = pos;
  for (std::size_t i = 0; i < set.triplets.size(); ++i)
    for (std::size_t l = 0; l < n_points; ++l) {
      std::copy_n(pos_res[i].row(l).begin(), d, pos[l].row(i).begin());
      std::copy_n(neg_res[i].row(l).begin(), d, neg[l].row(i).begin());
    }
  SteeringConfig sc;
  sc.layers = parse_layers(cfg.steering_layers, n_points, reference_run::kSteeringFirst, reference_run::kSteeringLast);
  sc.mode = cfg.steering_mode;
  const auto vectors = build_steering_vectors(pos, neg, sc);
  save_vectors(vectors, cfg.vectors_path());
  std::ostringstream os;
  os << "build-steering: " << vectors.size() << " " << to_string(sc.mode) << " vectors from " << set.triplets.size()
     << " triplets (" << set.n_false_belief << " false / " << set.n_true_belief << " true), layers "
     << sc.layers.front() << ".." << sc.layers.back() << " -> " << cfg.vectors_path().string();
  return os.str();
}

inline std::string stage_eval_tom(const PipelineConfig& cfg) {
  require_file(cfg.model_path(), "model");
  require_file(cfg.scenarios_path(), "scenarios");
  const auto model = ToyLM::load(cfg.model_path());
  const auto scenarios = load_scenarios(cfg.scenarios_path());
  const auto vectors = load_vectors(cfg.vectors_path());
  const ActiveSteering steer{vectors, cfg.multiplier, cfg.positions};
  const auto seed = positions_seed(cfg);
  const auto base = evaluate_set(model, scenarios, nullptr, seed, cfg.jobs);
  const auto steered = evaluate_set(model, scenarios, &steer, seed, cfg.jobs);
  const auto cmp = compare_conditions(base.results, steered.results);
  std::string table = results_table(base);
  table += results_table(steered).substr(table.find('\n') + 1);
  binio::write_file(cfg.out / "eval" / "results.tsv", table, "tom-eval");
  auto summary = to_json(cmp);
  summary["multiplier"] = cfg.multiplier;
  binio::write_file(cfg.out / "eval" / "summary.json", summary.dump(2) + "\n", "tom-eval");
  return "eval-tom: " + comparison_summary(cmp).substr(0, comparison_summary(cmp).size() - 1);
}

inline DeltaReport run_decomposition(const PipelineConfig& cfg) {
  require_file(cfg.model_path(), "model");
  require_file(cfg.scenarios_path(), "scenarios");
  require_file(cfg.probes_path() / "index.json", "probes");
  require_file(cfg.vectors_path() / "index.json", "steering vectors");
  const auto tax = cfg.load_tax();
  const auto model = ToyLM::load(cfg.model_path());
  const auto scenarios = load_scenarios(cfg.scenarios_path());
  const auto probes = load_suite(cfg.probes_path());
  const auto vectors = load_vectors(cfg.vectors_path());
  const auto window = resolve_window(cfg, model.config().n_layers + 1);
  const ActiveSteering steer{vectors, cfg.multiplier, cfg.positions};
  const auto seed = positions_seed(cfg);
  const auto base = capture_all(model, scenarios, probes, tax, nullptr, window, seed, cfg.jobs);
  const auto steered = capture_all(model, scenarios, probes, tax, &steer, window, seed, cfg.jobs);
  return compute_deltas(base, steered, tax, window, cfg.threshold, cfg.top_k);
}

inline std::string stage_decompose(const PipelineConfig& cfg) {
  const auto rep = run_decomposition(cfg);
  binio::write_file(cfg.report_path(), to_json(rep).dump(2) + "\n", "decomposition");
  std::ostringstream os;
  os << "decompose: " << rep.n_scenarios << " scenarios, window " << rep.window.first << ".." << rep.window.last
     << ", " << rep.actions.size() << " actions -> " << cfg.report_path().string();
  return os.str();
}

inline std::string stage_report(const PipelineConfig& cfg) {
  const auto rep = load_delta_report(cfg.report_path());
  std::vector<fs::path> written;
  std::stringstream ss(cfg.formats);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto files = emit_report(rep, parse_report_format(item), cfg.out / "report");
    written.insert(written.end(), files.begin(), files.end());
  }
  return "report: wrote " + std::to_string(written.size()) + " files under " + (cfg.out / "report").string();
}

}  // namespace tomdecomp
