// tomdecomp: command-line driver for the probe / steering / evaluation /
// decomposition pipeline.
//
//   tomdecomp <subcommand> [--config FILE] [--seed N] [--jobs N] [--out DIR] ...
//
// Options may be given in a TOML/INI config file; command-line flags win.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "tomdecomp/pipeline.hpp"

namespace {

using tomdecomp::PipelineConfig;

void add_options(CLI::App& app, PipelineConfig& cfg, std::string& steer_mode, std::string& positions) {
  app.add_option("--out", cfg.out, "Output root directory")->capture_default_str();
  app.add_option("--seed", cfg.seed, "Global seed; stages derive sub-seeds from it")->capture_default_str();
  app.add_option("--jobs", cfg.jobs, "Parallel jobs (output does not depend on this)")->capture_default_str();

  app.add_option("--taxonomy", cfg.taxonomy, "Taxonomy override (JSONL); built-in when empty");
  app.add_option("--model", cfg.model, "Toy model checkpoint [out/model.tlm]");
  app.add_option("--dataset", cfg.dataset, "ACTV1 dataset [out/activations.actv]");
  app.add_option("--probes", cfg.probes, "Probe suite directory [out/probes]");
  app.add_option("--vectors", cfg.vectors, "Steering vector directory [out/steering]");
  app.add_option("--scenarios", cfg.scenarios, "Scenario file (JSONL) [out/scenarios.jsonl]");
  app.add_option("--triplets", cfg.triplets, "Triplet file (JSONL) [out/triplets.jsonl]");
  app.add_option("--report", cfg.report, "Structured delta report [out/decomposition.json]");

  app.add_option("--synthetic-mode", cfg.synthetic_mode, "toy | gaussian")->capture_default_str();
  app.add_option("--n-per-class", cfg.n_per_class, "Records per action")->capture_default_str();
  app.add_option("--class-separation", cfg.class_separation, "Gaussian mode class separation")->capture_default_str();
  app.add_option("--gaussian-hidden-dim", cfg.gaussian_hidden_dim)->capture_default_str();
  app.add_option("--gaussian-layers", cfg.gaussian_layers)->capture_default_str();
  app.add_option("--n-layers", cfg.model_config.n_layers, "Toy model blocks")->capture_default_str();
  app.add_option("--hidden-dim", cfg.model_config.hidden_dim, "Toy model width")->capture_default_str();
  app.add_option("--n-heads", cfg.model_config.n_heads, "Toy model attention heads")->capture_default_str();
  app.add_option("--n-scenarios", cfg.n_scenarios)->capture_default_str();
  app.add_option("--n-triplets", cfg.n_triplets)->capture_default_str();
  app.add_option("--train-fraction", cfg.train_fraction)->capture_default_str();

  app.add_option("--lr-max", cfg.train.lr_max)->capture_default_str();
  app.add_option("--lr-min", cfg.train.lr_min)->capture_default_str();
  app.add_option("--weight-decay", cfg.train.weight_decay)->capture_default_str();
  app.add_option("--max-epochs", cfg.train.max_epochs)->capture_default_str();
  app.add_option("--patience", cfg.train.patience)->capture_default_str();
  app.add_option("--batch-size", cfg.train.batch_size)->capture_default_str();
  app.add_option("--negative-ratio", cfg.train.negative_ratio)->capture_default_str();
  app.add_option("--probe-layers", cfg.probe_layers, "all | auto | a-b | a,b,c")->capture_default_str();

  app.add_option("--steer-layers", cfg.steering_layers, "auto | a-b | a,b,c")->capture_default_str();
  app.add_option("--multiplier", cfg.multiplier, "Steering multiplier")->capture_default_str();
  app.add_option("--steer-mode", steer_mode, "mean_diff | pca_top1")->capture_default_str();
  app.add_option("--positions", positions, "all_positions | final_position")->capture_default_str();

  app.add_option("--window", cfg.window, "Analysis layers: auto | a-b")->capture_default_str();
  app.add_option("--threshold", cfg.threshold, "Presence threshold")->capture_default_str();
  app.add_option("--top-k", cfg.top_k)->capture_default_str();
  app.add_option("--formats", cfg.formats, "Report formats: table,structured,figure")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  PipelineConfig cfg;
  cfg.jobs = tomdecomp::default_jobs();
  std::string steer_mode = "mean_diff", positions = "all_positions";

  CLI::App app{"Cognitive-action decomposition of activation steering"};
  app.set_config("--config", "", "TOML/INI config file; flags override its values");
  app.fallthrough();
  app.require_subcommand(1, 1);
  add_options(app, cfg, steer_mode, positions);

  using Stage = std::string (*)(const PipelineConfig&);
  const std::map<std::string, std::pair<Stage, std::string>> stages = {
      {"gen-prompts", {tomdecomp::stage_gen_prompts, "Emit the narrative-generation prompts"}},
      {"gen-synthetic", {tomdecomp::stage_gen_synthetic, "Create a toy model and synthetic inputs"}},
      {"train-probes", {tomdecomp::stage_train_probes, "Train one-vs-rest probes per layer"}},
      {"build-steering", {tomdecomp::stage_build_steering, "Build steering vectors from triplets"}},
      {"eval-tom", {tomdecomp::stage_eval_tom, "Baseline vs steered answer ranking"}},
      {"decompose", {tomdecomp::stage_decompose, "Layer-count deltas per action and category"}},
      {"report", {tomdecomp::stage_report, "Render table / structured / figure outputs"}},
  };
  for (const auto& [name, stage] : stages) app.add_subcommand(name, stage.second);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const auto* sub = app.get_subcommands().front();
  try {
    cfg.steering_mode = tomdecomp::parse_steering_mode(steer_mode);
    cfg.positions = tomdecomp::parse_position_policy(positions);
    if (cfg.jobs == 0) cfg.jobs = 1;
    std::filesystem::create_directories(cfg.out);
    {
      std::ofstream echo(cfg.out / "effective_config.toml");
      echo << "# effective configuration for " << sub->get_name() << "\n" << app.config_to_str(true, false);
    }
    const auto summary = stages.at(sub->get_name()).first(cfg);
    std::cout << summary << std::endl;
    return 0;
  } catch (const tomdecomp::Error& e) {
    std::cerr << "tomdecomp " << sub->get_name() << ": " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "tomdecomp " << sub->get_name() << ": " << e.what() << std::endl;
    return 1;
  }
}
