// Command-line front end. Subcommands mirror the experiment stages:
//   generate | train | ensemble | simulate | compare
// Flags mirror ExperimentConfig; a JSON file passed with --config overrides
// whatever the flags set. RAILMPC_OUT relocates the output root.

#include <functional>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "railmpc/cli.hpp"

int main(int argc, char** argv) {
  using namespace railmpc;
  CLI::App app{"learning-guided MPC for urban-rail train rescheduling"};
  app.require_subcommand(1);

  ExperimentConfig cfg;
  std::string config_path;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config; its values override flags");
    cmd->add_option("--scenario", cfg.scenario_path, "scenario file (default: synthesize)");
    cmd->add_option("--out", cfg.out_dir, "output directory");
    cmd->add_option("--platforms", cfg.platforms_per_direction, "platforms per direction");
    cmd->add_option("--control-step", cfg.control_step_s, "control step T in seconds");
    cmd->add_option("--scenario-seed", cfg.scenario_seed, "demand seed");
    cmd->add_option("--span", cfg.span_slots, "scenario span in service slots");
    cmd->add_option("--horizon", cfg.horizon, "prediction horizon N_p in cycles");
    cmd->add_option("--segments", cfg.segments, "reduction segments N_s");
    cmd->add_option("--segment-length", cfg.segment_length, "reduction segment length H");
    cmd->add_option("--jobs", cfg.jobs, "worker threads for independent episodes/models");
    cmd->add_option("--milp-gap-tol", cfg.milp.gap_tol, "relative gap tolerance for exact solves");
    cmd->add_option("--milp-time-limit", cfg.milp.time_limit_s, "seconds per exact solve");
    cmd->add_option("--lp-time-limit", cfg.lp.time_limit_s, "seconds per fixed-plan solve");
  };

  CLI::App* generate = app.add_subcommand("generate", "scenario + labeled datasets + accounting");
  add_common(generate);
  generate->add_option("--episodes", cfg.episodes, "acquisition episodes");
  generate->add_option("--steps", cfg.steps_per_episode, "steps per acquisition episode");
  generate->add_option("--data-seed", cfg.data_seed, "acquisition seed");
  generate->add_option("--byte-budget", cfg.byte_budget,
                       "cap each dataset at this many payload bytes (0 = keep all)");

  CLI::App* train_cmd = app.add_subcommand("train", "hyperparameter grid -> model registry");
  add_common(train_cmd);
  train_cmd->add_option("--lr-grid", cfg.grid_learning_rates, "learning rates");
  train_cmd->add_option("--hidden-grid", cfg.grid_hidden, "hidden sizes");
  train_cmd->add_option("--dropout-grid", cfg.grid_dropout, "dropout rates");
  train_cmd->add_option("--mask-grid", cfg.grid_mask, "output masking flags (0/1)");
  train_cmd->add_option("--schedule-grid", cfg.grid_schedule, "lr schedule flags (0/1)");
  train_cmd->add_option("--epochs", cfg.epochs, "training epochs");
  train_cmd->add_option("--batch-size", cfg.batch_size, "minibatch size");
  train_cmd->add_option("--train-seed", cfg.train_seed, "base seed for the grid");

  CLI::App* ensemble = app.add_subcommand("ensemble", "rank models by closed-loop cost");
  add_common(ensemble);
  ensemble->add_option("--test-episodes", cfg.ensemble_test_episodes, "episodes per model");
  ensemble->add_option("--ensemble-steps", cfg.ensemble_steps, "steps per test episode");
  ensemble->add_option("--keep", cfg.keep, "ensemble size");
  ensemble->add_option("--ensemble-seed", cfg.ensemble_seed, "shared test seed");

  CLI::App* simulate = app.add_subcommand("simulate", "closed-loop episodes on paired seeds");
  add_common(simulate);
  simulate->add_option("--eval-episodes", cfg.eval_episodes, "episodes per method");
  simulate->add_option("--eval-steps", cfg.eval_steps, "steps per episode");
  simulate->add_option("--eval-seed", cfg.eval_seed_base, "first evaluation seed");
  simulate->add_option("--methods", cfg.methods, "methods to run");

  CLI::App* compare = app.add_subcommand("compare", "gap/time report against exact-milp");
  add_common(compare);
  compare->add_option("--methods", cfg.methods, "methods to include");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    if (generate->parsed()) return cmd_generate(cfg);
    if (train_cmd->parsed()) return cmd_train(cfg);
    if (ensemble->parsed()) return cmd_ensemble(cfg);
    if (simulate->parsed()) return cmd_simulate(cfg);
    if (compare->parsed()) return cmd_compare(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
