#pragma once

// Experiment commands behind the command-line tool: generate (scenario +
// datasets), train (hyperparameter grid -> model registry), ensemble
// (closed-loop ranking), simulate (the three controllers on paired seeds)
// and compare (gap/time report). Every artifact lands under the output
// directory; the RAILMPC_OUT environment variable relocates the output root
// and is the only environment dependency.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "railmpc/pipeline.hpp"
#include "railmpc/scenario_io.hpp"

namespace railmpc {

struct ExperimentConfig {
  std::string scenario_path;  // empty: synthesize into the output directory
  std::string out_dir = "out";

  // scenario synthesis
  int platforms_per_direction = 2;
  std::int64_t control_step_s = 240;  // T; also the timetable cycle
  std::uint64_t scenario_seed = 0;
  std::int64_t span_slots = 96;

  // horizon and state reduction
  int horizon = 8;        // N_p
  int segments = 4;       // N_s
  int segment_length = 2; // H

  // data acquisition
  int episodes = 24;
  int steps_per_episode = 6;
  std::uint64_t data_seed = 11;
  std::size_t byte_budget = 0;  // 0: keep everything; else cap each dataset

  // training grid
  std::vector<double> grid_learning_rates{1e-2, 1e-3};
  std::vector<int> grid_hidden{16, 32};
  std::vector<double> grid_dropout{0.0};
  std::vector<int> grid_mask{1};
  std::vector<int> grid_schedule{1};
  int epochs = 40;
  int batch_size = 32;
  std::uint64_t train_seed = 1000;

  // ensemble formation
  int ensemble_test_episodes = 3;
  int ensemble_steps = 6;
  int keep = 5;
  std::uint64_t ensemble_seed = 77;

  // evaluation
  int eval_episodes = 20;
  int eval_steps = 8;
  std::uint64_t eval_seed_base = 500;
  std::vector<std::string> methods{"exact-milp", "learning-lp-full-state",
                                   "learning-lp-reduced-state"};

  SolverConfig milp;
  SolverConfig lp;
  BuildOptions build;
  int jobs = 1;
};

namespace cli_detail {

inline std::filesystem::path out_root(const ExperimentConfig& cfg) {
  const char* env = std::getenv("RAILMPC_OUT");
  if (env != nullptr && *env != '\0') return std::filesystem::path(env) / cfg.out_dir;
  return std::filesystem::path(cfg.out_dir);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileFormatError("cannot open for writing: " + path.string());
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileFormatError("cannot open: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void check_reduction_fits(const ExperimentConfig& cfg) {
  if (cfg.segments * cfg.segment_length > cfg.horizon)
    throw std::invalid_argument(
        "reduction window segments*segment_length exceeds the horizon; "
        "lower --segments/--segment-length or raise --horizon");
}

}  // namespace cli_detail

// Loads the configured scenario, or synthesizes and persists one.
inline Scenario prepare_scenario(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::path root = cli_detail::out_root(cfg);
  fs::create_directories(root);
  Scenario sc;
  if (!cfg.scenario_path.empty()) {
    sc = load_scenario(cfg.scenario_path);
  } else {
    fs::path path = root / "scenario.json";
    std::int64_t margin = cfg.horizon + cfg.steps_per_episode + cfg.eval_steps + 2;
    sc = build_synthetic_network(cfg.platforms_per_direction, cfg.control_step_s,
                                 cfg.scenario_seed, cfg.span_slots, margin);
    save_scenario(sc, path.string());
  }
  auto violations = validate(sc);
  if (!violations.empty()) {
    std::ostringstream msg;
    msg << "scenario failed validation:";
    for (const auto& v : violations) msg << "\n  [" << v.field << "] " << v.entity << ": " << v.message;
    throw std::invalid_argument(msg.str());
  }
  return sc;
}

// generate: exact-MPC rollouts labeled with optimal compositions, projected
// into the reduced-state and full-state datasets, plus the accounting table.
inline int cmd_generate(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  cli_detail::check_reduction_fits(cfg);
  Scenario sc = prepare_scenario(cfg);
  fs::path root = cli_detail::out_root(cfg);

  AcquireStats stats;
  auto raw = acquire_raw(sc, cfg.episodes, cfg.steps_per_episode, cfg.horizon, cfg.milp,
                         cfg.build, cfg.data_seed, stats, cfg.jobs);
  if (raw.empty()) throw ModelError("data acquisition produced no samples");

  const ReductionConfig reduced{cfg.segments, cfg.segment_length};
  const ReductionConfig full = full_resolution_config(cfg.horizon);
  auto cap = [&](const ReductionConfig& rc) -> std::size_t {
    if (cfg.byte_budget == 0) return 0;
    Dataset probe = materialize_dataset(sc, {raw.front()}, rc, cfg.horizon);
    return std::max<std::size_t>(1, cfg.byte_budget / probe.record_bytes());
  };
  Dataset ds_full = materialize_dataset(sc, raw, full, cfg.horizon, cap(full));
  Dataset ds_reduced = materialize_dataset(sc, raw, reduced, cfg.horizon, cap(reduced));
  save_dataset(ds_full, (root / "dataset_full.rmds").string());
  save_dataset(ds_reduced, (root / "dataset_reduced.rmds").string());

  std::vector<DatasetAccounting> rows;
  rows.push_back({"Full", ds_full.feature_dim, ds_full.size(),
                  fs::file_size(root / "dataset_full.rmds")});
  rows.push_back({"Reduced", ds_reduced.feature_dim, ds_reduced.size(),
                  fs::file_size(root / "dataset_reduced.rmds")});
  nlohmann::json acc;
  acc["episodes_completed"] = stats.episodes_completed;
  acc["episodes_discarded"] = stats.episodes_discarded;
  for (const auto& r : rows)
    acc["datasets"][r.label] = {{"state_dimension", r.state_dimension},
                                {"points", r.points},
                                {"bytes", r.bytes}};
  cli_detail::write_text(root / "accounting.json", acc.dump(2) + "\n");
  cli_detail::write_text(root / "accounting.txt", render_accounting(rows));
  std::cout << render_accounting(rows);
  if (stats.episodes_discarded > 0)
    std::cout << "discarded episodes: " << stats.episodes_discarded << "\n";
  return 0;
}

struct VariantNames {
  std::string variant;   // "reduced" | "full"
  std::string dataset;
  std::string leaderboard;
  std::string ensemble;
  std::string model_prefix;
};

inline VariantNames variant_names(const std::string& variant) {
  return {variant, "dataset_" + variant + ".rmds", "leaderboard_" + variant + ".json",
          "ensemble_" + variant + ".json", "model_" + variant + "_"};
}

inline std::vector<ClassifierModel> load_model_registry(const std::filesystem::path& root,
                                                        const std::string& variant) {
  const VariantNames names = variant_names(variant);
  std::vector<ClassifierModel> models;
  for (int i = 0;; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%02d.rmnn", names.model_prefix.c_str(), i);
    std::filesystem::path p = root / buf;
    if (!std::filesystem::exists(p)) break;
    models.push_back(load_model(p.string()));
  }
  if (models.empty())
    throw FileFormatError("no models found for variant '" + variant +
                          "' under " + root.string() + "; run the train command first");
  return models;
}

// train: the hyperparameter grid on both dataset variants; models are
// persisted in grid order, the leaderboard is sorted by validation loss.
inline int cmd_train(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  Scenario sc = prepare_scenario(cfg);
  fs::path root = cli_detail::out_root(cfg);
  const int decided = static_cast<int>(decided_route_indices(sc.network).size());
  std::vector<bool> masks, schedules;
  for (int v : cfg.grid_mask) masks.push_back(v != 0);
  for (int v : cfg.grid_schedule) schedules.push_back(v != 0);
  auto grid = hyperparameter_grid(cfg.grid_learning_rates, cfg.grid_hidden, cfg.grid_dropout,
                                  masks, schedules, cfg.epochs, cfg.batch_size, cfg.train_seed);
  for (const std::string variant : {"reduced", "full"}) {
    const VariantNames names = variant_names(variant);
    fs::path ds_path = root / names.dataset;
    if (!fs::exists(ds_path))
      throw FileFormatError("missing " + ds_path.string() + "; run the generate command first");
    Dataset ds = load_dataset(ds_path.string());
    std::vector<TrainResult> results(grid.size());
    run_parallel(cfg.jobs, grid.size(),
                 [&](std::size_t i) { results[i] = train(ds, grid[i], decided, cfg.horizon); });
    nlohmann::json board = nlohmann::json::array();
    for (std::size_t i = 0; i < results.size(); ++i) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s%02zu.rmnn", names.model_prefix.c_str(), i);
      save_model(results[i].model, (root / buf).string());
      nlohmann::json entry;
      entry["index"] = i;
      entry["file"] = std::string(buf);
      entry["valid_loss"] = results[i].metrics.final_valid_loss;
      entry["train_loss"] = results[i].metrics.final_train_loss;
      entry["valid_accuracy"] = results[i].metrics.valid_accuracy;
      entry["train_accuracy"] = results[i].metrics.train_accuracy;
      entry["hidden_size"] = grid[i].hidden_size;
      entry["learning_rate"] = grid[i].learning_rate;
      entry["dropout"] = grid[i].dropout;
      entry["mask_outputs"] = grid[i].mask_outputs;
      entry["lr_schedule"] = grid[i].lr_schedule;
      board.push_back(entry);
    }
    std::sort(board.begin(), board.end(), [](const nlohmann::json& a, const nlohmann::json& b) {
      double la = a.at("valid_loss").get<double>(), lb = b.at("valid_loss").get<double>();
      if (la != lb) return la < lb;
      return a.at("index").get<int>() < b.at("index").get<int>();
    });
    cli_detail::write_text(root / names.leaderboard, board.dump(2) + "\n");
    std::cout << variant << ": trained " << grid.size() << " configurations; best valid loss "
              << board.front().at("valid_loss").get<double>() << "\n";
  }
  return 0;
}

inline ReductionConfig variant_reduction(const ExperimentConfig& cfg, const std::string& variant) {
  if (variant == "full") return full_resolution_config(cfg.horizon);
  return ReductionConfig{cfg.segments, cfg.segment_length};
}

inline ClosedLoopConfig closed_loop_config(const ExperimentConfig& cfg, int steps) {
  ClosedLoopConfig cl;
  cl.horizon = cfg.horizon;
  cl.n_steps = steps;
  cl.milp = cfg.milp;
  cl.lp = cfg.lp;
  cl.build = cfg.build;
  return cl;
}

// ensemble: closed-loop evaluation of every trained model, keep the best.
inline int cmd_ensemble(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  cli_detail::check_reduction_fits(cfg);
  Scenario sc = prepare_scenario(cfg);
  fs::path root = cli_detail::out_root(cfg);
  for (const std::string variant : {"reduced", "full"}) {
    const VariantNames names = variant_names(variant);
    auto models = load_model_registry(root, variant);
    Ensemble ens = form_ensemble(models, sc, cfg.ensemble_test_episodes, cfg.ensemble_steps,
                                 cfg.keep, cfg.ensemble_seed,
                                 closed_loop_config(cfg, cfg.ensemble_steps),
                                 variant_reduction(cfg, variant), cfg.jobs);
    nlohmann::json j;
    j["indices"] = ens.indices;
    j["costs"] = ens.costs;
    cli_detail::write_text(root / names.ensemble, j.dump(2) + "\n");
    std::cout << variant << ": kept " << ens.indices.size() << " of " << models.size()
              << " models\n";
  }
  return 0;
}

inline Ensemble load_ensemble(const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::parse(cli_detail::read_text(path));
  Ensemble e;
  e.indices = j.at("indices").get<std::vector<int>>();
  e.costs = j.at("costs").get<std::vector<double>>();
  return e;
}

inline nlohmann::json episodes_to_json(const std::vector<Episode>& episodes) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& ep : episodes) {
    nlohmann::json ej;
    ej["seed"] = ep.seed;
    ej["method"] = method_name(ep.method);
    ej["total_exact"] = ep.total_exact;
    ej["total_linear"] = ep.total_linear;
    ej["fallback_steps"] = ep.fallback_steps;
    ej["steps"] = nlohmann::json::array();
    for (const auto& s : ep.steps)
      ej["steps"].push_back({{"step", s.step},
                             {"branch", s.branch},
                             {"exact_cost", s.exact_cost},
                             {"linear_cost", s.linear_cost},
                             {"wall_ms", s.wall_ms},
                             {"worst_violation", s.worst_violation}});
    arr.push_back(std::move(ej));
  }
  return arr;
}

inline std::vector<Episode> episodes_from_json(const nlohmann::json& arr) {
  std::vector<Episode> out;
  for (const auto& ej : arr) {
    Episode ep;
    ep.seed = ej.at("seed").get<std::uint64_t>();
    std::string m = ej.at("method").get<std::string>();
    ep.method = m == "exact-milp" ? Method::ExactMilp
                : m == "learning-lp-full-state" ? Method::LearningLpFullState
                                                : Method::LearningLpReducedState;
    ep.total_exact = ej.at("total_exact").get<double>();
    ep.total_linear = ej.at("total_linear").get<double>();
    ep.fallback_steps = ej.at("fallback_steps").get<int>();
    for (const auto& sj : ej.at("steps")) {
      EpisodeStep s;
      s.step = sj.at("step").get<int>();
      s.branch = sj.at("branch").get<std::string>();
      s.exact_cost = sj.at("exact_cost").get<double>();
      s.linear_cost = sj.at("linear_cost").get<double>();
      s.wall_ms = sj.at("wall_ms").get<double>();
      s.worst_violation = sj.at("worst_violation").get<double>();
      ep.steps.push_back(std::move(s));
    }
    out.push_back(std::move(ep));
  }
  return out;
}

// simulate: the configured methods on shared seeds, persisted per method.
inline int cmd_simulate(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  cli_detail::check_reduction_fits(cfg);
  Scenario sc = prepare_scenario(cfg);
  fs::path root = cli_detail::out_root(cfg);
  for (const std::string& mname : cfg.methods) {
    Method method;
    std::optional<std::string> variant;
    if (mname == "exact-milp") method = Method::ExactMilp;
    else if (mname == "learning-lp-full-state") {
      method = Method::LearningLpFullState;
      variant = "full";
    } else if (mname == "learning-lp-reduced-state") {
      method = Method::LearningLpReducedState;
      variant = "reduced";
    } else {
      throw std::invalid_argument("unknown method '" + mname + "'");
    }
    LearningContext ctx;
    std::vector<ClassifierModel> models;
    if (variant) {
      models = load_model_registry(root, *variant);
      fs::path epath = root / variant_names(*variant).ensemble;
      if (!fs::exists(epath))
        throw FileFormatError("missing " + epath.string() + "; run the ensemble command first");
      ctx.models = &models;
      ctx.ensemble = load_ensemble(epath);
      ctx.reduction = variant_reduction(cfg, *variant);
    }
    std::vector<Episode> episodes(static_cast<std::size_t>(cfg.eval_episodes));
    ClosedLoopConfig cl = closed_loop_config(cfg, cfg.eval_steps);
    run_parallel(cfg.jobs, episodes.size(), [&](std::size_t e) {
      episodes[e] = run_closed_loop(sc, method, cl, cfg.eval_seed_base + e,
                                    variant ? &ctx : nullptr);
    });
    cli_detail::write_text(root / ("episodes_" + mname + ".json"),
                           episodes_to_json(episodes).dump(2) + "\n");
    write_episode_csv(episodes, (root / ("episodes_" + mname + ".csv")).string());
    double mean = 0.0;
    for (const auto& ep : episodes) mean += ep.total_exact;
    std::cout << mname << ": " << episodes.size() << " episodes, mean exact cost "
              << mean / std::max<std::size_t>(1, episodes.size()) << "\n";
  }
  return 0;
}

// compare: gap/time table against the exact benchmark.
inline int cmd_compare(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::path root = cli_detail::out_root(cfg);
  std::map<std::string, std::vector<Episode>> by_method;
  for (const std::string& mname : cfg.methods) {
    fs::path p = root / ("episodes_" + mname + ".json");
    if (!fs::exists(p)) continue;
    by_method[mname] = episodes_from_json(nlohmann::json::parse(cli_detail::read_text(p)));
  }
  if (!by_method.count("exact-milp"))
    throw FileFormatError("benchmark episodes missing; run the simulate command with exact-milp");
  ComparisonReport report = compare_methods(by_method, "exact-milp");
  cli_detail::write_text(root / "report.json", report.to_json().dump(2) + "\n");
  cli_detail::write_text(root / "report.txt", report.to_text());
  for (const auto& [name, eps] : by_method)
    write_episode_csv(eps, (root / ("episodes_" + name + ".csv")).string());
  std::cout << report.to_text();
  return 0;
}

// JSON config file: any present key replaces the current value (the file
// wins over flags).
inline void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(cli_detail::read_text(path));
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("scenario_path", cfg.scenario_path);
  get("out_dir", cfg.out_dir);
  get("platforms_per_direction", cfg.platforms_per_direction);
  get("control_step_s", cfg.control_step_s);
  get("scenario_seed", cfg.scenario_seed);
  get("span_slots", cfg.span_slots);
  get("horizon", cfg.horizon);
  get("segments", cfg.segments);
  get("segment_length", cfg.segment_length);
  get("episodes", cfg.episodes);
  get("steps_per_episode", cfg.steps_per_episode);
  get("data_seed", cfg.data_seed);
  get("byte_budget", cfg.byte_budget);
  get("grid_learning_rates", cfg.grid_learning_rates);
  get("grid_hidden", cfg.grid_hidden);
  get("grid_dropout", cfg.grid_dropout);
  get("grid_mask", cfg.grid_mask);
  get("grid_schedule", cfg.grid_schedule);
  get("epochs", cfg.epochs);
  get("batch_size", cfg.batch_size);
  get("train_seed", cfg.train_seed);
  get("ensemble_test_episodes", cfg.ensemble_test_episodes);
  get("ensemble_steps", cfg.ensemble_steps);
  get("keep", cfg.keep);
  get("ensemble_seed", cfg.ensemble_seed);
  get("eval_episodes", cfg.eval_episodes);
  get("eval_steps", cfg.eval_steps);
  get("eval_seed_base", cfg.eval_seed_base);
  get("methods", cfg.methods);
  get("jobs", cfg.jobs);
  if (j.contains("milp_gap_tol")) cfg.milp.gap_tol = j.at("milp_gap_tol").get<double>();
  if (j.contains("milp_time_limit_s")) cfg.milp.time_limit_s = j.at("milp_time_limit_s").get<double>();
  if (j.contains("lp_time_limit_s")) cfg.lp.time_limit_s = j.at("lp_time_limit_s").get<double>();
}

}  // namespace railmpc
