#pragma once

// Closed-loop machinery: data acquisition from exact MPC solves, ensemble
// formation by closed-loop evaluation, online inference with the feasibility
// fallback chain, the rolling-horizon simulator, and the gap/time comparison
// report. Episodes are independent and deterministic given (scenario, seed),
// so everything here can fan out across threads without changing results.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "railmpc/classifier.hpp"
#include "railmpc/dataset.hpp"
#include "railmpc/flow.hpp"
#include "railmpc/mip.hpp"
#include "railmpc/reduction.hpp"
#include "railmpc/solver.hpp"

namespace railmpc {

enum class Method { ExactMilp, LearningLpFullState, LearningLpReducedState };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::ExactMilp: return "exact-milp";
    case Method::LearningLpFullState: return "learning-lp-full-state";
    case Method::LearningLpReducedState: return "learning-lp-reduced-state";
  }
  return "unknown";
}

inline std::vector<int> decided_route_indices(const LineNetwork& net) {
  std::vector<int> out;
  const auto routes = net.routes();
  for (std::size_t r = 0; r < routes.size(); ++r)
    if (routes[r].origin_depot >= 0) out.push_back(static_cast<int>(r));
  return out;
}

// Applies the first horizon cycle of a solved plan: passengers advance
// through the simulator, compositions roll over, depot ledgers settle
// (arrivals credit the yard, then departures draw from it).
struct AppliedStep {
  SystemState next;
  StepRecord record;
};

inline AppliedStep apply_plan_step(const Scenario& sc, const SystemState& st, int horizon,
                                   const DiscretePlan& plan, const ContinuousPlan& cont) {
  const auto routes = sc.network.routes();
  const int P = static_cast<int>(sc.network.platforms.size());
  std::vector<int> route_of(static_cast<std::size_t>(P), -1);
  for (std::size_t r = 0; r < routes.size(); ++r)
    for (int p : routes[r].platforms) route_of[static_cast<std::size_t>(p)] = static_cast<int>(r);

  std::vector<ServiceRealization> schedule(static_cast<std::size_t>(P));
  for (int p = 0; p < P; ++p) {
    const int r = route_of[static_cast<std::size_t>(p)];
    ServiceRealization& sr = schedule[static_cast<std::size_t>(p)];
    sr.departure = cont.departure[static_cast<std::size_t>(p)][0];
    sr.arrival = cont.arrival[static_cast<std::size_t>(p)][0];
    sr.dwell = cont.dwell[static_cast<std::size_t>(p)][0];
    sr.headway = cont.headway[static_cast<std::size_t>(p)][0];
    sr.composition = plan.compositions[static_cast<std::size_t>(r)][0];
    sr.composition_changed =
        p == routes[static_cast<std::size_t>(r)].origin() &&
        plan.compositions[static_cast<std::size_t>(r)][0] != st.route_composition[static_cast<std::size_t>(r)];
  }
  StepResult sim = step_passengers(st.queues, st.kappa0, schedule, sc.flows, sc.network,
                                   sc.costs.unit_capacity);
  std::vector<int> comps(routes.size());
  for (std::size_t r = 0; r < routes.size(); ++r) comps[r] = plan.compositions[r][0];
  std::vector<int> units = st.depot_units;
  for (std::size_t d = 0; d < sc.network.depots.size(); ++d) {
    int delta = 0;
    for (std::size_t r = 0; r < routes.size(); ++r) {
      if (routes[r].terminus_depot == static_cast<int>(d)) delta += comps[r];
      if (routes[r].origin_depot == static_cast<int>(d)) delta -= comps[r];
    }
    units[d] += delta;
    if (units[d] < 0 || units[d] > sc.network.depots[d].units_max)
      throw ModelError("depot ledger left [0, units_max]; the applied plan was infeasible");
  }
  AppliedStep out;
  out.record.service = st.kappa0;
  out.record.schedule = std::move(schedule);
  out.record.passengers = sim.passengers;
  out.next = make_system_state(sc, st.kappa0 + 1, horizon, sim.next_queue, std::move(comps),
                               std::move(units));
  return out;
}

// --- Data acquisition ---------------------------------------------------------

struct RawSample {
  SystemState state;
  std::vector<int> labels;  // optimal composition per (decided route, cycle)
  std::uint32_t episode = 0;
  std::uint32_t step = 0;
};

struct AcquireStats {
  int episodes_completed = 0;
  int episodes_discarded = 0;
};

// Exact-MPC rollouts from random states; every visited state is labeled with
// the optimal discrete decision before the loop advances with it. Episodes
// hitting an unsolvable step are dropped whole and counted.
inline std::vector<RawSample> acquire_raw(const Scenario& sc, int n_episodes, int n_steps,
                                          int horizon, const SolverConfig& solver_cfg,
                                          const BuildOptions& build, std::uint64_t seed,
                                          AcquireStats& stats, int jobs = 1,
                                          bool random_phase = true) {
  const auto decided = decided_route_indices(sc.network);
  std::vector<std::vector<RawSample>> per_episode(static_cast<std::size_t>(n_episodes));
  std::vector<char> discarded(static_cast<std::size_t>(n_episodes), 0);
  run_parallel(jobs, static_cast<std::size_t>(n_episodes), [&](std::size_t e) {
    std::mt19937_64 rng = make_rng(seed, 0xda7a, e);
    SystemState st = random_state(sc, horizon, rng, n_steps, random_phase);
    std::vector<RawSample> acc;
    for (int step = 0; step < n_steps; ++step) {
      BuiltProgram built = build_full_mip(st, sc, horizon, build);
      SolveResult res = solve_milp(built.program, solver_cfg);
      if (!res.has_solution()) {
        discarded[e] = 1;
        return;
      }
      auto [dplan, cplan] = extract_plans(built, res.solution);
      RawSample sample;
      sample.state = st;
      sample.episode = static_cast<std::uint32_t>(e);
      sample.step = static_cast<std::uint32_t>(step);
      for (int r : decided)
        for (int j = 0; j < horizon; ++j)
          sample.labels.push_back(
              dplan.compositions[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)]);
      acc.push_back(std::move(sample));
      st = apply_plan_step(sc, st, horizon, dplan, cplan).next;
    }
    per_episode[e] = std::move(acc);
  });
  std::vector<RawSample> out;
  for (int e = 0; e < n_episodes; ++e) {
    if (discarded[static_cast<std::size_t>(e)]) {
      ++stats.episodes_discarded;
      continue;
    }
    ++stats.episodes_completed;
    for (auto& s : per_episode[static_cast<std::size_t>(e)]) out.push_back(std::move(s));
  }
  return out;
}

// Projects raw samples through a reduction config into a training dataset.
inline Dataset materialize_dataset(const Scenario& sc, const std::vector<RawSample>& samples,
                                   const ReductionConfig& reduction, int horizon,
                                   std::size_t max_records = 0) {
  const auto decided = decided_route_indices(sc.network);
  Dataset ds;
  ds.n_platforms = static_cast<int>(sc.network.platforms.size());
  ds.segments = reduction.segments;
  ds.heads = static_cast<int>(decided.size()) * horizon;
  ds.classes = sc.costs.units_max - sc.costs.units_min + 1;
  ds.units_min = sc.costs.units_min;
  ds.x_dim = samples.empty() ? 0 : static_cast<int>(samples.front().state.x_vector().size());
  ds.feature_dim = ds.x_dim + ds.n_platforms * ds.segments;
  for (const auto& s : samples) {
    if (max_records > 0 && ds.size() >= max_records) break;
    LearningState ls = to_learning_state(s.state, reduction);
    ds.push_record(ls.flat(), s.labels, s.episode, s.step);
  }
  ds.assign_split();
  return ds;
}

inline Dataset acquire_data(const Scenario& sc, int n_episodes, int n_steps, int horizon,
                            const SolverConfig& solver_cfg, const ReductionConfig& reduction,
                            std::uint64_t seed, AcquireStats* stats_out = nullptr, int jobs = 1,
                            const BuildOptions& build = {}) {
  AcquireStats stats;
  auto raw = acquire_raw(sc, n_episodes, n_steps, horizon, solver_cfg, build, seed, stats, jobs);
  if (stats_out) *stats_out = stats;
  return materialize_dataset(sc, raw, reduction, horizon);
}

// --- Online inference ----------------------------------------------------------

struct Ensemble {
  std::vector<int> indices;   // registry indices, lowest closed-loop cost first
  std::vector<double> costs;  // matching total exact costs from evaluation
};

struct InferenceOutcome {
  DiscretePlan plan;
  ContinuousPlan continuous;
  BuiltProgram built;      // the program that produced `continuous`
  SolveResult lp_result;
  std::string branch;      // network-<i> | heuristic-prev | heuristic-min | full-mip
  int networks_tried = 0;
};

// Alg.: reduce the state, walk the ensemble in cost order until a predicted
// plan gives a feasible fixed-composition LP; otherwise keep the previous
// plan, otherwise run everything at minimum size; the exact problem is the
// last resort. Feasibility of the winner implies every constraint holds and
// the timing variables are optimal for the chosen compositions.
inline InferenceOutcome online_inference(const Ensemble& ensemble,
                                         const std::vector<ClassifierModel>& models,
                                         const SystemState& st,
                                         const std::optional<DiscretePlan>& previous_plan,
                                         const Scenario& sc, int horizon,
                                         const SolverConfig& lp_cfg,
                                         const ReductionConfig& reduction,
                                         const BuildOptions& build = {}) {
  InferenceOutcome out;
  LearningState ls = to_learning_state(st, reduction);
  auto try_plan = [&](const DiscretePlan& plan) -> bool {
    BuiltProgram built = build_fixed_integer_lp(st, sc, horizon, plan, build);
    SolveResult res = solve_lp(built.program, lp_cfg);
    if (res.status != SolveStatus::Optimal) return false;
    auto [dplan, cplan] = extract_plans(built, res.solution);
    out.plan = std::move(dplan);
    out.continuous = std::move(cplan);
    out.built = std::move(built);
    out.lp_result = std::move(res);
    return true;
  };
  for (int idx : ensemble.indices) {
    ++out.networks_tried;
    DiscretePlan plan = predict(models.at(static_cast<std::size_t>(idx)), ls, st, sc.network);
    if (try_plan(plan)) {
      out.branch = "network-" + std::to_string(idx);
      return out;
    }
  }
  if (previous_plan && try_plan(shift_plan(*previous_plan))) {
    out.branch = "heuristic-prev";
    return out;
  }
  if (!previous_plan && try_plan(constant_plan(st.route_composition, horizon))) {
    out.branch = "heuristic-prev";
    return out;
  }
  std::vector<int> minimum(sc.network.routes().size(), sc.costs.units_min);
  if (try_plan(constant_plan(minimum, horizon))) {
    out.branch = "heuristic-min";
    return out;
  }
  BuiltProgram built = build_full_mip(st, sc, horizon, build);
  SolveResult res = solve_milp(built.program, lp_cfg);
  if (!res.has_solution())
    throw ModelError("model-infeasible: no composition plan admits a feasible schedule");
  auto [dplan, cplan] = extract_plans(built, res.solution);
  out.plan = std::move(dplan);
  out.continuous = std::move(cplan);
  out.built = std::move(built);
  out.lp_result = std::move(res);
  out.branch = "full-mip";
  return out;
}

// --- Closed loop -----------------------------------------------------------------

struct LearningContext {
  const std::vector<ClassifierModel>* models = nullptr;
  Ensemble ensemble;
  ReductionConfig reduction;
};

struct ClosedLoopConfig {
  int horizon = 8;
  int n_steps = 30;
  SolverConfig milp;
  SolverConfig lp;
  BuildOptions build;
  bool random_phase = true;
};

struct EpisodeStep {
  int step = 0;
  std::string branch;
  double exact_cost = 0.0;
  double linear_cost = 0.0;
  double wall_ms = 0.0;
  double worst_violation = 0.0;
};

struct Episode {
  std::uint64_t seed = 0;
  Method method = Method::ExactMilp;
  std::vector<EpisodeStep> steps;
  std::vector<StepRecord> trajectory;
  double total_exact = 0.0;
  double total_linear = 0.0;
  int fallback_steps = 0;  // steps that left the network branch
};

inline Episode run_closed_loop(const Scenario& sc, Method method, const ClosedLoopConfig& cfg,
                               std::uint64_t seed, const LearningContext* ctx = nullptr) {
  if (method != Method::ExactMilp && (ctx == nullptr || ctx->models == nullptr))
    throw std::invalid_argument("learning methods need a formed ensemble context");
  Episode ep;
  ep.seed = seed;
  ep.method = method;
  std::mt19937_64 rng = make_rng(seed, 0x5eed);
  SystemState st = random_state(sc, cfg.horizon, rng, cfg.n_steps, cfg.random_phase);
  std::optional<DiscretePlan> previous;
  for (int step = 0; step < cfg.n_steps; ++step) {
    auto t0 = std::chrono::steady_clock::now();
    DiscretePlan dplan;
    ContinuousPlan cplan;
    EpisodeStep es;
    es.step = step;
    if (method == Method::ExactMilp) {
      BuiltProgram built = build_full_mip(st, sc, cfg.horizon, cfg.build);
      SolveResult res = solve_milp(built.program, cfg.milp);
      if (!res.has_solution())
        throw ModelError("exact controller found no feasible plan (scenario bug)");
      es.branch = "milp";
      es.worst_violation = check_feasible(built.program, res.solution, cfg.milp.feas_tol)
                               .worst_violation;
      std::tie(dplan, cplan) = extract_plans(built, res.solution);
    } else {
      InferenceOutcome inf = online_inference(ctx->ensemble, *ctx->models, st, previous, sc,
                                              cfg.horizon, cfg.lp, ctx->reduction, cfg.build);
      es.branch = inf.branch;
      if (inf.branch.rfind("network-", 0) != 0) ++ep.fallback_steps;
      es.worst_violation = check_feasible(inf.built.program, inf.lp_result.solution,
                                          cfg.lp.feas_tol)
                               .worst_violation;
      dplan = std::move(inf.plan);
      cplan = std::move(inf.continuous);
    }
    es.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    AppliedStep applied = apply_plan_step(sc, st, cfg.horizon, dplan, cplan);
    es.exact_cost = step_cost(applied.record, sc.network, sc.costs, CostMode::Exact);
    es.linear_cost = step_cost(applied.record, sc.network, sc.costs, CostMode::Linear);
    ep.total_exact += es.exact_cost;
    ep.total_linear += es.linear_cost;
    ep.steps.push_back(std::move(es));
    ep.trajectory.push_back(std::move(applied.record));
    st = std::move(applied.next);
    previous = std::move(dplan);
  }
  return ep;
}

// --- Ensemble formation ------------------------------------------------------------

// Every candidate runs the same test episodes as a one-model ensemble
// (fallback heuristics included) and is scored by total exact cost. Returns
// the `keep` cheapest, costs ascending, ties to the lower registry index.
inline Ensemble form_ensemble(const std::vector<ClassifierModel>& models, const Scenario& sc,
                              int n_test, int n_steps, int keep, std::uint64_t seed,
                              const ClosedLoopConfig& base_cfg, const ReductionConfig& reduction,
                              int jobs = 1) {
  if (models.empty()) throw std::invalid_argument("need at least one trained model");
  std::vector<double> totals(models.size(), 0.0);
  run_parallel(jobs, models.size(), [&](std::size_t i) {
    LearningContext ctx;
    ctx.models = &models;
    ctx.ensemble.indices = {static_cast<int>(i)};
    ctx.ensemble.costs = {0.0};
    ctx.reduction = reduction;
    ClosedLoopConfig cfg = base_cfg;
    cfg.n_steps = n_steps;
    double total = 0.0;
    for (int e = 0; e < n_test; ++e) {
      Episode ep = run_closed_loop(sc, Method::LearningLpReducedState, cfg,
                                   seed + static_cast<std::uint64_t>(e), &ctx);
      total += ep.total_exact;
    }
    totals[i] = total;
  });
  std::vector<int> order(models.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (totals[static_cast<std::size_t>(a)] != totals[static_cast<std::size_t>(b)])
      return totals[static_cast<std::size_t>(a)] < totals[static_cast<std::size_t>(b)];
    return a < b;
  });
  Ensemble out;
  const int kept = std::min<int>(keep, static_cast<int>(order.size()));
  for (int i = 0; i < kept; ++i) {
    out.indices.push_back(order[static_cast<std::size_t>(i)]);
    out.costs.push_back(totals[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
  }
  return out;
}

// --- Reporting ---------------------------------------------------------------------

struct MethodReport {
  SummaryStats gap_pct;
  SummaryStats step_seconds;
  std::size_t episodes = 0;
};

struct ComparisonReport {
  std::string benchmark;
  std::map<std::string, MethodReport> methods;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["benchmark"] = benchmark;
    for (const auto& [name, rep] : methods) {
      nlohmann::json mj;
      mj["episodes"] = rep.episodes;
      mj["gap_pct"] = {{"mean", rep.gap_pct.mean}, {"max", rep.gap_pct.max},
                       {"std", rep.gap_pct.stddev}};
      mj["cpu_time_s"] = {{"mean", rep.step_seconds.mean}, {"max", rep.step_seconds.max},
                          {"std", rep.step_seconds.stddev}};
      j["methods"][name] = mj;
    }
    return j;
  }

  std::string to_text() const {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof(line), "%-28s | %28s | %28s\n", "Method", "Optimality gap (%)",
                  "CPU time (s)");
    out << line;
    std::snprintf(line, sizeof(line), "%-28s | %8s %9s %9s | %8s %9s %9s\n", "", "mean", "max",
                  "std", "mean", "max", "std");
    out << line;
    out << std::string(92, '-') << "\n";
    for (const auto& [name, rep] : methods) {
      std::snprintf(line, sizeof(line), "%-28s | %8.2f %9.2f %9.2f | %8.3f %9.3f %9.3f\n",
                    name.c_str(), rep.gap_pct.mean, rep.gap_pct.max, rep.gap_pct.stddev,
                    rep.step_seconds.mean, rep.step_seconds.max, rep.step_seconds.stddev);
      out << line;
    }
    return out.str();
  }
};

// Percentage optimality gap of every method against the shared-seed
// benchmark episodes, plus per-step wall-time statistics.
inline ComparisonReport compare_methods(
    const std::map<std::string, std::vector<Episode>>& by_method, const std::string& benchmark) {
  auto bench_it = by_method.find(benchmark);
  if (bench_it == by_method.end())
    throw std::invalid_argument("benchmark method '" + benchmark + "' has no episodes");
  std::map<std::uint64_t, double> bench_cost;
  for (const auto& ep : bench_it->second) bench_cost[ep.seed] = ep.total_exact;
  ComparisonReport report;
  report.benchmark = benchmark;
  for (const auto& [name, eps] : by_method) {
    MethodReport rep;
    rep.episodes = eps.size();
    std::vector<double> gaps, times;
    for (const auto& ep : eps) {
      auto it = bench_cost.find(ep.seed);
      if (it != bench_cost.end()) {
        double denom = std::max(std::fabs(it->second), 1e-12);
        gaps.push_back(100.0 * (ep.total_exact - it->second) / denom);
      }
      for (const auto& s : ep.steps) times.push_back(s.wall_ms / 1000.0);
    }
    rep.gap_pct = summarize(gaps);
    rep.step_seconds = summarize(times);
    report.methods[name] = rep;
  }
  return report;
}

// Episode log: one row per step.
inline void write_episode_csv(const std::vector<Episode>& episodes, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileFormatError("cannot open for writing: " + path);
  out << "seed,step,method,branch,exact_cost,linear_cost,wall_ms,worst_violation\n";
  for (const auto& ep : episodes)
    for (const auto& s : ep.steps)
      out << ep.seed << "," << s.step << "," << method_name(ep.method) << ","
          << csv_escape(s.branch) << "," << format_double(s.exact_cost) << ","
          << format_double(s.linear_cost) << "," << format_double(s.wall_ms) << ","
          << format_double(s.worst_violation) << "\n";
}

// Dataset accounting in the (dimension, points, bytes) layout.
struct DatasetAccounting {
  std::string label;
  int state_dimension = 0;
  std::size_t points = 0;
  std::size_t bytes = 0;
};

inline std::string render_accounting(const std::vector<DatasetAccounting>& rows) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s %16s %16s %14s\n", "State", "State dimension",
                "Number of points", "Bytes");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-10s %16d %16zu %14zu\n", r.label.c_str(),
                  r.state_dimension, r.points, r.bytes);
    out << line;
  }
  return out.str();
}

}  // namespace railmpc
