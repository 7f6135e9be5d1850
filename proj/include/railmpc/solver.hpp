#pragma once

// Solver entry points over MixedIntegerProgram: simplex LP solves, a
// best-bound branch-and-bound for integrality, feasibility checking of
// arbitrary points, and a CSV solution dump. Deterministic throughout:
// most-fractional branching with lowest-index tie-break, children explored
// in creation order, no randomized state.

#include <chrono>
#include <cmath>
#include <fstream>
#include <queue>
#include <string>
#include <tuple>
#include <vector>

#include "railmpc/simplex.hpp"

namespace railmpc {

struct SolverConfig {
  double feas_tol = 1e-6;
  double int_tol = 1e-5;
  double gap_tol = 1e-6;        // relative gap at which branching stops
  double time_limit_s = 240.0;  // wall-clock budget per solve
  std::int64_t max_nodes = 0;   // 0: unlimited; deterministic truncation for tests
  int max_lp_iterations = 0;    // 0: derived from size
  bool trace_bounds = false;    // record the global bound after each node
};

struct SolveResult {
  SolveStatus status = SolveStatus::NumericalFailure;
  std::vector<double> solution;  // empty when no point is available
  double objective = 0.0;
  double best_bound = 0.0;
  double gap = 0.0;              // (objective - bound) / max(1, |objective|)
  std::int64_t nodes = 0;
  double wall_seconds = 0.0;
  std::vector<double> bound_trace;  // filled when config.trace_bounds

  bool has_solution() const { return !solution.empty(); }
};

struct FeasibilityReport {
  bool feasible = true;
  double worst_violation = 0.0;
  std::string worst_constraint;
};

// Row-by-row and bound-by-bound check of an arbitrary point.
inline FeasibilityReport check_feasible(const MixedIntegerProgram& prog,
                                        const std::vector<double>& point,
                                        double feas_tol = 1e-6) {
  if (static_cast<int>(point.size()) != prog.n_vars())
    throw std::invalid_argument("point dimension mismatch");
  FeasibilityReport rep;
  auto consider = [&](double violation, const std::string& where) {
    if (violation > rep.worst_violation) {
      rep.worst_violation = violation;
      rep.worst_constraint = where;
    }
  };
  for (const auto& row : prog.rows) {
    double lhs = 0.0;
    for (const auto& [j, a] : row.terms) lhs += a * point[j];
    double v = row.rel == Relation::Equal ? std::fabs(lhs - row.rhs) : lhs - row.rhs;
    if (v > 0.0) consider(v, row.name);
  }
  for (int j = 0; j < prog.n_vars(); ++j) {
    const auto& var = prog.variables[j];
    if (point[j] < var.lower) consider(var.lower - point[j], var.name + " lower bound");
    if (point[j] > var.upper) consider(point[j] - var.upper, var.name + " upper bound");
  }
  rep.feasible = rep.worst_violation <= feas_tol;
  return rep;
}

namespace detail {

inline LpOptions lp_options(const SolverConfig& cfg) {
  LpOptions opt;
  opt.feas_tol = cfg.feas_tol;
  opt.max_iterations = cfg.max_lp_iterations;
  return opt;
}

}  // namespace detail

// Solves the continuous relaxation; integrality marks, if any, are ignored.
inline SolveResult solve_lp(const MixedIntegerProgram& prog, const SolverConfig& cfg = {}) {
  auto t0 = std::chrono::steady_clock::now();
  LpOutcome lp = solve_lp_relaxation(prog, detail::lp_options(cfg));
  SolveResult res;
  res.status = lp.status;
  res.nodes = 1;
  if (lp.status == SolveStatus::Optimal) {
    res.solution = std::move(lp.x);
    res.objective = lp.objective;
    res.best_bound = lp.objective;
    res.gap = 0.0;
  }
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

// Best-bound branch-and-bound over LP relaxations. On timeout the incumbent
// is returned with the honest remaining gap.
inline SolveResult solve_milp(const MixedIntegerProgram& prog, const SolverConfig& cfg = {}) {
  auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  std::vector<int> int_vars;
  for (int j = 0; j < prog.n_vars(); ++j)
    if (prog.variables[j].integral) int_vars.push_back(j);

  SolveResult res;
  struct Node {
    double bound;        // parent LP objective: lower bound for the subtree
    std::int64_t id;     // creation order, tie-break
    std::vector<double> lower, upper;
  };
  struct NodeOrder {
    bool operator()(const Node& a, const Node& b) const {
      return std::tie(a.bound, a.id) > std::tie(b.bound, b.id);
    }
  };
  std::priority_queue<Node, std::vector<Node>, NodeOrder> open;

  Node root;
  root.bound = -detail::kInf;
  root.id = 0;
  root.lower.resize(prog.n_vars());
  root.upper.resize(prog.n_vars());
  for (int j = 0; j < prog.n_vars(); ++j) {
    root.lower[j] = prog.variables[j].lower;
    root.upper[j] = prog.variables[j].upper;
  }
  open.push(std::move(root));

  double incumbent_obj = detail::kInf;
  std::vector<double> incumbent;
  std::int64_t next_id = 1;
  bool hit_time = false, hit_nodes = false, numerical = false;
  double bound_floor = -detail::kInf;  // largest popped bound so far

  while (!open.empty()) {
    if (elapsed() > cfg.time_limit_s) {
      hit_time = true;
      break;
    }
    if (cfg.max_nodes > 0 && res.nodes >= cfg.max_nodes) {
      hit_nodes = true;
      break;
    }
    Node node = open.top();
    open.pop();
    const double prune_eps = std::max(1e-9, cfg.gap_tol * std::max(1.0, std::fabs(incumbent_obj)));
    if (node.bound >= incumbent_obj - prune_eps && !incumbent.empty()) {
      // best-bound order: every remaining node is at least as bad
      bound_floor = incumbent_obj;
      break;
    }
    ++res.nodes;
    bound_floor = std::max(bound_floor, node.bound);
    if (cfg.trace_bounds)
      res.bound_trace.push_back(std::min(bound_floor, incumbent_obj));

    LpOutcome lp = solve_lp_relaxation(prog, node.lower, node.upper, detail::lp_options(cfg));
    if (lp.status == SolveStatus::NumericalFailure) {
      numerical = true;
      break;
    }
    if (lp.status == SolveStatus::Infeasible) continue;
    if (lp.status == SolveStatus::Unbounded) {
      res.status = SolveStatus::Unbounded;
      res.wall_seconds = elapsed();
      return res;
    }
    if (lp.objective >= incumbent_obj - prune_eps && !incumbent.empty()) continue;

    int branch_var = -1;
    double branch_frac = cfg.int_tol;
    for (int j : int_vars) {
      double f = lp.x[j] - std::floor(lp.x[j]);
      double dist = std::min(f, 1.0 - f);
      if (dist > branch_frac) {  // strictly greater: ties keep the lowest index
        branch_frac = dist;
        branch_var = j;
      }
    }
    if (branch_var < 0) {
      if (lp.objective < incumbent_obj) {
        incumbent_obj = lp.objective;
        incumbent = lp.x;
      }
      continue;
    }
    double pivot = lp.x[branch_var];
    Node down = node;
    down.bound = lp.objective;
    down.id = next_id++;
    down.upper[branch_var] = std::floor(pivot);
    Node up = std::move(node);
    up.bound = lp.objective;
    up.id = next_id++;
    up.lower[branch_var] = std::ceil(pivot);
    if (down.lower[branch_var] <= down.upper[branch_var]) open.push(std::move(down));
    if (up.lower[branch_var] <= up.upper[branch_var]) open.push(std::move(up));
  }

  res.wall_seconds = elapsed();
  if (numerical && incumbent.empty()) {
    res.status = SolveStatus::NumericalFailure;
    return res;
  }
  double open_bound = open.empty() ? incumbent_obj : std::max(bound_floor, open.top().bound);
  if (incumbent.empty()) {
    if (hit_time || hit_nodes || numerical) {
      res.status = SolveStatus::FeasibleTimeLimit;  // budget exhausted, no point yet
      res.best_bound = open_bound;
      res.gap = detail::kInf;
      return res;
    }
    res.status = SolveStatus::Infeasible;
    return res;
  }
  res.solution = std::move(incumbent);
  res.objective = incumbent_obj;
  res.best_bound = std::min(open_bound, incumbent_obj);
  res.gap = (res.objective - res.best_bound) / std::max(1.0, std::fabs(res.objective));
  bool interrupted = hit_time || hit_nodes || numerical;
  res.status = !interrupted || res.gap <= cfg.gap_tol ? SolveStatus::Optimal
                                                      : SolveStatus::FeasibleTimeLimit;
  if (cfg.trace_bounds) res.bound_trace.push_back(res.best_bound);
  return res;
}

// Solution dump for external verification: one `name,value` row per variable.
inline void dump_solution_csv(const MixedIntegerProgram& prog,
                              const std::vector<double>& solution, const std::string& path) {
  if (static_cast<int>(solution.size()) != prog.n_vars())
    throw std::invalid_argument("solution dimension mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileFormatError("cannot open for writing: " + path);
  out << "variable,value\n";
  for (int j = 0; j < prog.n_vars(); ++j)
    out << csv_escape(prog.variables[j].name) << "," << format_double(solution[j]) << "\n";
}

}  // namespace railmpc
