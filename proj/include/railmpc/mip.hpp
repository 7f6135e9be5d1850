#pragma once

// Assembles the finite-horizon programs. Two variants share one core:
//
//   build_full_mip          compositions (and change flags) are integer
//                           decision variables at depot-served route origins
//   build_fixed_integer_lp  compositions are constants from a DiscretePlan;
//                           change flags and their costs collapse into
//                           constants, no integrality marks remain
//
// One service per platform per cycle. Per (platform, cycle) the builder
// emits d, tau, h plus the six passenger auxiliaries (n_before, n_depart,
// n_after, n_arrive, n_trans, and the next queue). Arrival times are
// eliminated through a = d - tau and recovered on extraction. Composition is
// one variable per (route, cycle): a train keeps its makeup along the whole
// route and can only be recomposed at a depot before departing.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "railmpc/flow.hpp"
#include "railmpc/network.hpp"
#include "railmpc/program.hpp"

namespace railmpc {

// MPC input state: queues at the current service boundary, the composition
// each route's most recent service departed with, depot inventories, and the
// horizon slice of the demand profile (rho[p][j] is the arrival rate between
// nominal departures kappa0+j and kappa0+j+1).
struct SystemState {
  std::int64_t kappa0 = 0;
  std::vector<double> queues;              // per platform
  std::vector<int> route_composition;      // per route: composition of service kappa0-1
  std::vector<int> depot_units;            // per depot
  std::vector<std::vector<double>> rho;    // per platform, length = horizon

  int horizon() const { return rho.empty() ? 0 : static_cast<int>(rho.front().size()); }

  std::vector<double> x_vector() const {
    std::vector<double> x;
    x.reserve(queues.size() + route_composition.size() + depot_units.size());
    x.insert(x.end(), queues.begin(), queues.end());
    for (int c : route_composition) x.push_back(static_cast<double>(c));
    for (int u : depot_units) x.push_back(static_cast<double>(u));
    return x;
  }
};

inline void validate_state(const SystemState& st, const Scenario& sc, int horizon) {
  const auto routes = sc.network.routes();
  if (st.queues.size() != sc.network.platforms.size())
    throw std::invalid_argument("state queues must cover every platform");
  if (st.route_composition.size() != routes.size())
    throw std::invalid_argument("state compositions must cover every route");
  if (st.depot_units.size() != sc.network.depots.size())
    throw std::invalid_argument("state depot units must cover every depot");
  for (double q : st.queues)
    if (q < 0.0) throw std::invalid_argument("negative platform queue in state");
  for (std::size_t r = 0; r < routes.size(); ++r) {
    int c = st.route_composition[r];
    if (c < sc.costs.units_min || c > sc.costs.units_max)
      throw std::invalid_argument("in-service composition outside [units_min, units_max]");
  }
  for (std::size_t d = 0; d < sc.network.depots.size(); ++d) {
    if (st.depot_units[d] < 0 || st.depot_units[d] > sc.network.depots[d].units_max)
      throw std::invalid_argument("depot inventory outside [0, units_max]");
  }
  if (st.rho.size() != sc.network.platforms.size())
    throw std::invalid_argument("state flow slice must cover every platform");
  for (const auto& r : st.rho)
    if (static_cast<int>(r.size()) != horizon)
      throw std::invalid_argument("state flow slice length must equal the horizon");
}

// Builds the state at service boundary kappa0 with explicit dynamic
// components; the flow slice is cut from the scenario profile.
inline SystemState make_system_state(const Scenario& sc, std::int64_t kappa0, int horizon,
                                     std::vector<double> queues, std::vector<int> compositions,
                                     std::vector<int> depot_units) {
  SystemState st;
  st.kappa0 = kappa0;
  st.queues = std::move(queues);
  st.route_composition = std::move(compositions);
  st.depot_units = std::move(depot_units);
  st.rho.resize(sc.network.platforms.size());
  for (std::size_t p = 0; p < sc.network.platforms.size(); ++p) {
    st.rho[p].resize(static_cast<std::size_t>(horizon));
    for (int j = 0; j < horizon; ++j)
      st.rho[p][static_cast<std::size_t>(j)] =
          sc.flows.rate(static_cast<int>(p), kappa0 + j + 1);
  }
  validate_state(st, sc, horizon);
  return st;
}

// Random in-range state: queues uniform in [0, 0.5 * capacity of the largest
// train], inventories uniform integers, compositions uniform in range. With
// random_phase the service boundary is drawn inside the profile span, so the
// demand component of the state varies across episodes as well.
inline SystemState random_state(const Scenario& sc, int horizon, std::mt19937_64& rng,
                                int steps_ahead = 0, bool random_phase = true) {
  const auto routes = sc.network.routes();
  std::int64_t max_start =
      sc.flows.span_slots + sc.flows.horizon_slots - horizon - steps_ahead - 1;
  if (max_start < 0) throw std::invalid_argument("flow profile too short for this horizon");
  std::int64_t kappa0 = 0;
  if (random_phase && max_start > 0) {
    std::uniform_int_distribution<std::int64_t> phase(0, max_start);
    kappa0 = phase(rng);
  }
  std::uniform_real_distribution<double> queue_dist(
      0.0, 0.5 * sc.costs.unit_capacity * static_cast<double>(sc.costs.units_max));
  std::vector<double> queues(sc.network.platforms.size());
  for (auto& q : queues) q = queue_dist(rng);
  std::uniform_int_distribution<int> comp_dist(sc.costs.units_min, sc.costs.units_max);
  std::vector<int> comps(routes.size());
  for (auto& c : comps) c = comp_dist(rng);
  std::vector<int> units(sc.network.depots.size());
  for (std::size_t d = 0; d < units.size(); ++d) {
    std::uniform_int_distribution<int> unit_dist(0, sc.network.depots[d].units_max);
    units[d] = unit_dist(rng);
  }
  return make_system_state(sc, kappa0, horizon, std::move(queues), std::move(comps),
                           std::move(units));
}

// Composition choice per (route, cycle). Routes without a depot at their
// origin carry their fixed in-service value in the same table.
struct DiscretePlan {
  std::vector<std::vector<int>> compositions;  // [route][cycle]

  bool operator==(const DiscretePlan& other) const {
    return compositions == other.compositions;
  }
};

inline DiscretePlan constant_plan(const std::vector<int>& per_route, int horizon) {
  DiscretePlan plan;
  plan.compositions.resize(per_route.size());
  for (std::size_t r = 0; r < per_route.size(); ++r)
    plan.compositions[r].assign(static_cast<std::size_t>(horizon), per_route[r]);
  return plan;
}

// Receding-horizon continuation of a plan: drop the applied first cycle,
// repeat the last one.
inline DiscretePlan shift_plan(const DiscretePlan& plan) {
  DiscretePlan out = plan;
  for (auto& row : out.compositions) {
    if (row.empty()) continue;
    row.erase(row.begin());
    row.push_back(row.back());
  }
  return out;
}

// Realized timing and passenger auxiliaries per (platform, cycle), plus the
// depot inventory trajectory.
struct ContinuousPlan {
  std::vector<std::vector<double>> departure, arrival, dwell, headway;
  std::vector<std::vector<double>> before, boarded, after, arrived, transferred, queue_next;
  std::vector<std::vector<double>> depot_units;  // [depot][cycle]
};

struct BuildOptions {
  double eps_strict = 1.0;       // d <= d_pre(k+1) - eps_strict (integer-second timetable)
  double departure_bias = 1e-7;  // tiny cost on (d - d_pre); makes the optimal vertex unique
};

// Program plus the builder's variable map, needed to read solutions back.
struct BuiltProgram {
  MixedIntegerProgram program;
  std::int64_t kappa0 = 0;
  int horizon = 0;
  int n_platforms = 0, n_routes = 0, n_depots = 0;
  BuildOptions options;
  std::vector<std::vector<int>> v_d, v_tau, v_h;                    // [platform][cycle]
  std::vector<std::vector<int>> v_nb, v_nd, v_na, v_nv, v_nt, v_nq;
  std::vector<std::vector<int>> ell_var, eta_var;                   // [route][cycle], -1 = fixed
  std::vector<std::vector<int>> comp_fixed;                         // value when ell_var = -1
  std::vector<std::vector<int>> eta_const;                          // value when eta_var = -1
  std::vector<std::vector<int>> v_u;                                // [depot][cycle]
};

namespace detail {

inline std::string cyc(const std::string& prefix, const std::string& id, int j) {
  return prefix + "_" + id + "_" + std::to_string(j);
}

// Forward interval propagation over departure windows; raises when dwell,
// running-time or headway requirements make some window unreachable.
inline void check_build_feasibility(const Scenario& sc, const SystemState& st, int horizon,
                                    const std::vector<Route>& routes, double eps_strict) {
  const auto& plats = sc.network.platforms;
  std::vector<std::vector<double>> d_lo(plats.size()), d_hi(plats.size());
  for (auto& v : d_lo) v.assign(static_cast<std::size_t>(horizon), 0.0);
  for (auto& v : d_hi) v.assign(static_cast<std::size_t>(horizon), 0.0);
  for (const auto& route : routes) {
    for (std::size_t pos = 0; pos < route.platforms.size(); ++pos) {
      int p = route.platforms[pos];
      const Platform& plat = plats[static_cast<std::size_t>(p)];
      int pred = pos > 0 ? route.platforms[pos - 1] : -1;
      for (int j = 0; j < horizon; ++j) {
        const double w_lo = static_cast<double>(plat.nominal_departure(st.kappa0 + j));
        const double w_hi =
            static_cast<double>(plat.nominal_departure(st.kappa0 + j + 1)) - eps_strict;
        if (w_lo > w_hi)
          throw ModelError("empty departure window at " + plat.id +
                           "; cycle shorter than the strictness margin");
        double a_lo = -1e18, a_hi = 1e18;
        if (pred >= 0) {
          double run = static_cast<double>(plats[static_cast<std::size_t>(pred)].run_time_s);
          a_lo = std::max(a_lo, d_lo[pred][static_cast<std::size_t>(j)] + run);
          a_hi = std::min(a_hi, d_hi[pred][static_cast<std::size_t>(j)] + run);
        }
        double h_from = j > 0 ? d_lo[p][static_cast<std::size_t>(j - 1)]
                              : static_cast<double>(plat.nominal_departure(st.kappa0 - 1));
        a_lo = std::max(a_lo, h_from + static_cast<double>(plat.headway_min_s));
        double lo = std::max(w_lo, a_lo + static_cast<double>(plat.dwell_min_s));
        double hi = std::min(w_hi, a_hi + static_cast<double>(plat.dwell_max_s));
        if (lo > hi + 1e-9)
          throw ModelError("infeasible by construction: no departure time at " + plat.id +
                           " cycle " + std::to_string(j) +
                           " satisfies window, dwell and headway together");
        d_lo[p][static_cast<std::size_t>(j)] = lo;
        d_hi[p][static_cast<std::size_t>(j)] = hi;
      }
    }
  }
}

inline BuiltProgram build_program(const SystemState& st, const Scenario& sc, int horizon,
                                  const std::optional<DiscretePlan>& fixed_plan,
                                  const BuildOptions& opt) {
  if (horizon < 1) throw std::invalid_argument("horizon must be at least 1 cycle");
  validate_state(st, sc, horizon);
  const LineNetwork& net = sc.network;
  const CostParameters& costs = sc.costs;
  const auto routes = net.routes();
  const int P = static_cast<int>(net.platforms.size());
  const int R = static_cast<int>(routes.size());
  const int D = static_cast<int>(net.depots.size());

  if (fixed_plan) {
    if (static_cast<int>(fixed_plan->compositions.size()) != R)
      throw std::domain_error("plan must cover every route");
    for (const auto& row : fixed_plan->compositions) {
      if (static_cast<int>(row.size()) != horizon)
        throw std::domain_error("plan must cover every horizon cycle");
      for (int v : row)
        if (v < costs.units_min || v > costs.units_max)
          throw std::domain_error("plan composition outside [units_min, units_max]");
    }
  }
  check_build_feasibility(sc, st, horizon, routes, opt.eps_strict);

  BuiltProgram built;
  built.kappa0 = st.kappa0;
  built.horizon = horizon;
  built.n_platforms = P;
  built.n_routes = R;
  built.n_depots = D;
  built.options = opt;
  MixedIntegerProgram& prog = built.program;
  prog.name = fixed_plan ? "fixed_plan_lp" : "full_mip";
  prog.symbol_notes["a"] = "eliminated: a = d - tau, recovered on extraction";
  prog.symbol_notes["n(kappa0)"] = "state constant folded into row right-hand sides";
  prog.symbol_notes["C"] = "C = ell * unit_capacity inside the capacity rows";
  if (fixed_plan) {
    prog.symbol_notes["ell"] = "fixed by the discrete plan; costs absorbed as constants";
    prog.symbol_notes["eta"] = "constant: consecutive plan compositions differ or not";
  }

  // One passenger ceiling for every count variable: nobody can outnumber the
  // initial queues plus everything the profile injects over the horizon.
  double u_n = 1.0;
  for (double q : st.queues) u_n += q;
  for (int p = 0; p < P; ++p) {
    const double cycle = static_cast<double>(net.platforms[static_cast<std::size_t>(p)].cycle_s);
    for (int j = 0; j < horizon; ++j)
      u_n += st.rho[static_cast<std::size_t>(p)][static_cast<std::size_t>(j)] * cycle;
  }

  auto matrix = [&](int rows_n, int cols_n) {
    return std::vector<std::vector<int>>(static_cast<std::size_t>(rows_n),
                                         std::vector<int>(static_cast<std::size_t>(cols_n), -1));
  };
  built.v_d = matrix(P, horizon);
  built.v_tau = matrix(P, horizon);
  built.v_h = matrix(P, horizon);
  built.v_nb = matrix(P, horizon);
  built.v_nd = matrix(P, horizon);
  built.v_na = matrix(P, horizon);
  built.v_nv = matrix(P, horizon);
  built.v_nt = matrix(P, horizon);
  built.v_nq = matrix(P, horizon);
  built.ell_var = matrix(R, horizon);
  built.eta_var = matrix(R, horizon);
  built.comp_fixed = matrix(R, horizon);
  built.eta_const = matrix(R, horizon);
  built.v_u = matrix(D, horizon);

  auto add = [&](const std::string& name, double lo, double hi, bool integral,
                 const std::string& symbol, int entity, int cycle, bool big_m) {
    Variable v;
    v.name = name;
    v.lower = lo;
    v.upper = hi;
    v.integral = integral;
    v.symbol = symbol;
    v.entity = entity;
    v.cycle = cycle;
    v.big_m_upper = big_m;
    return prog.add_variable(std::move(v));
  };

  for (int p = 0; p < P; ++p) {
    const Platform& plat = net.platforms[static_cast<std::size_t>(p)];
    for (int j = 0; j < horizon; ++j) {
      const double w_lo = static_cast<double>(plat.nominal_departure(st.kappa0 + j));
      const double w_hi =
          static_cast<double>(plat.nominal_departure(st.kappa0 + j + 1)) - opt.eps_strict;
      built.v_d[p][j] = add(cyc("d", plat.id, j), w_lo, w_hi, false, "d", p, j, false);
      built.v_tau[p][j] =
          add(cyc("tau", plat.id, j), static_cast<double>(plat.dwell_min_s),
              static_cast<double>(plat.dwell_max_s), false, "tau", p, j, false);
      built.v_h[p][j] =
          add(cyc("h", plat.id, j), static_cast<double>(plat.headway_min_s),
              2.0 * static_cast<double>(plat.cycle_s), false, "h", p, j, true);
      built.v_nb[p][j] = add(cyc("nb", plat.id, j), 0.0, u_n, false, "n_before", p, j, true);
      built.v_nd[p][j] = add(cyc("nd", plat.id, j), 0.0, u_n, false, "n_depart", p, j, true);
      built.v_na[p][j] = add(cyc("na", plat.id, j), 0.0, u_n, false, "n_after", p, j, true);
      built.v_nv[p][j] = add(cyc("nv", plat.id, j), 0.0, u_n, false, "n_arrive", p, j, true);
      built.v_nt[p][j] = add(cyc("nt", plat.id, j), 0.0, u_n, false, "n_trans", p, j, true);
      built.v_nq[p][j] = add(cyc("nq", plat.id, j), 0.0, u_n, false, "n", p, j, true);
    }
  }
  const int delta_ell = costs.units_max - costs.units_min;
  for (int r = 0; r < R; ++r) {
    const bool decided = !fixed_plan && routes[static_cast<std::size_t>(r)].origin_depot >= 0 &&
                         delta_ell > 0;
    const std::string rid = "r" + std::to_string(r);
    for (int j = 0; j < horizon; ++j) {
      if (decided) {
        built.ell_var[r][j] =
            add(cyc("ell", rid, j), static_cast<double>(costs.units_min),
                static_cast<double>(costs.units_max), true, "ell", r, j, false);
        built.eta_var[r][j] = add(cyc("eta", rid, j), 0.0, 1.0, true, "eta", r, j, false);
      } else {
        int value = fixed_plan ? fixed_plan->compositions[static_cast<std::size_t>(r)]
                                                         [static_cast<std::size_t>(j)]
                               : st.route_composition[static_cast<std::size_t>(r)];
        built.comp_fixed[r][j] = value;
        int prev = j == 0 ? st.route_composition[static_cast<std::size_t>(r)]
                          : built.comp_fixed[r][j - 1];
        built.eta_const[r][j] = value != prev ? 1 : 0;
      }
    }
  }
  for (int d = 0; d < D; ++d)
    for (int j = 0; j < horizon; ++j)
      built.v_u[d][j] = add(cyc("u", net.depots[static_cast<std::size_t>(d)].id, j), 0.0,
                            static_cast<double>(net.depots[static_cast<std::size_t>(d)].units_max),
                            false, "u", d, j, false);

  // --- objective -----------------------------------------------------------
  for (int p = 0; p < P; ++p) {
    const Platform& plat = net.platforms[static_cast<std::size_t>(p)];
    const double slot = static_cast<double>(plat.cycle_s);
    for (int j = 0; j < horizon; ++j) {
      prog.objective[built.v_na[p][j]] += costs.w1 * slot;
      if (j == 0)
        prog.objective_offset += costs.w1 * costs.w3 * slot * st.queues[static_cast<std::size_t>(p)];
      else
        prog.objective[built.v_nq[p][j - 1]] += costs.w1 * costs.w3 * slot;
      prog.objective[built.v_d[p][j]] += opt.departure_bias;
      prog.objective_offset -=
          opt.departure_bias * static_cast<double>(plat.nominal_departure(st.kappa0 + j));
    }
  }
  for (int r = 0; r < R; ++r) {
    double route_energy = 0.0;
    for (int p : routes[static_cast<std::size_t>(r)].platforms)
      route_energy += costs.energy_cost[static_cast<std::size_t>(p)];
    for (int j = 0; j < horizon; ++j) {
      if (built.ell_var[r][j] >= 0) {
        prog.objective[built.ell_var[r][j]] += costs.w2 * route_energy;
        prog.objective[built.eta_var[r][j]] += costs.w2 * costs.composition_change_cost;
      } else {
        prog.objective_offset += costs.w2 * route_energy * built.comp_fixed[r][j];
        prog.objective_offset +=
            costs.w2 * costs.composition_change_cost * built.eta_const[r][j];
      }
    }
  }

  // --- rows ----------------------------------------------------------------
  auto row = [&](const std::string& name, Relation rel, double rhs,
                 std::vector<std::pair<int, double>> terms) {
    ConstraintRow cr;
    cr.name = name;
    cr.rel = rel;
    cr.rhs = rhs;
    cr.terms = std::move(terms);
    prog.add_row(std::move(cr));
  };

  std::vector<int> route_of(P, -1), pred_of(P, -1);
  for (int r = 0; r < R; ++r)
    for (std::size_t pos = 0; pos < routes[static_cast<std::size_t>(r)].platforms.size(); ++pos) {
      int p = routes[static_cast<std::size_t>(r)].platforms[pos];
      route_of[p] = r;
      pred_of[p] = pos > 0 ? routes[static_cast<std::size_t>(r)].platforms[pos - 1] : -1;
    }

  for (int p = 0; p < P; ++p) {
    const Platform& plat = net.platforms[static_cast<std::size_t>(p)];
    const int r = route_of[p];
    const int pi = pred_of[p];
    for (int j = 0; j < horizon; ++j) {
      const std::int64_t k = st.kappa0 + j;
      const double d_pre = static_cast<double>(plat.nominal_departure(k));
      const double slot = static_cast<double>(plat.cycle_s);
      const double rho = st.rho[static_cast<std::size_t>(p)][static_cast<std::size_t>(j)];

      if (pi >= 0) {
        // running-time coupling: d - tau = d_pred + run
        row(cyc("run", plat.id, j), Relation::Equal,
            static_cast<double>(net.platforms[static_cast<std::size_t>(pi)].run_time_s),
            {{built.v_d[p][j], 1.0}, {built.v_tau[p][j], -1.0}, {built.v_d[pi][j], -1.0}});
      }
      if (j >= 1) {
        // headway defines the arrival after the previous service
        row(cyc("hdwy", plat.id, j), Relation::Equal, 0.0,
            {{built.v_d[p][j], 1.0},
             {built.v_tau[p][j], -1.0},
             {built.v_d[p][j - 1], -1.0},
             {built.v_h[p][j - 1], -1.0}});
      } else {
        // the service before the horizon is assumed on schedule
        const double prev_nominal = static_cast<double>(plat.nominal_departure(st.kappa0 - 1));
        row(cyc("hdwy0", plat.id, j), Relation::LessEqual,
            -(prev_nominal + static_cast<double>(plat.headway_min_s)),
            {{built.v_d[p][j], -1.0}, {built.v_tau[p][j], 1.0}});
      }

      // n_before = n + rho (d - d_pre) + n_trans
      {
        std::vector<std::pair<int, double>> terms = {{built.v_nb[p][j], 1.0},
                                                     {built.v_d[p][j], -rho},
                                                     {built.v_nt[p][j], -1.0}};
        double rhs = -rho * d_pre;
        if (j == 0) rhs += st.queues[static_cast<std::size_t>(p)];
        else terms.push_back({built.v_nq[p][j - 1], -1.0});
        row(cyc("before", plat.id, j), Relation::Equal, rhs, std::move(terms));
      }
      // n(k+1) = n + rho * slot + n_trans - n_depart
      {
        std::vector<std::pair<int, double>> terms = {{built.v_nq[p][j], 1.0},
                                                     {built.v_nt[p][j], -1.0},
                                                     {built.v_nd[p][j], 1.0}};
        double rhs = rho * slot;
        if (j == 0) rhs += st.queues[static_cast<std::size_t>(p)];
        else terms.push_back({built.v_nq[p][j - 1], -1.0});
        row(cyc("queue", plat.id, j), Relation::Equal, rhs, std::move(terms));
      }
      // boarding caps: capacity and availability
      if (built.ell_var[r][j] >= 0) {
        row(cyc("cap", plat.id, j), Relation::LessEqual, 0.0,
            {{built.v_nd[p][j], 1.0}, {built.ell_var[r][j], -costs.unit_capacity}});
      } else {
        row(cyc("cap", plat.id, j), Relation::LessEqual,
            costs.unit_capacity * built.comp_fixed[r][j], {{built.v_nd[p][j], 1.0}});
      }
      row(cyc("board", plat.id, j), Relation::LessEqual, 0.0,
          {{built.v_nd[p][j], 1.0}, {built.v_nb[p][j], -1.0}});
      // alighting equals boarding at the predecessor
      if (pi >= 0)
        row(cyc("arrive", plat.id, j), Relation::Equal, 0.0,
            {{built.v_nv[p][j], 1.0}, {built.v_nd[pi][j], -1.0}});
      else
        row(cyc("arrive", plat.id, j), Relation::Equal, 0.0, {{built.v_nv[p][j], 1.0}});
      // n_after = n_before - n_depart
      row(cyc("after", plat.id, j), Relation::Equal, 0.0,
          {{built.v_na[p][j], 1.0}, {built.v_nb[p][j], -1.0}, {built.v_nd[p][j], 1.0}});
      // transfers walking over from linked platforms
      {
        std::vector<std::pair<int, double>> terms = {{built.v_nt[p][j], 1.0}};
        for (const auto& link : net.transfer_links) {
          if (net.platform_index(link.to) != p) continue;
          int q = net.platform_index(link.from);
          if (q < 0 || pred_of[q] < 0) continue;
          terms.push_back({built.v_nd[pred_of[q]][j], -link.fraction});
        }
        row(cyc("trans", plat.id, j), Relation::Equal, 0.0, std::move(terms));
      }
    }
  }

  // composition change linking (variable routes only)
  for (int r = 0; r < R; ++r) {
    const std::string rid = "r" + std::to_string(r);
    for (int j = 0; j < horizon; ++j) {
      if (built.ell_var[r][j] < 0) continue;
      const double big = static_cast<double>(delta_ell);
      if (j == 0) {
        const double prev = static_cast<double>(st.route_composition[static_cast<std::size_t>(r)]);
        row(cyc("chg_up", rid, j), Relation::LessEqual, prev,
            {{built.ell_var[r][j], 1.0}, {built.eta_var[r][j], -big}});
        row(cyc("chg_dn", rid, j), Relation::LessEqual, -prev,
            {{built.ell_var[r][j], -1.0}, {built.eta_var[r][j], -big}});
      } else {
        row(cyc("chg_up", rid, j), Relation::LessEqual, 0.0,
            {{built.ell_var[r][j], 1.0},
             {built.ell_var[r][j - 1], -1.0},
             {built.eta_var[r][j], -big}});
        row(cyc("chg_dn", rid, j), Relation::LessEqual, 0.0,
            {{built.ell_var[r][j], -1.0},
             {built.ell_var[r][j - 1], 1.0},
             {built.eta_var[r][j], -big}});
      }
    }
  }

  // depot ledger: arrivals credit the yard before departures draw from it,
  // accounted per service index
  for (int d = 0; d < D; ++d) {
    const std::string did = net.depots[static_cast<std::size_t>(d)].id;
    for (int j = 0; j < horizon; ++j) {
      std::vector<std::pair<int, double>> terms = {{built.v_u[d][j], 1.0}};
      double rhs = 0.0;
      if (j == 0) rhs += static_cast<double>(st.depot_units[static_cast<std::size_t>(d)]);
      else terms.push_back({built.v_u[d][j - 1], -1.0});
      for (int r = 0; r < R; ++r) {
        const Route& route = routes[static_cast<std::size_t>(r)];
        if (route.terminus_depot == d) {
          if (built.ell_var[r][j] >= 0) terms.push_back({built.ell_var[r][j], -1.0});
          else rhs += static_cast<double>(built.comp_fixed[r][j]);
        }
        if (route.origin_depot == d) {
          if (built.ell_var[r][j] >= 0) terms.push_back({built.ell_var[r][j], 1.0});
          else rhs -= static_cast<double>(built.comp_fixed[r][j]);
        }
      }
      row(cyc("depot", did, j), Relation::Equal, rhs, std::move(terms));
    }
  }
  return built;
}

}  // namespace detail

// The exact rescheduling problem: compositions are integer decisions.
inline BuiltProgram build_full_mip(const SystemState& st, const Scenario& sc, int horizon,
                                   const BuildOptions& opt = {}) {
  return detail::build_program(st, sc, horizon, std::nullopt, opt);
}

// The decoupled problem: compositions pinned to `plan`, no integrality left.
inline BuiltProgram build_fixed_integer_lp(const SystemState& st, const Scenario& sc,
                                           int horizon, const DiscretePlan& plan,
                                           const BuildOptions& opt = {}) {
  return detail::build_program(st, sc, horizon, plan, opt);
}

// Reads a solution vector back into plans. Integer variables are snapped to
// the nearest integer; anything farther than int_tol away is rejected.
inline std::pair<DiscretePlan, ContinuousPlan> extract_plans(const BuiltProgram& built,
                                                             const std::vector<double>& solution,
                                                             double int_tol = 1e-5) {
  const MixedIntegerProgram& prog = built.program;
  if (static_cast<int>(solution.size()) != prog.n_vars())
    throw std::invalid_argument("solution dimension does not match the variable table");
  auto grid = [&](const std::vector<std::vector<int>>& idx) {
    std::vector<std::vector<double>> out(idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a) {
      out[a].resize(idx[a].size());
      for (std::size_t b = 0; b < idx[a].size(); ++b)
        out[a][b] = idx[a][b] >= 0 ? solution[static_cast<std::size_t>(idx[a][b])] : 0.0;
    }
    return out;
  };
  ContinuousPlan cont;
  cont.departure = grid(built.v_d);
  cont.dwell = grid(built.v_tau);
  cont.headway = grid(built.v_h);
  cont.before = grid(built.v_nb);
  cont.boarded = grid(built.v_nd);
  cont.after = grid(built.v_na);
  cont.arrived = grid(built.v_nv);
  cont.transferred = grid(built.v_nt);
  cont.queue_next = grid(built.v_nq);
  cont.depot_units = grid(built.v_u);
  cont.arrival = cont.departure;
  for (std::size_t p = 0; p < cont.arrival.size(); ++p)
    for (std::size_t j = 0; j < cont.arrival[p].size(); ++j)
      cont.arrival[p][j] -= cont.dwell[p][j];

  DiscretePlan plan;
  plan.compositions.assign(static_cast<std::size_t>(built.n_routes),
                           std::vector<int>(static_cast<std::size_t>(built.horizon), 0));
  for (int r = 0; r < built.n_routes; ++r)
    for (int j = 0; j < built.horizon; ++j) {
      if (built.ell_var[r][j] < 0) {
        plan.compositions[r][j] = built.comp_fixed[r][j];
        continue;
      }
      double v = solution[static_cast<std::size_t>(built.ell_var[r][j])];
      double snapped = std::round(v);
      if (std::fabs(v - snapped) > int_tol)
        throw ModelError("composition " + prog.variables[built.ell_var[r][j]].name +
                         " is not integral within tolerance");
      plan.compositions[r][j] = static_cast<int>(snapped);
    }
  return {std::move(plan), std::move(cont)};
}

// Recomputes the program objective from the extracted plans with the cost
// functions of the flow module (linear delay surrogate + operational cost +
// the departure bias term). Matches MixedIntegerProgram::objective_value on
// any consistent solution.
inline double recompute_objective(const Scenario& sc, const SystemState& st,
                                  const BuiltProgram& built, const DiscretePlan& plan,
                                  const ContinuousPlan& cont) {
  const auto routes = sc.network.routes();
  double total = 0.0;
  for (int p = 0; p < built.n_platforms; ++p) {
    const Platform& plat = sc.network.platforms[static_cast<std::size_t>(p)];
    const double slot = static_cast<double>(plat.cycle_s);
    for (int j = 0; j < built.horizon; ++j) {
      double queue = j == 0 ? st.queues[static_cast<std::size_t>(p)]
                            : cont.queue_next[static_cast<std::size_t>(p)]
                                             [static_cast<std::size_t>(j - 1)];
      total += sc.costs.w1 * passenger_delay_linear(
                                 queue,
                                 cont.after[static_cast<std::size_t>(p)][static_cast<std::size_t>(j)],
                                 slot, sc.costs.w3);
      total += built.options.departure_bias *
               (cont.departure[static_cast<std::size_t>(p)][static_cast<std::size_t>(j)] -
                static_cast<double>(plat.nominal_departure(st.kappa0 + j)));
    }
  }
  for (int r = 0; r < built.n_routes; ++r) {
    double route_energy = 0.0;
    for (int p : routes[static_cast<std::size_t>(r)].platforms)
      route_energy += sc.costs.energy_cost[static_cast<std::size_t>(p)];
    int prev = st.route_composition[static_cast<std::size_t>(r)];
    for (int j = 0; j < built.horizon; ++j) {
      int ell = plan.compositions[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)];
      total += sc.costs.w2 * route_energy * static_cast<double>(ell);
      if (ell != prev) total += sc.costs.w2 * sc.costs.composition_change_cost;
      prev = ell;
    }
  }
  return total;
}

// Replays the horizon through the simulator: same timing and compositions,
// passenger quantities re-derived by step_passengers. Returns one StepResult
// per cycle; used to confirm that program solutions and the simulator agree.
inline std::vector<StepResult> replay_horizon(const Scenario& sc, const SystemState& st,
                                              const BuiltProgram& built, const DiscretePlan& plan,
                                              const ContinuousPlan& cont) {
  const auto routes = sc.network.routes();
  std::vector<int> route_of(static_cast<std::size_t>(built.n_platforms), -1);
  for (int r = 0; r < built.n_routes; ++r)
    for (int p : routes[static_cast<std::size_t>(r)].platforms) route_of[p] = r;
  std::vector<StepResult> out;
  std::vector<double> queues = st.queues;
  // the simulator consumes rates through a profile window rebuilt from the state slice
  FlowProfile slice;
  slice.span_slots = built.horizon;
  slice.horizon_slots = 1;
  slice.rates.resize(static_cast<std::size_t>(built.n_platforms));
  for (int p = 0; p < built.n_platforms; ++p) {
    auto& rr = slice.rates[static_cast<std::size_t>(p)];
    rr.assign(static_cast<std::size_t>(built.horizon) + 1, 0.0);
    for (int j = 0; j < built.horizon; ++j)
      rr[static_cast<std::size_t>(j) + 1] = st.rho[static_cast<std::size_t>(p)]
                                                  [static_cast<std::size_t>(j)];
  }
  // shift nominal times so slot indices of the slice line up with kappa0
  LineNetwork shifted = sc.network;
  for (auto& plat : shifted.platforms) plat.offset_s += built.kappa0 * plat.cycle_s;
  for (int j = 0; j < built.horizon; ++j) {
    std::vector<ServiceRealization> schedule(static_cast<std::size_t>(built.n_platforms));
    for (int p = 0; p < built.n_platforms; ++p) {
      ServiceRealization& sr = schedule[static_cast<std::size_t>(p)];
      sr.departure = cont.departure[static_cast<std::size_t>(p)][static_cast<std::size_t>(j)];
      sr.arrival = cont.arrival[static_cast<std::size_t>(p)][static_cast<std::size_t>(j)];
      sr.dwell = cont.dwell[static_cast<std::size_t>(p)][static_cast<std::size_t>(j)];
      sr.headway = cont.headway[static_cast<std::size_t>(p)][static_cast<std::size_t>(j)];
      sr.composition = plan.compositions[static_cast<std::size_t>(route_of[p])]
                                        [static_cast<std::size_t>(j)];
    }
    out.push_back(step_passengers(queues, j, schedule, slice, shifted, sc.costs.unit_capacity));
    queues = out.back().next_queue;
  }
  return out;
}

}  // namespace railmpc
