#pragma once

// Physical scenario description: platforms with their nominal timetable,
// depots holding spare train units, transfer links between lines, demand
// profiles and cost parameters. Everything here is immutable once built and
// shared read-only by the simulator, the program builder and the pipeline.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "railmpc/util.hpp"

namespace railmpc {

struct Platform {
  std::string id;
  std::string station;
  int line = 0;
  int direction = 0;
  std::int64_t offset_s = 0;       // first nominal departure d_pre(0)
  std::int64_t cycle_s = 0;        // nominal departure period
  std::int64_t headway_min_s = 0;  // minimum separation after a departure
  std::int64_t dwell_min_s = 0;
  std::int64_t dwell_max_s = 0;
  std::int64_t run_time_s = 0;     // departure here -> arrival at successor; 0 at route end
  bool depot_adjacent = false;
  std::optional<std::string> predecessor;  // preceding platform on the route

  // Nominal departure of service k. The timetable is an arithmetic sequence.
  std::int64_t nominal_departure(std::int64_t k) const { return offset_s + k * cycle_s; }
};

struct Depot {
  std::string id;
  std::vector<std::string> terminals;  // terminal platform pair this yard serves
  int units_initial = 0;
  int units_max = 0;
};

struct TransferLink {
  std::string from;
  std::string to;
  double fraction = 0.0;  // share of passengers alighting at `from` that walk to `to`
};

// One service chain: the ordered platforms a train sweeps in a single
// direction of a line, plus the depots at its two ends (if any).
struct Route {
  int line = 0;
  int direction = 0;
  std::vector<int> platforms;  // indices into LineNetwork::platforms, route order
  int origin_depot = -1;       // depot index serving departures, -1 if none
  int terminus_depot = -1;     // depot index receiving arrivals, -1 if none
  int origin() const { return platforms.front(); }
  int terminus() const { return platforms.back(); }
};

struct LineNetwork {
  std::vector<Platform> platforms;  // canonical order; all indexing follows it
  std::vector<Depot> depots;
  std::vector<TransferLink> transfer_links;

  int platform_index(const std::string& id) const {
    for (std::size_t i = 0; i < platforms.size(); ++i)
      if (platforms[i].id == id) return static_cast<int>(i);
    return -1;
  }

  int depot_index(const std::string& id) const {
    for (std::size_t i = 0; i < depots.size(); ++i)
      if (depots[i].id == id) return static_cast<int>(i);
    return -1;
  }

  // Derives the route chains from the predecessor relation. Platforms with no
  // predecessor open a route; every other platform extends the chain of its
  // predecessor. Order within a route follows the chain, routes follow the
  // canonical order of their origin platforms.
  std::vector<Route> routes() const {
    const int n = static_cast<int>(platforms.size());
    std::vector<int> successor(n, -1);
    for (int p = 0; p < n; ++p) {
      if (!platforms[p].predecessor) continue;
      int pred = platform_index(*platforms[p].predecessor);
      if (pred >= 0) successor[pred] = p;
    }
    std::vector<Route> out;
    for (int p = 0; p < n; ++p) {
      if (platforms[p].predecessor) continue;  // not a route origin
      Route r;
      r.line = platforms[p].line;
      r.direction = platforms[p].direction;
      for (int q = p; q != -1; q = successor[q]) {
        r.platforms.push_back(q);
        if (r.platforms.size() > platforms.size())
          throw ModelError("predecessor relation contains a cycle");
      }
      for (std::size_t d = 0; d < depots.size(); ++d) {
        for (const auto& term : depots[d].terminals) {
          int t = platform_index(term);
          if (t == r.origin()) r.origin_depot = static_cast<int>(d);
          if (t == r.terminus()) r.terminus_depot = static_cast<int>(d);
        }
      }
      out.push_back(std::move(r));
    }
    return out;
  }
};

struct FlowProfile {
  // rates[p][k] is the arrival rate (passengers/second) at platform p during
  // the timetable window ending at nominal departure k, piecewise constant
  // per service slot. Outer index follows LineNetwork::platforms.
  std::vector<std::vector<double>> rates;
  std::int64_t span_slots = 0;     // intended closed-loop simulation span
  std::int64_t horizon_slots = 0;  // extra slots kept for the prediction horizon

  double rate(int platform, std::int64_t k) const {
    const auto& r = rates.at(static_cast<std::size_t>(platform));
    if (k < 0 || static_cast<std::size_t>(k) >= r.size()) {
      std::ostringstream msg;
      msg << "flow profile index " << k << " out of range for platform " << platform
          << " (have " << r.size() << " slots)";
      throw std::out_of_range(msg.str());
    }
    return r[static_cast<std::size_t>(k)];
  }
};

struct CostParameters {
  double w1 = 1.0;  // weight on passenger delay
  double w2 = 1.0;  // weight on operational cost
  double w3 = 0.5;  // interpolation factor in the linear delay surrogate
  std::vector<double> energy_cost;     // per platform: cost per unit-segment
  double composition_change_cost = 0;  // charged when a departing composition changes
  double unit_capacity = 0;            // passengers per train unit
  int units_min = 1;
  int units_max = 1;
};

struct Scenario {
  LineNetwork network;
  FlowProfile flows;
  CostParameters costs;
};

struct Violation {
  std::string field;
  std::string entity;
  std::string message;
};

namespace detail {

inline void check_transfer_acyclic(const LineNetwork& net, std::vector<Violation>& out) {
  // The simulator evaluates one platform at a time; a transfer pattern where
  // boarding at p depends (through alighting flows) on boarding at p again
  // has no sequential evaluation order. Detect it as a violation.
  const int n = static_cast<int>(net.platforms.size());
  std::vector<std::vector<int>> deps(n);  // edges dependency -> dependent
  for (const auto& link : net.transfer_links) {
    int to = net.platform_index(link.to);
    int from = net.platform_index(link.from);
    if (to < 0 || from < 0) continue;
    const auto& pred = net.platforms[from].predecessor;
    if (!pred) continue;  // alighting flow at a route origin is zero
    int src = net.platform_index(*pred);
    if (src >= 0) deps[src].push_back(to);
  }
  for (int p = 0; p < n; ++p) {
    const auto& pred = net.platforms[p].predecessor;
    if (!pred) continue;
    int src = net.platform_index(*pred);
    if (src >= 0) deps[src].push_back(p);
  }
  std::vector<int> state(n, 0);  // 0 new, 1 on stack, 2 done
  bool cyclic = false;
  // iterative DFS
  for (int start = 0; start < n && !cyclic; ++start) {
    if (state[start] != 0) continue;
    std::vector<std::pair<int, std::size_t>> stack{{start, 0}};
    state[start] = 1;
    while (!stack.empty() && !cyclic) {
      auto& [node, idx] = stack.back();
      if (idx < deps[node].size()) {
        int nxt = deps[node][idx++];
        if (state[nxt] == 1) cyclic = true;
        else if (state[nxt] == 0) {
          state[nxt] = 1;
          stack.push_back({nxt, 0});
        }
      } else {
        state[node] = 2;
        stack.pop_back();
      }
    }
  }
  if (cyclic)
    out.push_back({"transfer_links", "", "transfer dependencies form a cycle; no evaluation order exists"});
}

}  // namespace detail

// Structural validation. Returns one entry per broken invariant; violations
// are data, not errors, so callers decide how to react.
inline std::vector<Violation> validate(const LineNetwork& net, const FlowProfile& flows) {
  std::vector<Violation> out;
  std::set<std::string> ids;
  for (const auto& p : net.platforms) {
    if (!ids.insert(p.id).second) out.push_back({"id", p.id, "duplicate platform id"});
    if (p.cycle_s <= 0) out.push_back({"cycle", p.id, "nominal departures must be strictly increasing"});
    if (p.headway_min_s <= 0) out.push_back({"headway_min", p.id, "h_min must be positive"});
    if (p.dwell_min_s <= 0 || p.dwell_min_s > p.dwell_max_s || p.dwell_max_s >= p.cycle_s)
      out.push_back({"dwell_bounds", p.id, "need 0 < dwell_min <= dwell_max < cycle"});
    if (p.predecessor) {
      int pred = net.platform_index(*p.predecessor);
      if (pred < 0)
        out.push_back({"predecessor", p.id, "references unknown platform " + *p.predecessor});
      else {
        const Platform& q = net.platforms[pred];
        if (q.line != p.line || q.direction != p.direction)
          out.push_back({"predecessor", p.id, "crosses line or direction boundaries"});
        if (q.run_time_s <= 0)
          out.push_back({"running_time", q.id, "non-terminal platform needs run_time > 0"});
      }
    }
  }
  try {
    (void)net.routes();
  } catch (const ModelError&) {
    out.push_back({"predecessor", "", "predecessor relation contains a cycle"});
  }
  for (const auto& d : net.depots) {
    if (d.units_initial < 0 || d.units_initial > d.units_max)
      out.push_back({"units_initial", d.id, "need 0 <= units_initial <= units_max"});
    for (const auto& t : d.terminals)
      if (net.platform_index(t) < 0)
        out.push_back({"terminals", d.id, "references unknown platform " + t});
  }
  // depot_adjacent flags must agree with depot attachment
  std::set<int> attached;
  for (const auto& d : net.depots)
    for (const auto& t : d.terminals) {
      int p = net.platform_index(t);
      if (p >= 0) attached.insert(p);
    }
  for (std::size_t p = 0; p < net.platforms.size(); ++p) {
    bool flagged = net.platforms[p].depot_adjacent;
    bool has = attached.count(static_cast<int>(p)) > 0;
    if (flagged != has)
      out.push_back({"depot_adjacent", net.platforms[p].id,
                     flagged ? "flagged but no depot attached" : "depot attached but not flagged"});
  }
  std::map<std::string, double> beta_out;
  for (const auto& link : net.transfer_links) {
    int from = net.platform_index(link.from);
    int to = net.platform_index(link.to);
    if (from < 0 || to < 0) {
      out.push_back({"transfer_links", link.from + "->" + link.to, "unknown endpoint"});
      continue;
    }
    if (link.fraction < 0.0 || link.fraction > 1.0)
      out.push_back({"transfer_links", link.from + "->" + link.to, "fraction outside [0,1]"});
    if (net.platforms[from].line == net.platforms[to].line)
      out.push_back({"transfer_links", link.from + "->" + link.to, "must connect distinct lines"});
    if (net.platforms[from].station != net.platforms[to].station)
      out.push_back({"transfer_links", link.from + "->" + link.to, "must stay within one station"});
    beta_out[link.from] += link.fraction;
  }
  for (const auto& [pid, total] : beta_out)
    if (total > 1.0 + 1e-12)
      out.push_back({"transfer_links", pid, "outgoing fractions sum above 1"});
  detail::check_transfer_acyclic(net, out);

  if (flows.rates.size() != net.platforms.size())
    out.push_back({"flows", "", "rate table does not cover every platform"});
  const std::size_t needed =
      static_cast<std::size_t>(flows.span_slots + flows.horizon_slots);
  for (std::size_t p = 0; p < flows.rates.size() && p < net.platforms.size(); ++p) {
    if (flows.rates[p].size() < needed)
      out.push_back({"flows", net.platforms[p].id, "profile shorter than span + horizon"});
    for (double r : flows.rates[p])
      if (r < 0.0) {
        out.push_back({"flows", net.platforms[p].id, "negative arrival rate"});
        break;
      }
  }
  return out;
}

inline std::vector<Violation> validate(const Scenario& sc) {
  std::vector<Violation> out = validate(sc.network, sc.flows);
  const CostParameters& c = sc.costs;
  if (c.w1 <= 0 || c.w2 <= 0) out.push_back({"w1/w2", "costs", "weights must be positive"});
  if (c.w3 <= 0 || c.w3 > 1) out.push_back({"w3", "costs", "need w3 in (0,1]"});
  if (c.units_min < 1 || c.units_min > c.units_max)
    out.push_back({"units_min/max", "costs", "need 1 <= units_min <= units_max"});
  if (c.unit_capacity <= 0) out.push_back({"unit_capacity", "costs", "capacity must be positive"});
  if (c.energy_cost.size() != sc.network.platforms.size())
    out.push_back({"energy_cost", "costs", "needs one entry per platform"});
  for (double e : c.energy_cost)
    if (e < 0) {
      out.push_back({"energy_cost", "costs", "negative energy cost"});
      break;
    }
  return out;
}

// Total passengers injected by the profile: sum of rate * slot length over
// every stored slot and platform.
inline double total_demand(const LineNetwork& net, const FlowProfile& flows) {
  double total = 0.0;
  for (std::size_t p = 0; p < flows.rates.size(); ++p) {
    double cycle = static_cast<double>(net.platforms[p].cycle_s);
    for (double r : flows.rates[p]) total += r * cycle;
  }
  return total;
}

// Deterministic desk-scale scenario: one bidirectional line with a depot at
// each terminus and a seeded demand profile whose rate doubles over the
// middle third of the span (a morning peak).
inline Scenario build_synthetic_network(int n_platforms_per_direction, std::int64_t cycle_s,
                                        std::uint64_t demand_seed, std::int64_t span_slots = 96,
                                        std::int64_t horizon_slots = 48) {
  if (n_platforms_per_direction < 2)
    throw std::invalid_argument("need at least 2 platforms per direction");
  const std::int64_t run_time = 120;
  const std::int64_t dwell_min = 20, dwell_max = 60, dwell_nominal = 30;
  const std::int64_t headway_min = 60;
  if (cycle_s <= dwell_max + run_time)
    throw std::invalid_argument("cycle too short for dwell plus running time");
  if (cycle_s <= dwell_max + headway_min)
    throw std::invalid_argument("cycle too short for dwell plus minimum headway");

  Scenario sc;
  const int n = n_platforms_per_direction;
  auto station_name = [](int i) { return "S" + std::to_string(i + 1); };
  for (int dir = 0; dir < 2; ++dir) {
    for (int i = 0; i < n; ++i) {
      Platform p;
      int station = dir == 0 ? i : n - 1 - i;
      p.id = "d" + std::to_string(dir) + "p" + std::to_string(i);
      p.station = station_name(station);
      p.line = 1;
      p.direction = dir;
      p.cycle_s = cycle_s;
      p.offset_s = 60 + static_cast<std::int64_t>(i) * (run_time + dwell_nominal);
      p.headway_min_s = headway_min;
      p.dwell_min_s = dwell_min;
      p.dwell_max_s = dwell_max;
      p.run_time_s = i + 1 < n ? run_time : 0;
      p.depot_adjacent = (i == 0 || i == n - 1);
      if (i > 0) p.predecessor = "d" + std::to_string(dir) + "p" + std::to_string(i - 1);
      sc.network.platforms.push_back(std::move(p));
    }
  }
  Depot a;  // serves direction 0 departures, receives direction 1 arrivals
  a.id = "depA";
  a.terminals = {"d0p0", "d1p" + std::to_string(n - 1)};
  a.units_initial = 4;
  a.units_max = 8;
  Depot b;
  b.id = "depB";
  b.terminals = {"d1p0", "d0p" + std::to_string(n - 1)};
  b.units_initial = 4;
  b.units_max = 8;
  sc.network.depots = {a, b};

  sc.flows.span_slots = span_slots;
  sc.flows.horizon_slots = horizon_slots;
  const std::int64_t total_slots = span_slots + horizon_slots;
  std::mt19937_64 rng = make_rng(demand_seed, 0xf10f);
  std::uniform_real_distribution<double> base_rate(0.05, 0.12);
  for (std::size_t p = 0; p < sc.network.platforms.size(); ++p) {
    double base = base_rate(rng);
    std::vector<double> rates(static_cast<std::size_t>(total_slots), base);
    for (std::int64_t k = span_slots / 3; k < 2 * span_slots / 3; ++k)
      rates[static_cast<std::size_t>(k)] = 2.0 * base;
    sc.flows.rates.push_back(std::move(rates));
  }

  sc.costs.w1 = 1.0;
  sc.costs.w2 = 1.0;
  sc.costs.w3 = 0.5;
  sc.costs.energy_cost.assign(sc.network.platforms.size(), 400.0);
  sc.costs.composition_change_cost = 250.0;
  sc.costs.unit_capacity = 20.0;
  sc.costs.units_min = 1;
  sc.costs.units_max = 3;
  return sc;
}

}  // namespace railmpc
