#pragma once

// Passenger dynamics and cost functions. These are pure evaluation
// functions: the closed-loop simulator advances queues with them and the
// program builder emits the same relations as linear rows, so the two views
// of the model cannot drift apart.
//
// Quantities per (platform, service): queue n at the nominal departure,
// n_before just before the actual departure, boarded passengers n_depart
// (greedy, capped by train capacity and by n_before), leftover n_after,
// alighting n_arrive (everyone who boarded at the predecessor), and n_trans
// (the fraction of alighting passengers at linked platforms that walk over).

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "railmpc/network.hpp"
#include "railmpc/util.hpp"

namespace railmpc {

struct ServiceRealization {
  double arrival = 0.0;
  double departure = 0.0;
  double dwell = 0.0;
  double headway = 0.0;
  int composition = 1;
  bool composition_changed = false;  // set only where a depot recomposed the train
};

struct PassengerRealization {
  double queue = 0.0;        // n at the nominal departure time
  double before = 0.0;       // n_before
  double after = 0.0;        // n_after
  double boarded = 0.0;      // n_depart
  double arrived = 0.0;      // n_arrive
  double transferred = 0.0;  // n_trans
};

struct StepResult {
  std::vector<PassengerRealization> passengers;  // per platform, canonical order
  std::vector<double> next_queue;                // n(k+1) per platform
};

// Platform evaluation order for one service step. A platform can be
// evaluated once the boarding counts it depends on (its route predecessor,
// and the predecessors of transfer-link sources feeding it) are known.
inline std::vector<int> simulation_order(const LineNetwork& net) {
  const int n = static_cast<int>(net.platforms.size());
  std::vector<std::vector<int>> out_edges(n);
  std::vector<int> in_degree(n, 0);
  auto add_edge = [&](int from, int to) {
    out_edges[from].push_back(to);
    ++in_degree[to];
  };
  for (int p = 0; p < n; ++p) {
    const auto& pred = net.platforms[p].predecessor;
    if (!pred) continue;
    int src = net.platform_index(*pred);
    if (src >= 0) add_edge(src, p);
  }
  for (const auto& link : net.transfer_links) {
    int from = net.platform_index(link.from);
    int to = net.platform_index(link.to);
    if (from < 0 || to < 0) continue;
    const auto& pred = net.platforms[from].predecessor;
    if (!pred) continue;
    int src = net.platform_index(*pred);
    if (src >= 0) add_edge(src, to);
  }
  std::vector<int> order;
  order.reserve(n);
  std::vector<int> ready;
  for (int p = n - 1; p >= 0; --p)
    if (in_degree[p] == 0) ready.push_back(p);
  while (!ready.empty()) {
    int p = ready.back();  // lowest index first: ready is kept descending
    ready.pop_back();
    order.push_back(p);
    for (int q : out_edges[p])
      if (--in_degree[q] == 0) {
        auto it = std::lower_bound(ready.begin(), ready.end(), q, std::greater<int>());
        ready.insert(it, q);
      }
  }
  if (static_cast<int>(order.size()) != n)
    throw ModelError("transfer dependencies form a cycle; no evaluation order exists");
  return order;
}

// Advances one service index: given queues n(k) and the realized schedule of
// service k at every platform, computes all passenger quantities and the
// next queues n(k+1).
inline StepResult step_passengers(const std::vector<double>& queues, std::int64_t k,
                                  const std::vector<ServiceRealization>& schedule,
                                  const FlowProfile& flows, const LineNetwork& net,
                                  double unit_capacity) {
  const int n = static_cast<int>(net.platforms.size());
  if (static_cast<int>(queues.size()) != n || static_cast<int>(schedule.size()) != n)
    throw std::invalid_argument("queues/schedule must cover every platform");
  StepResult res;
  res.passengers.resize(n);
  res.next_queue.resize(n);
  const double tol = 1e-9;
  std::vector<int> pred(n, -1);
  for (int p = 0; p < n; ++p)
    if (net.platforms[p].predecessor)
      pred[p] = net.platform_index(*net.platforms[p].predecessor);

  for (int p : simulation_order(net)) {
    const Platform& plat = net.platforms[p];
    const ServiceRealization& sr = schedule[p];
    const double d_pre = static_cast<double>(plat.nominal_departure(k));
    const double d_pre_next = static_cast<double>(plat.nominal_departure(k + 1));
    if (sr.departure < d_pre - tol || sr.departure >= d_pre_next)
      throw ModelError("departure of " + plat.id + " outside its timetable window");
    const double rho = flows.rate(p, k + 1);
    PassengerRealization& pr = res.passengers[p];
    pr.queue = queues[p];
    pr.arrived = pred[p] >= 0 ? res.passengers[pred[p]].boarded : 0.0;
    double trans = 0.0;
    for (const auto& link : net.transfer_links) {
      if (net.platform_index(link.to) != p) continue;
      int q = net.platform_index(link.from);
      if (q < 0 || pred[q] < 0) continue;
      trans += link.fraction * res.passengers[pred[q]].boarded;
    }
    pr.transferred = trans;
    pr.before = pr.queue + rho * (sr.departure - d_pre) + pr.transferred;
    const double capacity = static_cast<double>(sr.composition) * unit_capacity;
    pr.boarded = std::min(pr.before, capacity);
    pr.after = pr.before - pr.boarded;
    res.next_queue[p] = pr.queue + rho * (d_pre_next - d_pre) + pr.transferred - pr.boarded;
    for (double v : {pr.before, pr.boarded, pr.after, res.next_queue[p]}) {
      if (v < -tol)
        throw ModelError("negative passenger count at " + plat.id + "; inputs are inconsistent");
    }
    if (pr.after < 0.0) pr.after = 0.0;
    if (res.next_queue[p] < 0.0) res.next_queue[p] = 0.0;
  }
  return res;
}

// Delay actually incurred (the evaluation index): passengers present at the
// nominal time wait until the realized departure, leftovers wait for the
// next nominal departure.
inline double passenger_delay_exact(double queue, double after, double departure,
                                    double d_pre, double d_pre_next) {
  if (departure < d_pre || departure >= d_pre_next)
    throw std::domain_error("departure outside [d_pre, d_pre_next)");
  return queue * (departure - d_pre) + after * (d_pre_next - departure);
}

// Linear surrogate used inside the optimization problems; independent of the
// realized departure time.
inline double passenger_delay_linear(double queue, double after, double slot_length,
                                     double w3) {
  return w3 * queue * slot_length + after * slot_length;
}

inline double operational_cost(const ServiceRealization& sr, double energy_cost_platform,
                               const CostParameters& costs) {
  return static_cast<double>(sr.composition) * energy_cost_platform +
         (sr.composition_changed ? costs.composition_change_cost : 0.0);
}

enum class CostMode { Exact, Linear };

// One applied MPC step: the realized schedule and passenger quantities of
// service `service` at every platform.
struct StepRecord {
  std::int64_t service = 0;
  std::vector<ServiceRealization> schedule;
  std::vector<PassengerRealization> passengers;
};

inline double step_cost(const StepRecord& rec, const LineNetwork& net,
                        const CostParameters& costs, CostMode mode) {
  double total = 0.0;
  for (std::size_t p = 0; p < net.platforms.size(); ++p) {
    const Platform& plat = net.platforms[p];
    const ServiceRealization& sr = rec.schedule[p];
    const PassengerRealization& pr = rec.passengers[p];
    const double d_pre = static_cast<double>(plat.nominal_departure(rec.service));
    const double d_pre_next = static_cast<double>(plat.nominal_departure(rec.service + 1));
    double delay;
    if (mode == CostMode::Exact)
      delay = passenger_delay_exact(pr.queue, pr.after, sr.departure, d_pre, d_pre_next);
    else
      delay = passenger_delay_linear(pr.queue, pr.after, d_pre_next - d_pre, costs.w3);
    total += costs.w1 * delay + costs.w2 * operational_cost(sr, costs.energy_cost[p], costs);
  }
  return total;
}

inline double total_cost(const std::vector<StepRecord>& trajectory, const LineNetwork& net,
                         const CostParameters& costs, CostMode mode) {
  double total = 0.0;
  for (const auto& rec : trajectory) total += step_cost(rec, net, costs, mode);
  return total;
}

}  // namespace railmpc
