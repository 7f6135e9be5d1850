#pragma once

// Scenario file format: one JSON document with top-level keys `network`,
// `flows`, `costs`. Times are integer seconds, rates are decimal
// passengers/second. Serialization is canonical (sorted keys, two-space
// indent) so serialize -> parse -> serialize is byte-identical.

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "railmpc/network.hpp"

namespace railmpc {

inline nlohmann::json scenario_to_json(const Scenario& sc) {
  nlohmann::json j;
  auto& net = j["network"];
  net["platforms"] = nlohmann::json::array();
  for (const auto& p : sc.network.platforms) {
    nlohmann::json pj;
    pj["id"] = p.id;
    pj["station"] = p.station;
    pj["line"] = p.line;
    pj["direction"] = p.direction;
    pj["offset_s"] = p.offset_s;
    pj["cycle_s"] = p.cycle_s;
    pj["headway_min_s"] = p.headway_min_s;
    pj["dwell_min_s"] = p.dwell_min_s;
    pj["dwell_max_s"] = p.dwell_max_s;
    pj["run_time_s"] = p.run_time_s;
    pj["depot_adjacent"] = p.depot_adjacent;
    if (p.predecessor) pj["predecessor"] = *p.predecessor;
    else pj["predecessor"] = nullptr;
    net["platforms"].push_back(std::move(pj));
  }
  net["depots"] = nlohmann::json::array();
  for (const auto& d : sc.network.depots) {
    nlohmann::json dj;
    dj["id"] = d.id;
    dj["terminals"] = d.terminals;
    dj["units_initial"] = d.units_initial;
    dj["units_max"] = d.units_max;
    net["depots"].push_back(std::move(dj));
  }
  net["transfer_links"] = nlohmann::json::array();
  for (const auto& t : sc.network.transfer_links) {
    nlohmann::json tj;
    tj["from"] = t.from;
    tj["to"] = t.to;
    tj["fraction"] = t.fraction;
    net["transfer_links"].push_back(std::move(tj));
  }
  auto& flows = j["flows"];
  flows["span_slots"] = sc.flows.span_slots;
  flows["horizon_slots"] = sc.flows.horizon_slots;
  flows["rates"] = nlohmann::json::object();
  for (std::size_t p = 0; p < sc.flows.rates.size(); ++p)
    flows["rates"][sc.network.platforms[p].id] = sc.flows.rates[p];
  auto& costs = j["costs"];
  costs["w1"] = sc.costs.w1;
  costs["w2"] = sc.costs.w2;
  costs["w3"] = sc.costs.w3;
  costs["energy_cost"] = nlohmann::json::object();
  for (std::size_t p = 0; p < sc.costs.energy_cost.size(); ++p)
    costs["energy_cost"][sc.network.platforms[p].id] = sc.costs.energy_cost[p];
  costs["composition_change_cost"] = sc.costs.composition_change_cost;
  costs["unit_capacity"] = sc.costs.unit_capacity;
  costs["units_min"] = sc.costs.units_min;
  costs["units_max"] = sc.costs.units_max;
  return j;
}

inline std::string scenario_to_string(const Scenario& sc) {
  return scenario_to_json(sc).dump(2) + "\n";
}

inline Scenario scenario_from_json(const nlohmann::json& j) {
  try {
    Scenario sc;
    for (const auto& pj : j.at("network").at("platforms")) {
      Platform p;
      p.id = pj.at("id").get<std::string>();
      p.station = pj.at("station").get<std::string>();
      p.line = pj.at("line").get<int>();
      p.direction = pj.at("direction").get<int>();
      p.offset_s = pj.at("offset_s").get<std::int64_t>();
      p.cycle_s = pj.at("cycle_s").get<std::int64_t>();
      p.headway_min_s = pj.at("headway_min_s").get<std::int64_t>();
      p.dwell_min_s = pj.at("dwell_min_s").get<std::int64_t>();
      p.dwell_max_s = pj.at("dwell_max_s").get<std::int64_t>();
      p.run_time_s = pj.at("run_time_s").get<std::int64_t>();
      p.depot_adjacent = pj.at("depot_adjacent").get<bool>();
      if (!pj.at("predecessor").is_null())
        p.predecessor = pj.at("predecessor").get<std::string>();
      sc.network.platforms.push_back(std::move(p));
    }
    for (const auto& dj : j.at("network").at("depots")) {
      Depot d;
      d.id = dj.at("id").get<std::string>();
      d.terminals = dj.at("terminals").get<std::vector<std::string>>();
      d.units_initial = dj.at("units_initial").get<int>();
      d.units_max = dj.at("units_max").get<int>();
      sc.network.depots.push_back(std::move(d));
    }
    for (const auto& tj : j.at("network").at("transfer_links")) {
      TransferLink t;
      t.from = tj.at("from").get<std::string>();
      t.to = tj.at("to").get<std::string>();
      t.fraction = tj.at("fraction").get<double>();
      sc.network.transfer_links.push_back(std::move(t));
    }
    const auto& flows = j.at("flows");
    sc.flows.span_slots = flows.at("span_slots").get<std::int64_t>();
    sc.flows.horizon_slots = flows.at("horizon_slots").get<std::int64_t>();
    sc.flows.rates.resize(sc.network.platforms.size());
    for (std::size_t p = 0; p < sc.network.platforms.size(); ++p) {
      const auto& key = sc.network.platforms[p].id;
      if (!flows.at("rates").contains(key))
        throw FileFormatError("flows.rates missing platform " + key);
      sc.flows.rates[p] = flows.at("rates").at(key).get<std::vector<double>>();
    }
    const auto& costs = j.at("costs");
    sc.costs.w1 = costs.at("w1").get<double>();
    sc.costs.w2 = costs.at("w2").get<double>();
    sc.costs.w3 = costs.at("w3").get<double>();
    sc.costs.energy_cost.resize(sc.network.platforms.size(), 0.0);
    for (std::size_t p = 0; p < sc.network.platforms.size(); ++p) {
      const auto& key = sc.network.platforms[p].id;
      if (!costs.at("energy_cost").contains(key))
        throw FileFormatError("costs.energy_cost missing platform " + key);
      sc.costs.energy_cost[p] = costs.at("energy_cost").at(key).get<double>();
    }
    sc.costs.composition_change_cost = costs.at("composition_change_cost").get<double>();
    sc.costs.unit_capacity = costs.at("unit_capacity").get<double>();
    sc.costs.units_min = costs.at("units_min").get<int>();
    sc.costs.units_max = costs.at("units_max").get<int>();
    return sc;
  } catch (const nlohmann::json::exception& e) {
    throw FileFormatError(std::string("scenario document malformed: ") + e.what());
  }
}

inline Scenario scenario_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FileFormatError(std::string("scenario is not valid JSON: ") + e.what());
  }
  return scenario_from_json(j);
}

inline void save_scenario(const Scenario& sc, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileFormatError("cannot open for writing: " + path);
  out << scenario_to_string(sc);
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileFormatError("cannot open scenario file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return scenario_from_string(buf.str());
}

}  // namespace railmpc
