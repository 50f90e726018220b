#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "lidsa/core_model.hpp"

namespace lidsa {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct SimConfig {
  double step_s = 1.0;
  int horizon_s = 3600;
  double edge_length_m = 600.0;
  double advisory_horizon_m = 400.0;
  double near_zone_m = 200.0;
  double v_min_mps = 3.0;
  double v_max_mps = 13.89;
  double conflict_zone_side_m = 12.0;
  double trip_length_m = 617.0;   // edge + zone + one car length, fixed per route
  double standstill_gap_m = 2.0;
  std::uint64_t seed = 7;
};

// Flows are directional and symmetric: the NS rate applies to N and S each,
// likewise EW; `turns_vph` is the per-approach turning volume.
struct DemandScenario {
  std::string name = "medium";
  double ns_straight_vph = 400.0;
  double ew_straight_vph = 300.0;
  double turns_vph = 100.0;
  double emergency_vph = 20.0;
  double expected_vc = 0.63;
  double turn_left_share = 0.5;
};

struct VehicleTypeProfile {
  std::string name = "car";
  double length_m = 5.0;
  double accel_max = 2.6;   // m/s^2
  double decel_max = 4.5;   // m/s^2
  double v_max = 13.89;     // m/s
  PriorityClass priority = PriorityClass::Normal;
  int occupancy = 1;
};

inline VehicleTypeProfile car_profile() { return {}; }

inline VehicleTypeProfile bus_profile() {
  return {"bus", 12.0, 1.2, 3.5, 11.11, PriorityClass::Transit, 35};
}

inline VehicleTypeProfile ambulance_profile() {
  return {"ambulance", 6.0, 3.0, 5.0, 16.67, PriorityClass::Emergency, 2};
}

struct HttpBackendConfig {
  std::string endpoint = "http://127.0.0.1:8080/v1/complete";
  std::string model = "default";
  double temperature = 0.0;
  std::uint64_t llm_seed = 42;
  int max_tokens = 2048;
  std::string api_key_env = "LIDSA_API_KEY";
};

struct MatBandParams {
  double wait_band_s = 5.0;
  int wait_band_cap = 24;
  double budget_emergency_s = 10.0;
  double budget_transit_s = 20.0;
  double budget_normal_s = 30.0;
  int urgency_cap = 2;

  double class_budget_s(PriorityClass p) const {
    switch (p) {
      case PriorityClass::Emergency: return budget_emergency_s;
      case PriorityClass::Transit: return budget_transit_s;
      case PriorityClass::Normal: return budget_normal_s;
    }
    return budget_normal_s;
  }
};

struct LidsaParams {
  double theta_p = 100.0;      // pressure saturation threshold
  double delta_p = 50.0;       // max pressure imbalance for SHARE
  double alpha_slow_s = 20.0;  // slow-approach weight in effective delay
  double eta_share = 0.85;
  double tau_safe_s = 0.0;
  double follow_gap_s = 3.0;
  double v_hold_mps = 2.0;
  // Hold lookahead: long enough that a vehicle flagged at the edge of the
  // window can still brake out of the conflict (v_max/(2 b) + one step).
  double watchdog_horizon_s = 3.0;
  double watchdog_guard_m = 2.5;
  int query_cadence_s = 30;
  double backend_timeout_s = 30.0;
  std::string backend = "rule";  // rule | http
  MatBandParams mat;
  HttpBackendConfig http;
};

struct MetricsParams {
  std::array<double, 2> vc_bands{0.4, 0.8};
  std::array<double, 3> temporal_budgets_s{30.0, 60.0, 120.0};
  double priority_emergency_s = 10.0;
  double priority_transit_s = 20.0;
  int energy_stop_limit = 2;
  double halt_speed_mps = 0.1;
  int sample_every_steps = 10;
  double vehicle_mass_kg = 1500.0;
  std::vector<double> fuel_bin_edges{0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0};  // kW/t
  std::vector<double> fuel_bin_rates{0.40, 0.55, 0.90, 1.25, 1.60, 1.95, 2.30, 2.65};  // g/s
};

struct FixedCycleParams {
  double green_ns_s = 30.0;
  double green_ew_s = 30.0;
  double yellow_s = 4.0;

  double cycle_s() const { return green_ns_s + green_ew_s + 2.0 * yellow_s; }
};

struct ScatsPlan {
  double ds_below = 0.0;  // plan applies while ds < this bound (last plan: +inf)
  double green_ns_s = 0.0;
  double green_ew_s = 0.0;
};

struct ScatsParams {
  std::vector<ScatsPlan> plans{{0.50, 20.0, 20.0}, {0.80, 35.0, 25.0}, {1e9, 50.0, 40.0}};
  double yellow_s = 4.0;
  double saturation_flow_vph = 1800.0;
};

struct AimParams {
  double zone_side_m = 30.0;
  double tile_m = 3.0;
  double request_radius_m = 60.0;
  int prune_every_steps = 10;
};

struct GlosaParams {
  double fifo_window_s = 3.0;
};

struct Config {
  SimConfig sim;
  DemandScenario demand;
  LidsaParams lidsa;
  MetricsParams metrics;
  FixedCycleParams fixed_cycle;
  ScatsParams scats;
  AimParams aim;
  GlosaParams glosa;
};

inline double cycle_capacity_vph(double green_s, double cycle_s, double sat_flow_vph) {
  return green_s / cycle_s * sat_flow_vph;
}

// Peak directional demand over signal capacity, fixed-cycle reference plan.
inline double demand_vc_ratio(const DemandScenario& d, const FixedCycleParams& f,
                              double sat_flow_vph = 1800.0) {
  const double cap = cycle_capacity_vph(f.green_ns_s, f.cycle_s(), sat_flow_vph);
  const double q_ns = d.ns_straight_vph + d.turns_vph;
  const double q_ew = d.ew_straight_vph + d.turns_vph;
  return std::max(q_ns, q_ew) / cap;
}

inline DemandScenario preset_demand(const std::string& name) {
  if (name == "low") return {"low", 150.0, 120.0, 40.0, 20.0, 0.24, 0.5};
  if (name == "medium") return {"medium", 400.0, 300.0, 100.0, 20.0, 0.63, 0.5};
  if (name == "high") return {"high", 600.0, 500.0, 150.0, 20.0, 0.94, 0.5};
  throw ConfigError("unknown demand preset '" + name + "' (expected low|medium|high)");
}

namespace cfg_detail {

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out, const std::string& path) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + "." + key + ": " + e.what());
  }
}

}  // namespace cfg_detail

inline void from_json_at(const nlohmann::json& j, SimConfig& c, const std::string& p) {
  using cfg_detail::read;
  read(j, "step_s", c.step_s, p);
  read(j, "horizon_s", c.horizon_s, p);
  read(j, "edge_length_m", c.edge_length_m, p);
  read(j, "advisory_horizon_m", c.advisory_horizon_m, p);
  read(j, "near_zone_m", c.near_zone_m, p);
  read(j, "v_min_mps", c.v_min_mps, p);
  read(j, "v_max_mps", c.v_max_mps, p);
  read(j, "conflict_zone_side_m", c.conflict_zone_side_m, p);
  read(j, "trip_length_m", c.trip_length_m, p);
  read(j, "standstill_gap_m", c.standstill_gap_m, p);
  read(j, "seed", c.seed, p);
}

inline nlohmann::json to_json(const SimConfig& c) {
  return {{"step_s", c.step_s},
          {"horizon_s", c.horizon_s},
          {"edge_length_m", c.edge_length_m},
          {"advisory_horizon_m", c.advisory_horizon_m},
          {"near_zone_m", c.near_zone_m},
          {"v_min_mps", c.v_min_mps},
          {"v_max_mps", c.v_max_mps},
          {"conflict_zone_side_m", c.conflict_zone_side_m},
          {"trip_length_m", c.trip_length_m},
          {"standstill_gap_m", c.standstill_gap_m},
          {"seed", c.seed}};
}

inline void from_json_at(const nlohmann::json& j, DemandScenario& d, const std::string& p) {
  using cfg_detail::read;
  if (j.contains("preset")) {
    std::string name;
    read(j, "preset", name, p);
    d = preset_demand(name);
  }
  read(j, "name", d.name, p);
  read(j, "ns_straight_vph", d.ns_straight_vph, p);
  read(j, "ew_straight_vph", d.ew_straight_vph, p);
  read(j, "turns_vph", d.turns_vph, p);
  read(j, "emergency_vph", d.emergency_vph, p);
  read(j, "expected_vc", d.expected_vc, p);
  read(j, "turn_left_share", d.turn_left_share, p);
}

inline nlohmann::json to_json(const DemandScenario& d) {
  return {{"name", d.name},
          {"ns_straight_vph", d.ns_straight_vph},
          {"ew_straight_vph", d.ew_straight_vph},
          {"turns_vph", d.turns_vph},
          {"emergency_vph", d.emergency_vph},
          {"expected_vc", d.expected_vc},
          {"turn_left_share", d.turn_left_share}};
}

inline void from_json_at(const nlohmann::json& j, MatBandParams& m, const std::string& p) {
  using cfg_detail::read;
  read(j, "wait_band_s", m.wait_band_s, p);
  read(j, "wait_band_cap", m.wait_band_cap, p);
  read(j, "budget_emergency_s", m.budget_emergency_s, p);
  read(j, "budget_transit_s", m.budget_transit_s, p);
  read(j, "budget_normal_s", m.budget_normal_s, p);
  read(j, "urgency_cap", m.urgency_cap, p);
}

inline nlohmann::json to_json(const MatBandParams& m) {
  return {{"wait_band_s", m.wait_band_s},
          {"wait_band_cap", m.wait_band_cap},
          {"budget_emergency_s", m.budget_emergency_s},
          {"budget_transit_s", m.budget_transit_s},
          {"budget_normal_s", m.budget_normal_s},
          {"urgency_cap", m.urgency_cap}};
}

inline void from_json_at(const nlohmann::json& j, HttpBackendConfig& h, const std::string& p) {
  using cfg_detail::read;
  read(j, "endpoint", h.endpoint, p);
  read(j, "model", h.model, p);
  read(j, "temperature", h.temperature, p);
  read(j, "llm_seed", h.llm_seed, p);
  read(j, "max_tokens", h.max_tokens, p);
  read(j, "api_key_env", h.api_key_env, p);
}

inline nlohmann::json to_json(const HttpBackendConfig& h) {
  return {{"endpoint", h.endpoint},   {"model", h.model},
          {"temperature", h.temperature}, {"llm_seed", h.llm_seed},
          {"max_tokens", h.max_tokens},   {"api_key_env", h.api_key_env}};
}

inline void from_json_at(const nlohmann::json& j, LidsaParams& l, const std::string& p) {
  using cfg_detail::read;
  read(j, "theta_p", l.theta_p, p);
  read(j, "delta_p", l.delta_p, p);
  read(j, "alpha_slow_s", l.alpha_slow_s, p);
  read(j, "eta_share", l.eta_share, p);
  read(j, "tau_safe_s", l.tau_safe_s, p);
  read(j, "follow_gap_s", l.follow_gap_s, p);
  read(j, "v_hold_mps", l.v_hold_mps, p);
  read(j, "watchdog_horizon_s", l.watchdog_horizon_s, p);
  read(j, "watchdog_guard_m", l.watchdog_guard_m, p);
  read(j, "query_cadence_s", l.query_cadence_s, p);
  read(j, "backend_timeout_s", l.backend_timeout_s, p);
  read(j, "backend", l.backend, p);
  if (j.contains("mat")) from_json_at(j.at("mat"), l.mat, p + ".mat");
  if (j.contains("http")) from_json_at(j.at("http"), l.http, p + ".http");
}

inline nlohmann::json to_json(const LidsaParams& l) {
  return {{"theta_p", l.theta_p},
          {"delta_p", l.delta_p},
          {"alpha_slow_s", l.alpha_slow_s},
          {"eta_share", l.eta_share},
          {"tau_safe_s", l.tau_safe_s},
          {"follow_gap_s", l.follow_gap_s},
          {"v_hold_mps", l.v_hold_mps},
          {"watchdog_horizon_s", l.watchdog_horizon_s},
          {"watchdog_guard_m", l.watchdog_guard_m},
          {"query_cadence_s", l.query_cadence_s},
          {"backend_timeout_s", l.backend_timeout_s},
          {"backend", l.backend},
          {"mat", to_json(l.mat)},
          {"http", to_json(l.http)}};
}

inline void from_json_at(const nlohmann::json& j, MetricsParams& m, const std::string& p) {
  using cfg_detail::read;
  read(j, "vc_bands", m.vc_bands, p);
  read(j, "temporal_budgets_s", m.temporal_budgets_s, p);
  read(j, "priority_emergency_s", m.priority_emergency_s, p);
  read(j, "priority_transit_s", m.priority_transit_s, p);
  read(j, "energy_stop_limit", m.energy_stop_limit, p);
  read(j, "halt_speed_mps", m.halt_speed_mps, p);
  read(j, "sample_every_steps", m.sample_every_steps, p);
  read(j, "vehicle_mass_kg", m.vehicle_mass_kg, p);
  read(j, "fuel_bin_edges", m.fuel_bin_edges, p);
  read(j, "fuel_bin_rates", m.fuel_bin_rates, p);
}

inline nlohmann::json to_json(const MetricsParams& m) {
  return {{"vc_bands", m.vc_bands},
          {"temporal_budgets_s", m.temporal_budgets_s},
          {"priority_emergency_s", m.priority_emergency_s},
          {"priority_transit_s", m.priority_transit_s},
          {"energy_stop_limit", m.energy_stop_limit},
          {"halt_speed_mps", m.halt_speed_mps},
          {"sample_every_steps", m.sample_every_steps},
          {"vehicle_mass_kg", m.vehicle_mass_kg},
          {"fuel_bin_edges", m.fuel_bin_edges},
          {"fuel_bin_rates", m.fuel_bin_rates}};
}

inline void from_json_at(const nlohmann::json& j, FixedCycleParams& f, const std::string& p) {
  using cfg_detail::read;
  read(j, "green_ns_s", f.green_ns_s, p);
  read(j, "green_ew_s", f.green_ew_s, p);
  read(j, "yellow_s", f.yellow_s, p);
}

inline nlohmann::json to_json(const FixedCycleParams& f) {
  return {{"green_ns_s", f.green_ns_s}, {"green_ew_s", f.green_ew_s}, {"yellow_s", f.yellow_s}};
}

inline void from_json_at(const nlohmann::json& j, ScatsParams& s, const std::string& p) {
  using cfg_detail::read;
  read(j, "yellow_s", s.yellow_s, p);
  read(j, "saturation_flow_vph", s.saturation_flow_vph, p);
  if (j.contains("plans")) {
    if (!j.at("plans").is_array() || j.at("plans").empty())
      throw ConfigError(p + ".plans: expected non-empty array");
    s.plans.clear();
    int i = 0;
    for (const auto& pj : j.at("plans")) {
      ScatsPlan plan;
      const std::string pp = p + ".plans[" + std::to_string(i++) + "]";
      read(pj, "ds_below", plan.ds_below, pp);
      read(pj, "green_ns_s", plan.green_ns_s, pp);
      read(pj, "green_ew_s", plan.green_ew_s, pp);
      s.plans.push_back(plan);
    }
  }
}

inline nlohmann::json to_json(const ScatsParams& s) {
  nlohmann::json plans = nlohmann::json::array();
  for (const auto& plan : s.plans)
    plans.push_back({{"ds_below", plan.ds_below},
                     {"green_ns_s", plan.green_ns_s},
                     {"green_ew_s", plan.green_ew_s}});
  return {{"plans", plans}, {"yellow_s", s.yellow_s},
          {"saturation_flow_vph", s.saturation_flow_vph}};
}

inline void from_json_at(const nlohmann::json& j, AimParams& a, const std::string& p) {
  using cfg_detail::read;
  read(j, "zone_side_m", a.zone_side_m, p);
  read(j, "tile_m", a.tile_m, p);
  read(j, "request_radius_m", a.request_radius_m, p);
  read(j, "prune_every_steps", a.prune_every_steps, p);
}

inline nlohmann::json to_json(const AimParams& a) {
  return {{"zone_side_m", a.zone_side_m},
          {"tile_m", a.tile_m},
          {"request_radius_m", a.request_radius_m},
          {"prune_every_steps", a.prune_every_steps}};
}

inline void from_json_at(const nlohmann::json& j, GlosaParams& g, const std::string& p) {
  cfg_detail::read(j, "fifo_window_s", g.fifo_window_s, p);
}

inline nlohmann::json to_json(const GlosaParams& g) {
  return {{"fifo_window_s", g.fifo_window_s}};
}

inline void from_json_at(const nlohmann::json& j, Config& c, const std::string& p) {
  if (!j.is_object()) throw ConfigError(p.empty() ? "config root must be an object" : p);
  if (j.contains("sim")) from_json_at(j.at("sim"), c.sim, "sim");
  if (j.contains("demand")) from_json_at(j.at("demand"), c.demand, "demand");
  if (j.contains("lidsa")) from_json_at(j.at("lidsa"), c.lidsa, "lidsa");
  if (j.contains("metrics")) from_json_at(j.at("metrics"), c.metrics, "metrics");
  if (j.contains("fixed_cycle")) from_json_at(j.at("fixed_cycle"), c.fixed_cycle, "fixed_cycle");
  if (j.contains("scats")) from_json_at(j.at("scats"), c.scats, "scats");
  if (j.contains("aim")) from_json_at(j.at("aim"), c.aim, "aim");
  if (j.contains("glosa")) from_json_at(j.at("glosa"), c.glosa, "glosa");
}

inline nlohmann::json to_json(const Config& c) {
  return {{"sim", to_json(c.sim)},
          {"demand", to_json(c.demand)},
          {"lidsa", to_json(c.lidsa)},
          {"metrics", to_json(c.metrics)},
          {"fixed_cycle", to_json(c.fixed_cycle)},
          {"scats", to_json(c.scats)},
          {"aim", to_json(c.aim)},
          {"glosa", to_json(c.glosa)}};
}

// Field-level complaints; empty means the config is usable.
inline std::vector<std::string> validate(const Config& c) {
  std::vector<std::string> errs;
  auto req = [&](bool ok, const std::string& msg) {
    if (!ok) errs.push_back(msg);
  };
  req(c.sim.step_s > 0, "sim.step_s: must be positive");
  req(c.sim.horizon_s > 0, "sim.horizon_s: must be positive");
  req(c.sim.v_min_mps > 0, "sim.v_min_mps: must be positive");
  req(c.sim.v_min_mps < c.sim.v_max_mps, "sim.v_min_mps: must be below sim.v_max_mps");
  req(c.sim.near_zone_m < c.sim.advisory_horizon_m,
      "sim.near_zone_m: must be below sim.advisory_horizon_m");
  req(c.sim.advisory_horizon_m <= c.sim.edge_length_m,
      "sim.advisory_horizon_m: must not exceed sim.edge_length_m");
  req(c.sim.conflict_zone_side_m > 0, "sim.conflict_zone_side_m: must be positive");
  req(c.demand.ns_straight_vph >= 0, "demand.ns_straight_vph: must be non-negative");
  req(c.demand.ew_straight_vph >= 0, "demand.ew_straight_vph: must be non-negative");
  req(c.demand.turns_vph >= 0, "demand.turns_vph: must be non-negative");
  req(c.demand.emergency_vph >= 0, "demand.emergency_vph: must be non-negative");
  req(c.demand.turn_left_share >= 0 && c.demand.turn_left_share <= 1,
      "demand.turn_left_share: must lie in [0,1]");
  const double vc = demand_vc_ratio(c.demand, c.fixed_cycle);
  if (std::abs(vc - c.demand.expected_vc) > 0.005) {
    std::ostringstream os;
    os << "demand.expected_vc: computed v/c " << vc << " differs from declared "
       << c.demand.expected_vc << " by more than 0.005";
    errs.push_back(os.str());
  }
  req(c.lidsa.theta_p > 0, "lidsa.theta_p: must be positive");
  req(c.lidsa.delta_p >= 0, "lidsa.delta_p: must be non-negative");
  req(c.lidsa.eta_share > 0 && c.lidsa.eta_share <= 1, "lidsa.eta_share: must lie in (0,1]");
  req(c.lidsa.follow_gap_s > 0, "lidsa.follow_gap_s: must be positive");
  req(c.lidsa.v_hold_mps >= 0, "lidsa.v_hold_mps: must be non-negative");
  req(c.lidsa.query_cadence_s > 0, "lidsa.query_cadence_s: must be positive");
  req(c.lidsa.backend == "rule" || c.lidsa.backend == "http",
      "lidsa.backend: must be 'rule' or 'http'");
  req(c.metrics.fuel_bin_rates.size() == c.metrics.fuel_bin_edges.size() + 1,
      "metrics.fuel_bin_rates: need exactly one more rate than edges");
  req(c.metrics.sample_every_steps > 0, "metrics.sample_every_steps: must be positive");
  req(!c.scats.plans.empty(), "scats.plans: must not be empty");
  req(c.aim.tile_m > 0 && c.aim.zone_side_m > 0, "aim: tile and zone sizes must be positive");
  return errs;
}

inline Config parse_config(const nlohmann::json& j) {
  Config c;
  from_json_at(j, c, "");
  auto errs = validate(c);
  if (!errs.empty()) {
    std::string all = "invalid config:";
    for (const auto& e : errs) all += "\n  " + e;
    throw ConfigError(all);
  }
  return c;
}

// Missing file or malformed JSON throws ConfigError; an empty object yields
// the full default configuration.
inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config parse: ") + e.what());
  }
  return parse_config(j);
}

inline std::string serialize(const Config& c) { return to_json(c).dump(2); }

}  // namespace lidsa
