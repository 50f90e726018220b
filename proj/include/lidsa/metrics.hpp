#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lidsa/core_model.hpp"
#include "lidsa/engine.hpp"
#include "lidsa/scenario.hpp"

namespace lidsa {

// Vehicle specific power, kW/t, for a flat road.
inline double vsp_kw_per_t(double speed_mps, double accel_mps2) {
  return speed_mps * (1.1 * accel_mps2 + 0.132) + 3.02e-4 * speed_mps * speed_mps * speed_mps;
}

// Binned fuel rate. Idle and negative power fall into the lowest bin.
inline double fuel_rate_gps(double speed_mps, double accel_mps2, const MetricsParams& p) {
  if (speed_mps < p.halt_speed_mps) return p.fuel_bin_rates.front();
  const double vsp = vsp_kw_per_t(speed_mps, accel_mps2);
  for (std::size_t i = 0; i < p.fuel_bin_edges.size(); ++i)
    if (vsp < p.fuel_bin_edges[i]) return p.fuel_bin_rates[i];
  return p.fuel_bin_rates.back();
}

inline double control_delay_s(double travel_s, double trip_m, double v_max_mps) {
  return std::max(0.0, travel_s - trip_m / v_max_mps);
}

inline std::string los_grade(double delay_s) {
  if (delay_s <= 10.0) return "A";
  if (delay_s <= 20.0) return "B";
  if (delay_s <= 35.0) return "C";
  if (delay_s <= 55.0) return "D";
  if (delay_s <= 80.0) return "E";
  return "F";
}

inline int vc_band(double vc, const std::array<double, 2>& bands) {
  if (vc < bands[0]) return 0;
  if (vc < bands[1]) return 1;
  return 2;
}

struct IntentResult {
  bool spatial = false;
  bool temporal = false;
  bool priority = false;
  bool energy = false;
  double score = 0.0;
};

// Four-facet intent satisfaction for one completed trip.
inline IntentResult vehicle_intent(const Vehicle& v, const MetricsParams& p, const SimConfig& sim,
                                   double temporal_budget_s) {
  IntentResult r;
  r.spatial = v.exit_edge && *v.exit_edge == outbound_edge(v.approach, v.maneuver);
  const double travel = static_cast<double>(*v.arrive_time_s - v.depart_time_s);
  r.temporal = control_delay_s(travel, sim.trip_length_m, sim.v_max_mps) <= temporal_budget_s;
  switch (v.priority) {
    case PriorityClass::Emergency:
      r.priority = v.near_zone_wait_s < p.priority_emergency_s;
      break;
    case PriorityClass::Transit:
      r.priority = v.near_zone_wait_s < p.priority_transit_s;
      break;
    case PriorityClass::Normal:
      r.priority = true;
      break;
  }
  if (v.energy_pref <= 1e-12)
    r.energy = true;
  else
    r.energy = v.max_decel_obs <= v.decel_max * (1.0 - 0.5 * v.energy_pref) &&
               v.stop_count <= p.energy_stop_limit;
  r.score = 0.20 * r.spatial + 0.40 * r.temporal + 0.20 * r.priority + 0.20 * r.energy;
  return r;
}

struct RunMetrics {
  int completed = 0;
  std::uint64_t spawned = 0;
  double duration_s = 0.0;
  double control_delay_s = 0.0;
  std::string los = "A";
  double mean_wait_s = 0.0;
  double avg_queue_veh = 0.0;
  int peak_queue_veh = 0;
  double mean_speed_kmh = 0.0;
  double stops_per_veh = 0.0;
  double throughput_vph = 0.0;
  double intent_pct = 0.0;
  double spatial_pct = 0.0;
  double temporal_pct = 0.0;
  double priority_pct = 0.0;
  double energy_pct = 0.0;
  double fuel_g_per_veh = 0.0;
  double ke_loss_kj_per_veh = 0.0;
  double vc_ratio = 0.0;
};

inline void to_json(nlohmann::json& j, const RunMetrics& m) {
  j = {{"completed", m.completed},
       {"spawned", m.spawned},
       {"duration_s", m.duration_s},
       {"control_delay_s", m.control_delay_s},
       {"los", m.los},
       {"mean_wait_s", m.mean_wait_s},
       {"avg_queue_veh", m.avg_queue_veh},
       {"peak_queue_veh", m.peak_queue_veh},
       {"mean_speed_kmh", m.mean_speed_kmh},
       {"stops_per_veh", m.stops_per_veh},
       {"throughput_vph", m.throughput_vph},
       {"intent_pct", m.intent_pct},
       {"spatial_pct", m.spatial_pct},
       {"temporal_pct", m.temporal_pct},
       {"priority_pct", m.priority_pct},
       {"energy_pct", m.energy_pct},
       {"fuel_g_per_veh", m.fuel_g_per_veh},
       {"ke_loss_kj_per_veh", m.ke_loss_kj_per_veh},
       {"vc_ratio", m.vc_ratio}};
}

inline void from_json(const nlohmann::json& j, RunMetrics& m) {
  j.at("completed").get_to(m.completed);
  j.at("spawned").get_to(m.spawned);
  j.at("duration_s").get_to(m.duration_s);
  j.at("control_delay_s").get_to(m.control_delay_s);
  j.at("los").get_to(m.los);
  j.at("mean_wait_s").get_to(m.mean_wait_s);
  j.at("avg_queue_veh").get_to(m.avg_queue_veh);
  j.at("peak_queue_veh").get_to(m.peak_queue_veh);
  j.at("mean_speed_kmh").get_to(m.mean_speed_kmh);
  j.at("stops_per_veh").get_to(m.stops_per_veh);
  j.at("throughput_vph").get_to(m.throughput_vph);
  j.at("intent_pct").get_to(m.intent_pct);
  j.at("spatial_pct").get_to(m.spatial_pct);
  j.at("temporal_pct").get_to(m.temporal_pct);
  j.at("priority_pct").get_to(m.priority_pct);
  j.at("energy_pct").get_to(m.energy_pct);
  j.at("fuel_g_per_veh").get_to(m.fuel_g_per_veh);
  j.at("ke_loss_kj_per_veh").get_to(m.ke_loss_kj_per_veh);
  j.at("vc_ratio").get_to(m.vc_ratio);
}

inline const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols = {
      "control_delay_s", "los",           "mean_wait_s",     "avg_queue_veh",
      "peak_queue_veh",  "mean_speed_kmh", "stops_per_veh",  "throughput_vph",
      "intent_pct",      "spatial_pct",   "temporal_pct",    "priority_pct",
      "energy_pct",      "fuel_g_per_veh", "ke_loss_kj_per_veh", "vc_ratio",
      "completed",       "spawned"};
  return cols;
}

// Per-step fold plus sampled queue/wait/speed series; finalize() collapses
// everything into one RunMetrics.
class MetricsAccumulator {
 public:
  MetricsAccumulator(MetricsParams params, SimConfig sim) : params_(params), sim_(sim) {}

  void after_step(WorldState& world) {
    ++steps_;
    const double dt = sim_.step_s;
    auto fold = [&](Vehicle& v) {
      const double a = (v.speed_mps - v.prev_speed_mps) / dt;
      v.fuel_g += fuel_rate_gps(v.speed_mps, a, params_) * dt;
      if (v.speed_mps < v.prev_speed_mps) {
        v.ke_loss_kj += 0.5 * params_.vehicle_mass_kg *
                        (v.prev_speed_mps * v.prev_speed_mps - v.speed_mps * v.speed_mps) /
                        1000.0;
        v.max_decel_obs = std::max(v.max_decel_obs, (v.prev_speed_mps - v.speed_mps) / dt);
      }
    };
    for (auto& v : world.vehicles) fold(v);
    for (std::size_t i = folded_completed_; i < world.completed.size(); ++i)
      fold(world.completed[i]);
    folded_completed_ = world.completed.size();

    if (steps_ % params_.sample_every_steps == 0) {
      int halting = 0, inbound = 0;
      double wait_sum = 0.0, speed_sum = 0.0;
      for (const auto& v : world.vehicles) {
        speed_sum += v.speed_mps;
        if (v.position_m >= 0.0) {
          ++inbound;
          wait_sum += v.current_stop_s;
          if (v.speed_mps < params_.halt_speed_mps) ++halting;
        }
      }
      queue_samples_.push_back(halting);
      if (inbound > 0) wait_samples_.push_back(wait_sum / inbound);
      if (!world.vehicles.empty())
        speed_samples_.push_back(speed_sum / static_cast<double>(world.vehicles.size()));
    }
  }

  RunMetrics finalize(const WorldState& world, const DemandScenario& demand,
                      const FixedCycleParams& fixed_ref) const {
    RunMetrics m;
    m.completed = static_cast<int>(world.completed.size());
    m.spawned = world.spawned_total;
    m.duration_s = steps_ * sim_.step_s;
    m.vc_ratio = demand_vc_ratio(demand, fixed_ref);
    const double budget = params_.temporal_budgets_s[vc_band(m.vc_ratio, params_.vc_bands)];

    double delay_sum = 0.0, stops_sum = 0.0, fuel_sum = 0.0, ke_sum = 0.0;
    double sp = 0.0, tm = 0.0, pr = 0.0, en = 0.0, score = 0.0;
    for (const Vehicle& v : world.completed) {
      const double travel = static_cast<double>(*v.arrive_time_s - v.depart_time_s);
      delay_sum += control_delay_s(travel, sim_.trip_length_m, sim_.v_max_mps);
      stops_sum += v.stop_count;
      fuel_sum += v.fuel_g;
      ke_sum += v.ke_loss_kj;
      const IntentResult r = vehicle_intent(v, params_, sim_, budget);
      sp += r.spatial;
      tm += r.temporal;
      pr += r.priority;
      en += r.energy;
      score += r.score;
    }
    if (m.completed > 0) {
      const double n = m.completed;
      m.control_delay_s = delay_sum / n;
      m.stops_per_veh = stops_sum / n;
      m.fuel_g_per_veh = fuel_sum / n;
      m.ke_loss_kj_per_veh = ke_sum / n;
      m.spatial_pct = 100.0 * sp / n;
      m.temporal_pct = 100.0 * tm / n;
      m.priority_pct = 100.0 * pr / n;
      m.energy_pct = 100.0 * en / n;
      m.intent_pct = 100.0 * score / n;
    }
    m.los = los_grade(m.control_delay_s);
    if (!queue_samples_.empty()) {
      double qs = 0.0;
      for (int q : queue_samples_) {
        qs += q;
        m.peak_queue_veh = std::max(m.peak_queue_veh, q);
      }
      m.avg_queue_veh = qs / static_cast<double>(queue_samples_.size());
    }
    if (!wait_samples_.empty()) {
      double ws = 0.0;
      for (double w : wait_samples_) ws += w;
      m.mean_wait_s = ws / static_cast<double>(wait_samples_.size());
    }
    if (!speed_samples_.empty()) {
      double ss = 0.0;
      for (double s : speed_samples_) ss += s;
      m.mean_speed_kmh = 3.6 * ss / static_cast<double>(speed_samples_.size());
    }
    if (m.duration_s > 0.0) m.throughput_vph = m.completed * 3600.0 / m.duration_s;
    return m;
  }

 private:
  MetricsParams params_;
  SimConfig sim_;
  long long steps_ = 0;
  std::size_t folded_completed_ = 0;
  std::vector<int> queue_samples_;
  std::vector<double> wait_samples_;
  std::vector<double> speed_samples_;
};

}  // namespace lidsa
