#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <unordered_map>
#include <vector>

#include "lidsa/core_model.hpp"
#include "lidsa/scenario.hpp"

namespace lidsa {

// Speed below which a vehicle counts as halted.
inline constexpr double kHaltSpeed = 0.1;

// Seconds of reaction budget the advisory pipeline has before a vehicle that
// entered the horizon reaches the near zone at the speed limit.
inline double latency_buffer_s(double advisory_horizon_m, double near_zone_m, double v_max) {
  return (advisory_horizon_m - near_zone_m) / v_max;
}

// Per-step controller output. Missing advisory means "drive at the limit".
// An advisory of exactly 0 asks the vehicle to stop at the stop line, not to
// brake on the spot. `gated` closes an approach at the line (signal red).
struct ControlDecision {
  std::unordered_map<VehicleId, double> advisories;
  std::array<bool, 4> gated{};
};

struct WorldState {
  int time_s = 0;
  std::vector<Vehicle> vehicles;   // active, spawn order
  std::vector<Vehicle> completed;  // arrival order
  std::uint64_t spawned_total = 0;
  VehicleId next_id = 1;
  std::array<std::uint64_t, 4> crossings{};  // cumulative stop-line crossings
};

namespace engine_detail {

// Largest speed that still lets the vehicle come to rest within `gap_m`
// braking at `decel` from the next step on. Never asks for more than one
// step of full braking when the previous speed already satisfied it.
inline double barrier_speed(double gap_m, double decel, double dt) {
  const double bd = decel * dt;
  const double g = std::max(0.0, gap_m);
  return -bd + std::sqrt(bd * bd + 2.0 * decel * g);
}

inline double spawn_rear_gap(const Vehicle& pred, double spawn_pos, double standstill) {
  return spawn_pos - (pred.position_m + pred.length_m) - standstill;
}

}  // namespace engine_detail

// Advances the world one step. Updates speeds toward the advisory target
// under acceleration/braking limits, enforces the standstill gap behind the
// predecessor and any stop-line barrier, then moves vehicles and folds wait
// and crossing bookkeeping. Completed trips migrate to `completed`.
inline void step(WorldState& world, const ControlDecision& decision, const SimConfig& sim) {
  const double dt = sim.step_s;
  const double v_net = sim.v_max_mps;
  const double zone = sim.conflict_zone_side_m;

  // Per-approach front-to-back order (smallest position first).
  std::array<std::vector<Vehicle*>, 4> lanes;
  for (auto& v : world.vehicles) lanes[static_cast<int>(v.approach)].push_back(&v);
  for (auto& lane : lanes)
    std::sort(lane.begin(), lane.end(), [](const Vehicle* a, const Vehicle* b) {
      if (a->position_m != b->position_m) return a->position_m < b->position_m;
      return a->id < b->id;
    });

  for (auto& lane : lanes) {
    const Vehicle* pred = nullptr;
    for (Vehicle* vp : lane) {
      Vehicle& v = *vp;
      const double v_cap = std::min(v.v_max_type, v_net);
      const bool before_line = v.position_m >= 0.0;

      double target = v_cap;
      bool stop_at_line = false;
      if (before_line) {
        if (auto it = decision.advisories.find(v.id); it != decision.advisories.end()) {
          if (it->second <= 0.0)
            stop_at_line = true;  // full-stop advisory: roll up to the line and hold
          else
            target = std::min(it->second, v_cap);
        }
        if (decision.gated[static_cast<int>(v.approach)]) {
          // Red/yellow barrier unless the vehicle is already too close to stop.
          // A vehicle braking toward the line rides v^2 == 2b*d exactly, so
          // the feasibility check needs slack against rounding noise.
          const bool can_stop =
              v.speed_mps * v.speed_mps <= 2.0 * v.decel_max * v.position_m + 1e-6;
          if (can_stop) stop_at_line = true;
        }
      }

      double desired = target >= v.speed_mps
                           ? std::min(target, v.speed_mps + v.accel_max * dt)
                           : std::max(target, v.speed_mps - v.decel_max * dt);
      if (stop_at_line)
        desired = std::min(desired, engine_detail::barrier_speed(v.position_m, v.decel_max, dt));
      if (pred) {
        const double gap = v.position_m - (pred->position_m + pred->length_m) -
                           sim.standstill_gap_m;
        desired = std::min(desired, engine_detail::barrier_speed(gap, v.decel_max, dt));
      }
      // Braking is physically capped: an infeasible late stop request means
      // the vehicle overruns the line at max braking instead of teleporting.
      desired = std::max(desired, v.speed_mps - v.decel_max * dt);

      const double v_prev = v.speed_mps;
      const double v_new = std::clamp(desired, 0.0, v_cap);
      const double pos_new = v.position_m - v_new * dt;

      if (v.position_m >= 0.0 && pos_new < 0.0)
        ++world.crossings[static_cast<int>(v.approach)];

      v.prev_speed_mps = v_prev;
      v.speed_mps = v_new;
      v.position_m = pos_new;

      if (v_new < kHaltSpeed) {
        if (v_prev >= kHaltSpeed) ++v.stop_count;
        v.cumulative_wait_s += dt;
        v.current_stop_s += dt;
        if (pos_new >= 0.0 && pos_new <= sim.near_zone_m) v.near_zone_wait_s += dt;
      } else {
        v.current_stop_s = 0.0;
      }

      pred = &v;
    }
  }

  world.time_s += 1;

  // Arrivals: fully past the far side of the zone.
  auto arrived = [&](const Vehicle& v) { return v.position_m <= -(zone + v.length_m); };
  for (auto& v : world.vehicles)
    if (arrived(v)) {
      v.arrive_time_s = world.time_s;
      v.exit_edge = outbound_edge(v.approach, v.maneuver);
      world.completed.push_back(v);
    }
  std::erase_if(world.vehicles, arrived);
}

// Bernoulli arrival streams, one draw per movement per step in fixed
// N,E,S,W x straight,left,right order, then the emergency stream. The draw
// sequence depends only on the seed, never on controller behavior.
inline void spawn(WorldState& world, const DemandScenario& demand, const SimConfig& sim,
                  std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double dt_h = sim.step_s / 3600.0;

  struct Pending {
    Approach approach;
    Maneuver maneuver;
    VehicleTypeProfile profile;
  };
  std::vector<Pending> pending;

  for (Approach a : all_approaches) {
    const bool ns = a == Approach::N || a == Approach::S;
    const double straight = ns ? demand.ns_straight_vph : demand.ew_straight_vph;
    const double left = demand.turns_vph * demand.turn_left_share;
    const double right = demand.turns_vph * (1.0 - demand.turn_left_share);
    const std::array<std::pair<Maneuver, double>, 3> streams{
        std::pair{Maneuver::Straight, straight},
        std::pair{Maneuver::Left, left},
        std::pair{Maneuver::Right, right}};
    for (auto [m, rate] : streams)
      if (uni(rng) < rate * dt_h) pending.push_back({a, m, car_profile()});
  }
  if (uni(rng) < demand.emergency_vph * dt_h) {
    std::uniform_int_distribution<int> pick(0, 3);
    pending.push_back({all_approaches[pick(rng)], Maneuver::Straight, ambulance_profile()});
  }

  for (const auto& p : pending) {
    Vehicle v;
    v.id = world.next_id++;
    v.approach = p.approach;
    v.maneuver = p.maneuver;
    v.priority = p.profile.priority;
    v.occupancy = p.profile.occupancy;
    v.energy_pref = uni(rng);
    v.length_m = p.profile.length_m;
    v.accel_max = p.profile.accel_max;
    v.decel_max = p.profile.decel_max;
    v.v_max_type = p.profile.v_max;
    v.depart_time_s = world.time_s;

    // Entry point, pushed back behind any queue spilling past the edge so the
    // arrival count stays binomial and the gap invariant holds from birth.
    double pos = sim.edge_length_m;
    const Vehicle* rearmost = nullptr;
    for (const auto& u : world.vehicles)
      if (u.approach == p.approach && (!rearmost || u.position_m > rearmost->position_m))
        rearmost = &u;
    double v_spawn = std::min(p.profile.v_max, sim.v_max_mps);
    if (rearmost) {
      pos = std::max(pos, rearmost->position_m + rearmost->length_m + sim.standstill_gap_m);
      const double gap = engine_detail::spawn_rear_gap(*rearmost, pos, sim.standstill_gap_m);
      v_spawn = std::min(v_spawn, std::sqrt(std::max(0.0, 2.0 * v.decel_max * gap)));
    }
    v.position_m = pos;
    v.speed_mps = v_spawn;
    v.prev_speed_mps = v_spawn;

    world.vehicles.push_back(v);
    ++world.spawned_total;
  }
}

// Cheap structural invariants; used by tests and the run loop in debug runs.
inline bool conserved(const WorldState& world) {
  return world.vehicles.size() + world.completed.size() == world.spawned_total;
}

}  // namespace lidsa
