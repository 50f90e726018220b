#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <deque>
#include <unordered_map>
#include <vector>

#include "lidsa/core_model.hpp"
#include "lidsa/engine.hpp"
#include "lidsa/scenario.hpp"

namespace lidsa {

namespace wd_detail {

// Zone-resolution footprints, one per approach and maneuver, built once per
// zone size. The watchdog rasterizes at the same 4x4 granularity the conflict
// matrix uses, so two plans sharing a tile is exactly a movement conflict.
inline const PathPlan& zone_plan(Approach a, Maneuver m, double zone_side) {
  static double cached_side = -1.0;
  static std::array<PathPlan, 12> plans;
  if (cached_side != zone_side) {
    for (int ai = 0; ai < 4; ++ai)
      for (int mi = 0; mi < 3; ++mi)
        plans[ai * 3 + mi] = sample_path(static_cast<Approach>(ai), static_cast<Maneuver>(mi),
                                         zone_side, 4, zone_side);
    cached_side = zone_side;
  }
  return plans[static_cast<int>(a) * 3 + static_cast<int>(m)];
}

// Unimpeded speed trace replaying the integrator step for step: speed tracks
// the advisory target until the stop line (`line_d` ahead), then the free
// cap, since advisories bind only on the approach. A full-stop advisory rides
// the stop-line barrier curve, overrunning at max braking when already too
// close, exactly like the kernel, and distance accrues at the post-update
// speed. Car following and cross-vehicle effects only ever slow a vehicle
// further, so distances covered by the trace are earliest-possible times.
class MotionTable {
 public:
  MotionTable(double v0, double target, double free_target, double line_d, double accel,
              double decel, double dt, double d_max,
              double stop_gap = std::numeric_limits<double>::infinity())
      : dt_(dt) {
    double v = std::max(0.0, v0);
    double d = 0.0;
    cum_.push_back(0.0);
    while (d < d_max && cum_.size() < 4096) {
      const double goal = d < line_d ? target : free_target;
      double desired =
          v < goal ? std::min(goal, v + accel * dt) : std::max(goal, v - decel * dt);
      if (d <= stop_gap)
        desired = std::min(desired, engine_detail::barrier_speed(stop_gap - d, decel, dt));
      desired = std::max(desired, v - decel * dt);
      v = std::max(0.0, desired);
      if (v * dt < 1e-6) break;  // parked short of d_max
      d += v * dt;
      cum_.push_back(d);
    }
  }

  // Time to cover `dist` along the trace; infinity when the trace parks first.
  double time_to(double dist) const {
    if (dist <= 0.0) return 0.0;
    if (dist > cum_.back()) return std::numeric_limits<double>::infinity();
    const auto it = std::lower_bound(cum_.begin(), cum_.end(), dist);
    const size_t k = static_cast<size_t>(it - cum_.begin());
    const double prev = cum_[k - 1];
    const double span = cum_[k] - prev;
    return (static_cast<double>(k) - 1.0 + (span > 0.0 ? (dist - prev) / span : 0.0)) * dt_;
  }

 private:
  double dt_;
  std::vector<double> cum_;
};

}  // namespace wd_detail

struct TileWindow {
  int cell = 0;  // row * grid + col in the zone raster
  double enter_s = 0.0;
  double exit_s = 0.0;
};

struct CrossingPlan {
  VehicleId id = 0;
  Approach approach = Approach::N;
  Maneuver maneuver = Maneuver::Straight;
  double entry_s = 0.0;  // earliest tile entry; 0 while occupying the zone
  double position_m = 0.0;
  bool committed = false;  // already inside the conflict zone, cannot be held
  bool can_stop = false;   // still able to brake to rest before the stop line
  std::vector<TileWindow> tiles;
};

struct WatchdogReport {
  int overrides = 0;
  std::vector<VehicleId> held;
  std::vector<VehicleId> blockers;  // parallel to held: who owns the contested tiles
};

// Tile windows for one vehicle tracking `target` from its current state, with
// an optional stop-line barrier at `stop_gap` meters ahead. A vehicle rolling
// to a stop projects only the tiles its braking run still reaches; a tile it
// would halt on keeps an open-ended window until a later pass frees it.
inline CrossingPlan plan_vehicle(const Vehicle& v, const SimConfig& sim, double target,
                                 double stop_gap) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const bool can_stop = v.speed_mps * v.speed_mps <= 2.0 * v.decel_max * v.position_m + 1e-6;
  const PathPlan& path = wd_detail::zone_plan(v.approach, v.maneuver, sim.conflict_zone_side_m);
  const double d_max = v.position_m + path.length_m + v.length_m + 1.0;
  const double v_cap = std::min(v.v_max_type, sim.v_max_mps);
  const wd_detail::MotionTable trace(v.speed_mps, target, v_cap, std::max(v.position_m, 0.0),
                                     v.accel_max, v.decel_max, sim.step_s, d_max, stop_gap);
  CrossingPlan p{v.id, v.approach, v.maneuver, kInf, v.position_m, v.position_m < 0.0,
                 can_stop, {}};
  for (const TileSpan& span : path.spans) {
    const double d_exit = v.position_m + span.s1 + v.length_m;
    if (d_exit <= 0.0) continue;  // rear bumper already past this tile
    const double enter = trace.time_to(v.position_m + span.s0);
    if (std::isinf(enter)) continue;  // braking run parks before reaching it
    TileWindow w;
    w.cell = span.cell;
    w.enter_s = enter;
    w.exit_s = trace.time_to(d_exit);
    p.entry_s = std::min(p.entry_s, w.enter_s);
    p.tiles.push_back(w);
  }
  return p;
}

// Projects, tile by tile, when each near-zone vehicle would occupy the
// conflict zone if it tracked its advisory unimpeded from its current state.
inline std::vector<CrossingPlan> project_crossings(const WorldState& world, const SimConfig& sim,
                                                   const ControlDecision& decision) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<CrossingPlan> plans;
  for (const Vehicle& v : world.vehicles) {
    if (v.position_m > sim.near_zone_m) continue;
    const double v_cap = std::min(v.v_max_type, sim.v_max_mps);
    double target = v_cap;
    double stop_gap = kInf;
    if (v.position_m >= 0.0) {
      if (auto it = decision.advisories.find(v.id); it != decision.advisories.end()) {
        if (it->second <= 0.0)
          stop_gap = v.position_m;
        else
          target = std::min(it->second, v_cap);
      }
      const bool can_stop = v.speed_mps * v.speed_mps <= 2.0 * v.decel_max * v.position_m + 1e-6;
      if (decision.gated[static_cast<int>(v.approach)] && can_stop)
        stop_gap = std::min(stop_gap, v.position_m);
    }
    CrossingPlan p = plan_vehicle(v, sim, target, stop_gap);
    if (p.tiles.empty()) continue;  // parked or drained, nothing left to guard
    plans.push_back(std::move(p));
  }
  std::sort(plans.begin(), plans.end(), [](const CrossingPlan& a, const CrossingPlan& b) {
    if (a.committed != b.committed) return a.committed;
    if (a.entry_s != b.entry_s) return a.entry_s < b.entry_s;
    return a.id < b.id;
  });
  return plans;
}

namespace wd_detail {

inline bool windows_overlap(const CrossingPlan& a, const CrossingPlan& b) {
  for (const TileWindow& wa : a.tiles)
    for (const TileWindow& wb : b.tiles)
      if (wa.cell == wb.cell && wa.enter_s < wb.exit_s && wb.enter_s < wa.exit_s) return true;
  return false;
}

}  // namespace wd_detail

// Post-hoc guard over any controller's advisories. Each pass projects every
// near-zone vehicle, then admits plans in arrival order: committed occupants
// first and unconditionally, the rest only while no tile they need is booked
// by an already admitted conflicting movement during their window. A blocked
// vehicle that can still stop is overridden to the hold speed inside the
// lookahead and to a full stop once within the guard distance; the override
// is re-derived every step, so it lasts exactly as long as the contested
// tiles stay booked. A blocked vehicle past its braking point cannot be
// brought to rest, but braking usually still separates the pair, so it is
// held with the intrusion its braking run makes booked like an occupant's;
// when even that cannot separate them it is admitted as-is and every
// stoppable vehicle in its path is evicted and held instead.
class Watchdog {
 public:
  WatchdogReport pass(const WorldState& world, const SimConfig& sim, const LidsaParams& params,
                      ControlDecision& decision) {
    WatchdogReport report;
    const std::vector<CrossingPlan> plans = project_crossings(world, sim, decision);
    std::unordered_map<VehicleId, const Vehicle*> by_id;
    for (const Vehicle& v : world.vehicles) by_id.emplace(v.id, &v);

    std::vector<const CrossingPlan*> accepted;
    std::deque<CrossingPlan> slowed_store;  // stable addresses for booked intrusions
    auto blocking = [&](const CrossingPlan& p) -> const CrossingPlan* {
      for (const CrossingPlan* a : accepted) {
        if (a->approach == p.approach) continue;  // same lane, car following handles spacing
        if (!conflicts(a->approach, a->maneuver, p.approach, p.maneuver)) continue;
        if (wd_detail::windows_overlap(*a, p)) return a;
      }
      return nullptr;
    };
    auto hold_advisory = [&](const CrossingPlan& p) {
      double current = sim.v_max_mps;
      if (auto it = decision.advisories.find(p.id); it != decision.advisories.end())
        current = it->second;
      double v = std::min(current, params.v_hold_mps);
      if (p.position_m <= params.watchdog_guard_m) v = 0.0;
      return v;
    };
    auto hold = [&](const CrossingPlan& p, const CrossingPlan& b) {
      decision.advisories[p.id] = hold_advisory(p);
      ++report.overrides;
      report.held.push_back(p.id);
      report.blockers.push_back(b.id);
    };

    for (const CrossingPlan& p : plans) {
      if (p.committed) {
        accepted.push_back(&p);
        continue;
      }
      const CrossingPlan* b = blocking(p);
      if (!b) {
        accepted.push_back(&p);
        continue;
      }
      if (!p.can_stop) {
        const Vehicle& veh = *by_id.at(p.id);
        const double v_held = hold_advisory(p);
        CrossingPlan slowed =
            v_held > 0.0
                ? plan_vehicle(veh, sim, v_held, std::numeric_limits<double>::infinity())
                : plan_vehicle(veh, sim, std::min(veh.v_max_type, sim.v_max_mps), p.position_m);
        if (!blocking(slowed)) {
          // Slowing separates the pair: hold, and book the intrusion the
          // braking run still makes so nobody is admitted into it.
          hold(p, *b);
          if (!slowed.tiles.empty()) {
            slowed_store.push_back(std::move(slowed));
            accepted.push_back(&slowed_store.back());
          }
        } else {
          // Physics has decided: admit the vehicle and clear its path of
          // everyone the guard can still legitimately stop.
          std::erase_if(accepted, [&](const CrossingPlan* a) {
            if (a->committed || !a->can_stop || a->approach == p.approach) return false;
            if (!conflicts(a->approach, a->maneuver, p.approach, p.maneuver)) return false;
            if (!wd_detail::windows_overlap(*a, p)) return false;
            hold(*a, p);
            return true;
          });
          accepted.push_back(&p);
        }
        continue;
      }
      if (p.entry_s <= params.watchdog_horizon_s) hold(p, *b);
      // Blocked but still far: leave the advisory alone, book no tiles, and
      // let a later pass decide when the picture firms up.
    }
    return report;
  }
};

}  // namespace lidsa
