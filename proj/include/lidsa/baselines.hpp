#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lidsa/controller.hpp"
#include "lidsa/core_model.hpp"
#include "lidsa/scenario.hpp"

namespace lidsa {

enum class SignalPhase { GreenNS, YellowNS, GreenEW, YellowEW };

struct PhaseState {
  SignalPhase phase = SignalPhase::GreenNS;
  double into_phase_s = 0.0;
};

inline bool is_ns(Approach a) { return a == Approach::N || a == Approach::S; }

inline PhaseState phase_at(double t, double green_ns, double green_ew, double yellow) {
  const double cycle = green_ns + green_ew + 2.0 * yellow;
  double u = std::fmod(t, cycle);
  if (u < 0) u += cycle;
  if (u < green_ns) return {SignalPhase::GreenNS, u};
  u -= green_ns;
  if (u < yellow) return {SignalPhase::YellowNS, u};
  u -= yellow;
  if (u < green_ew) return {SignalPhase::GreenEW, u};
  return {SignalPhase::YellowEW, u - green_ew};
}

inline bool approach_open(SignalPhase p, Approach a) {
  return is_ns(a) ? p == SignalPhase::GreenNS : p == SignalPhase::GreenEW;
}

// Pre-timed two-phase signal. Gates do the work: the kernel stops gated
// vehicles at the line unless they are inside braking distance at onset.
class FixedCycleController : public Controller {
 public:
  explicit FixedCycleController(FixedCycleParams params) : params_(params) {}
  std::string name() const override { return "fixed"; }

  ControlDecision decide(const WorldState& world) override {
    ControlDecision d;
    const PhaseState ph =
        phase_at(world.time_s, params_.green_ns_s, params_.green_ew_s, params_.yellow_s);
    for (Approach a : all_approaches)
      d.gated[static_cast<int>(a)] = !approach_open(ph.phase, a);
    return d;
  }

 private:
  FixedCycleParams params_;
};

// Adaptive plan selection in the style of cycle-based actuated control:
// pick among fixed plans by the degree of saturation measured over the
// cycle that just finished. Flow comes from stop-line crossing counts.
class ScatsController : public Controller {
 public:
  ScatsController(ScatsParams params, SimConfig sim) : params_(params), sim_(sim) {}
  std::string name() const override { return "scats"; }

  ControlDecision decide(const WorldState& world) override {
    const ScatsPlan& active = params_.plans.at(plan_idx_);
    const double cycle = active.green_ns_s + active.green_ew_s + 2.0 * params_.yellow_s;
    if (world.time_s - cycle_start_s_ >= cycle) {
      last_ds_ = degree_of_saturation(world, active, cycle);
      plan_idx_ = select_plan(last_ds_);
      cycle_start_s_ = world.time_s;
      crossings_at_start_ = world.crossings;
      ++cycles_completed_;
    }
    const ScatsPlan& plan = params_.plans.at(plan_idx_);
    const PhaseState ph = phase_at(world.time_s - cycle_start_s_, plan.green_ns_s,
                                   plan.green_ew_s, params_.yellow_s);
    ControlDecision d;
    for (Approach a : all_approaches)
      d.gated[static_cast<int>(a)] = !approach_open(ph.phase, a);
    return d;
  }

  nlohmann::json stats() const override {
    return {{"plan_index", plan_idx_},
            {"cycles_completed", cycles_completed_},
            {"last_degree_of_saturation", last_ds_}};
  }

  int plan_index() const { return plan_idx_; }
  double last_degree_of_saturation() const { return last_ds_; }

 private:
  double degree_of_saturation(const WorldState& world, const ScatsPlan& plan,
                              double cycle) const {
    auto flow = [&](Approach a) {
      const auto i = static_cast<std::size_t>(a);
      return static_cast<double>(world.crossings[i] - crossings_at_start_[i]) * 3600.0 / cycle;
    };
    const double q_ns = std::max(flow(Approach::N), flow(Approach::S));
    const double q_ew = std::max(flow(Approach::E), flow(Approach::W));
    const double cap_ns = plan.green_ns_s / cycle * params_.saturation_flow_vph;
    const double cap_ew = plan.green_ew_s / cycle * params_.saturation_flow_vph;
    return std::max(q_ns / cap_ns, q_ew / cap_ew);
  }

  int select_plan(double ds) const {
    for (std::size_t i = 0; i < params_.plans.size(); ++i)
      if (ds < params_.plans[i].ds_below) return static_cast<int>(i);
    return static_cast<int>(params_.plans.size()) - 1;
  }

  ScatsParams params_;
  SimConfig sim_;
  int plan_idx_ = 0;
  double cycle_start_s_ = 0.0;
  std::array<std::uint64_t, 4> crossings_at_start_{};
  int cycles_completed_ = 0;
  double last_ds_ = 0.0;
};

// Reservation-based manager: vehicles request a tile-level slot through a
// grid over the intersection box and pace themselves to their granted entry
// time. Ungranted vehicles run free and rely on gaps in the grant schedule.
class AimController : public Controller {
 public:
  AimController(AimParams params, SimConfig sim) : params_(params), sim_(sim) {
    const int grid = std::max(1, static_cast<int>(params_.zone_side_m / params_.tile_m));
    for (Approach a : all_approaches)
      for (Maneuver m : {Maneuver::Left, Maneuver::Straight, Maneuver::Right})
        paths_[key(a, m)] = sample_path(a, m, params_.zone_side_m, grid,
                                                    sim_.conflict_zone_side_m);
  }
  std::string name() const override { return "aim"; }

  ControlDecision decide(const WorldState& world) override {
    ControlDecision d;
    maybe_prune(world);
    for (const Vehicle& v : world.vehicles) {
      if (v.position_m < 0.0) {
        // Committed to the crossing: the calendar entry has served its purpose.
        if (auto git = grants_.find(v.id); git != grants_.end()) {
          release(git->second);
          grants_.erase(git);
        }
        continue;
      }
      if (v.position_m > params_.request_radius_m) continue;
      const double speed = std::min(v.v_max_type, sim_.v_max_mps);
      auto git = grants_.find(v.id);
      if (git == grants_.end()) {
        auto grant = book(v, world.time_s, speed);
        if (grant) git = grants_.emplace(v.id, *grant).first;
      }
      // Ungranted vehicles (and anyone past their slot start) run free; the
      // car-following model absorbs whatever conflict the calendar missed.
      if (git == grants_.end()) continue;
      const double lead = git->second.start_s - world.time_s;
      if (lead > 1e-9)
        d.advisories[v.id] = std::clamp(v.position_m / lead, 0.0, speed);
    }
    return d;
  }

  nlohmann::json stats() const override {
    return {{"grants_issued", grants_issued_}, {"live_reservations", reservations_.size()}};
  }

 private:
  struct Grant {
    double start_s = 0.0;
    std::vector<std::int64_t> cells;
  };

  static int key(Approach a, Maneuver m) { return static_cast<int>(a) * 3 + static_cast<int>(m); }
  static std::int64_t slot(int cell, int step) { return static_cast<std::int64_t>(step) * 128 + cell; }

  std::optional<Grant> book(const Vehicle& v, double now, double speed) {
    const auto& plan = paths_.at(key(v.approach, v.maneuver));
    const double earliest = now + v.position_m / speed;
    for (int attempt = 0; attempt < 900; ++attempt) {
      const double start = earliest + attempt;
      bool free = true;
      for (const auto& span : plan.spans) {
        const int step0 = static_cast<int>(std::floor(start + span.s0 / speed));
        const int step1 = static_cast<int>(std::ceil(start + (span.s1 + v.length_m) / speed));
        for (int st = step0; st <= step1 && free; ++st) {
          auto it = reservations_.find(slot(span.cell, st));
          if (it != reservations_.end() && it->second != v.id) free = false;
        }
        if (!free) break;
      }
      if (!free) continue;
      Grant g;
      g.start_s = start;
      for (const auto& span : plan.spans) {
        const int step0 = static_cast<int>(std::floor(start + span.s0 / speed));
        const int step1 = static_cast<int>(std::ceil(start + (span.s1 + v.length_m) / speed));
        for (int st = step0; st <= step1; ++st) {
          reservations_[slot(span.cell, st)] = v.id;
          g.cells.push_back(slot(span.cell, st));
        }
      }
      ++grants_issued_;
      return g;
    }
    return std::nullopt;
  }

  void release(const Grant& g) {
    for (auto c : g.cells) reservations_.erase(c);
  }

  void maybe_prune(const WorldState& world) {
    if (++steps_since_prune_ < params_.prune_every_steps) return;
    steps_since_prune_ = 0;
    const int floor_step = static_cast<int>(world.time_s) - 2;
    for (auto it = reservations_.begin(); it != reservations_.end();)
      it = (it->first / 128 < floor_step) ? reservations_.erase(it) : std::next(it);
    std::unordered_set<VehicleId> alive;
    for (const Vehicle& v : world.vehicles) alive.insert(v.id);
    for (auto it = grants_.begin(); it != grants_.end();)
      it = alive.count(it->first) ? std::next(it) : grants_.erase(it);
  }

  AimParams params_;
  SimConfig sim_;
  std::unordered_map<int, PathPlan> paths_;
  std::unordered_map<std::int64_t, VehicleId> reservations_;
  std::unordered_map<VehicleId, Grant> grants_;
  int steps_since_prune_ = 0;
  std::int64_t grants_issued_ = 0;
};

// Green-wave speed advisory against a virtual pre-timed schedule. Vehicles in
// a green window cruise; the rest pace to arrive at their next green onset.
// Leaders projected to conflict within a small window are pushed a cycle back.
class GlosaController : public Controller {
 public:
  GlosaController(GlosaParams params, FixedCycleParams plan, SimConfig sim)
      : params_(params), plan_(plan), sim_(sim) {}
  std::string name() const override { return "glosa"; }

  ControlDecision decide(const WorldState& world) override {
    ControlDecision d;
    const double t = world.time_s;
    const double cycle = plan_.cycle_s();

    struct LeaderInfo {
      const Vehicle* v = nullptr;
      double target_s = 0.0;  // absolute time the vehicle is paced to reach the line
    };
    std::array<LeaderInfo, 4> leaders{};
    for (const Vehicle& v : world.vehicles) {
      if (v.position_m < 0.0 || v.position_m > sim_.advisory_horizon_m) continue;
      const double target = pace_target(t, v.approach);
      if (target > t)
        d.advisories[v.id] =
            std::min(sim_.v_max_mps, std::max(0.0, v.position_m / (target - t)));
      auto& slot = leaders[static_cast<int>(v.approach)];
      if (!slot.v || v.position_m < slot.v->position_m) slot = {&v, target};
    }

    // FIFO conflict patch between approach leaders.
    for (int i = 0; i < 4; ++i) {
      for (int j = i + 1; j < 4; ++j) {
        auto& a = leaders[i];
        auto& b = leaders[j];
        if (!a.v || !b.v) continue;
        if (!conflicts(a.v->approach, a.v->maneuver, b.v->approach, b.v->maneuver)) continue;
        const double arr_a = std::max(a.target_s, t + arrival_eta(*a.v, d));
        const double arr_b = std::max(b.target_s, t + arrival_eta(*b.v, d));
        if (std::abs(arr_a - arr_b) >= params_.fifo_window_s) continue;
        auto& later = (a.v->position_m > b.v->position_m) ? a : b;
        later.target_s = std::max(later.target_s, t) + cycle;
        d.advisories[later.v->id] = std::min(
            sim_.v_max_mps, std::max(0.0, later.v->position_m / (later.target_s - t)));
      }
    }
    return d;
  }

 private:
  // Absolute time of the next green onset for the approach; now if green.
  double pace_target(double t, Approach a) const {
    const double cycle = plan_.cycle_s();
    const PhaseState ph = phase_at(t, plan_.green_ns_s, plan_.green_ew_s, plan_.yellow_s);
    if (approach_open(ph.phase, a)) return t;
    const double u = std::fmod(t, cycle);
    const double onset = is_ns(a) ? 0.0 : plan_.green_ns_s + plan_.yellow_s;
    double wait = onset - u;
    if (wait <= 0.0) wait += cycle;
    return t + wait;
  }

  double arrival_eta(const Vehicle& v, const ControlDecision& d) const {
    double speed = std::min(v.v_max_type, sim_.v_max_mps);
    if (auto it = d.advisories.find(v.id); it != d.advisories.end())
      speed = std::max(it->second, 0.05);
    return v.position_m / speed;
  }

  GlosaParams params_;
  FixedCycleParams plan_;
  SimConfig sim_;
};

}  // namespace lidsa
