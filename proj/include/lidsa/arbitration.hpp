#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lidsa/core_model.hpp"
#include "lidsa/engine.hpp"
#include "lidsa/scenario.hpp"

namespace lidsa {

// FOLLOW is produced by the executor for non-leaders only; an arbitrator must
// never assign it.
enum class Role : std::uint8_t { Clear = 0, Yield = 1, Share = 2, Follow = 3 };

inline const char* to_string(Role r) {
  switch (r) {
    case Role::Clear: return "CLEAR";
    case Role::Yield: return "YIELD";
    case Role::Share: return "SHARE";
    case Role::Follow: return "FOLLOW";
  }
  return "?";
}

inline std::optional<Role> parse_role(const std::string& s) {
  for (Role r : {Role::Clear, Role::Yield, Role::Share, Role::Follow})
    if (s == to_string(r)) return r;
  return std::nullopt;
}

// Aggregated view of one approach, rebuilt from live vehicle state each step.
struct ApproachState {
  Approach approach = Approach::N;
  Maneuver leader_maneuver = Maneuver::Straight;
  double leader_distance_m = 0.0;
  double leader_speed = 0.0;
  double leader_wait_s = 0.0;
  int leader_occupancy = 1;
  int queue_len = 0;              // vehicles inside the advisory horizon
  double mean_speed = 0.0;
  double mean_stop_delay_s = 0.0; // mean accumulated halt time
  PriorityClass dominant_priority = PriorityClass::Normal;
  double mean_energy_pref = 0.0;
};

using ApproachStates = std::map<Approach, ApproachState>;

// Stopped delay inflated by how far the approach average drags below the
// speed limit; slow-rolling queues register pressure before anyone halts.
inline double effective_delay_s(const ApproachState& s, double v_max, double alpha_slow_s) {
  const double slow = std::max(0.0, (v_max - s.mean_speed) / v_max);
  return s.mean_stop_delay_s + alpha_slow_s * slow;
}

inline double pressure(const ApproachState& s, double v_max, double alpha_slow_s) {
  return static_cast<double>(s.queue_len) * effective_delay_s(s, v_max, alpha_slow_s);
}

inline bool share_condition(double p_a, double p_b, double theta_p, double delta_p) {
  return p_a > theta_p && p_b > theta_p && std::abs(p_a - p_b) < delta_p;
}

// The slice of approach state an arbitrator sees; identical for the in-process
// rule backend and the prompt serializer.
struct ArbitrationEntry {
  Approach approach = Approach::N;
  Maneuver maneuver = Maneuver::Straight;
  PriorityClass priority = PriorityClass::Normal;
  double leader_wait_s = 0.0;
  int leader_occupancy = 1;
  int queue_len = 0;
  double pressure = 0.0;
  double mean_energy_pref = 0.0;
};

inline ArbitrationEntry to_entry(const ApproachState& s, double v_max, double alpha_slow_s) {
  return {s.approach,      s.leader_maneuver, s.dominant_priority,
          s.leader_wait_s, s.leader_occupancy, s.queue_len,
          pressure(s, v_max, alpha_slow_s),   s.mean_energy_pref};
}

struct RoleAssignment {
  std::map<Approach, Role> roles;
  std::map<Approach, Approach> yield_targets;
  std::optional<std::pair<Approach, Approach>> share_pair;

  bool operator==(const RoleAssignment&) const = default;
  bool empty() const { return roles.empty(); }
  Role role_of(Approach a) const {
    auto it = roles.find(a);
    return it == roles.end() ? Role::Clear : it->second;
  }
};

namespace arb_detail {

inline double weighted_wait(const ArbitrationEntry& e) {
  return e.leader_wait_s * static_cast<double>(e.leader_occupancy);
}

// Strict precedence: priority class, occupancy-weighted leader wait,
// pressure, then fixed N > E > S > W order.
inline bool ranks_before(const ArbitrationEntry& a, const ArbitrationEntry& b) {
  if (a.priority != b.priority) return a.priority > b.priority;
  if (weighted_wait(a) != weighted_wait(b)) return weighted_wait(a) > weighted_wait(b);
  if (a.pressure != b.pressure) return a.pressure > b.pressure;
  return a.approach < b.approach;
}

}  // namespace arb_detail

// Emergency preemption: the emergency approach runs, every conflicting active
// approach yields to it, everything else keeps moving.
inline RoleAssignment preempt(Approach emergency, std::span<const ArbitrationEntry> entries) {
  RoleAssignment out;
  const ArbitrationEntry* em = nullptr;
  for (const auto& e : entries)
    if (e.approach == emergency) em = &e;
  if (!em) throw std::invalid_argument("preempt: emergency approach is not active");
  for (const auto& e : entries) {
    if (e.approach == emergency) {
      out.roles[e.approach] = Role::Clear;
    } else if (conflicts(emergency, em->maneuver, e.approach, e.maneuver)) {
      out.roles[e.approach] = Role::Yield;
      out.yield_targets[e.approach] = emergency;
    } else {
      out.roles[e.approach] = Role::Clear;
    }
  }
  return out;
}

// Deterministic arbitration over at most four approach entries.
// Stage 1: emergency preemption. Stage 2: one SHARE pair for balanced
// saturated conflicts. Stage 3: ranked CLEAR/YIELD resolution.
inline RoleAssignment rule_arbitrate(std::span<const ArbitrationEntry> entries,
                                     const LidsaParams& params) {
  RoleAssignment out;
  if (entries.empty()) return out;

  const ArbitrationEntry* emergency = nullptr;
  for (const auto& e : entries) {
    if (e.priority != PriorityClass::Emergency) continue;
    if (!emergency || arb_detail::ranks_before(e, *emergency)) emergency = &e;
  }
  if (emergency) {
    out = preempt(emergency->approach, entries);
    // Preemption spares every approach outside the emergency's conflict set,
    // but two spared approaches can still cross each other. Those pairs fall
    // back to the ranked rule so the result never runs two conflicting
    // approaches at once.
    std::vector<const ArbitrationEntry*> spared;
    for (const auto& e : entries)
      if (e.approach != emergency->approach && out.role_of(e.approach) == Role::Clear)
        spared.push_back(&e);
    std::sort(spared.begin(), spared.end(),
              [](const ArbitrationEntry* a, const ArbitrationEntry* b) {
                return arb_detail::ranks_before(*a, *b);
              });
    std::vector<const ArbitrationEntry*> kept;
    for (const ArbitrationEntry* e : spared) {
      const ArbitrationEntry* blocker = nullptr;
      for (const ArbitrationEntry* k : kept)
        if (conflicts(k->approach, k->maneuver, e->approach, e->maneuver)) {
          blocker = k;
          break;
        }
      if (blocker) {
        out.roles[e->approach] = Role::Yield;
        out.yield_targets[e->approach] = blocker->approach;
      } else {
        kept.push_back(e);
      }
    }
    return out;
  }

  std::vector<const ArbitrationEntry*> ranked;
  for (const auto& e : entries) ranked.push_back(&e);
  std::sort(ranked.begin(), ranked.end(), [](const ArbitrationEntry* a, const ArbitrationEntry* b) {
    return arb_detail::ranks_before(*a, *b);
  });

  std::optional<std::pair<Approach, Approach>> share;
  double share_total = -1.0;
  for (size_t i = 0; i < entries.size(); ++i)
    for (size_t j = i + 1; j < entries.size(); ++j) {
      const auto& a = entries[i];
      const auto& b = entries[j];
      if (a.approach == b.approach) continue;
      if (!conflicts(a.approach, a.maneuver, b.approach, b.maneuver)) continue;
      if (!share_condition(a.pressure, b.pressure, params.theta_p, params.delta_p)) continue;
      const double total = a.pressure + b.pressure;
      auto pair = std::minmax(a.approach, b.approach);
      if (total > share_total ||
          (total == share_total && share && std::pair(pair.first, pair.second) < *share)) {
        share = {pair.first, pair.second};
        share_total = total;
      }
    }
  if (share) {
    out.roles[share->first] = Role::Share;
    out.roles[share->second] = Role::Share;
    out.share_pair = share;
  }

  // Winners so far (share members count); everyone else in rank order.
  std::vector<const ArbitrationEntry*> winners;
  auto entry_of = [&](Approach a) -> const ArbitrationEntry* {
    for (const auto& e : entries)
      if (e.approach == a) return &e;
    return nullptr;
  };
  if (share) {
    winners.push_back(entry_of(share->first));
    winners.push_back(entry_of(share->second));
  }

  for (const ArbitrationEntry* e : ranked) {
    if (out.roles.count(e->approach)) continue;
    const ArbitrationEntry* blocker = nullptr;
    for (const ArbitrationEntry* w : winners)
      if (conflicts(e->approach, e->maneuver, w->approach, w->maneuver)) {
        blocker = w;
        break;  // winners are in precedence order: share pair first, then rank
      }
    if (!blocker) {
      out.roles[e->approach] = Role::Clear;
      winners.push_back(e);
    } else {
      out.roles[e->approach] = Role::Yield;
      out.yield_targets[e->approach] = blocker->approach;
    }
  }
  return out;
}

inline RoleAssignment rule_arbitrate(const ApproachStates& states, const LidsaParams& params,
                                     double v_max) {
  std::vector<ArbitrationEntry> entries;
  for (const auto& [a, s] : states) entries.push_back(to_entry(s, v_max, params.alpha_slow_s));
  return rule_arbitrate(entries, params);
}

// Structural validity of an assignment against the entries it answers to.
// Returns a complaint, or nullopt when the assignment is acceptable.
inline std::optional<std::string> assignment_error(const RoleAssignment& asg,
                                                   std::span<const ArbitrationEntry> entries) {
  auto entry_of = [&](Approach a) -> const ArbitrationEntry* {
    for (const auto& e : entries)
      if (e.approach == a) return &e;
    return nullptr;
  };
  if (asg.roles.size() != entries.size())
    return "roles must cover exactly the queried approaches";
  for (const auto& [a, r] : asg.roles) {
    if (!entry_of(a)) return std::string("role for unqueried approach ") + to_string(a);
    if (r == Role::Follow) return "FOLLOW is not an assignable role";
    if (r == Role::Yield) {
      auto it = asg.yield_targets.find(a);
      if (it == asg.yield_targets.end())
        return std::string("YIELD without target on approach ") + to_string(a);
      const Role tr = asg.role_of(it->second);
      if (!entry_of(it->second) || (tr != Role::Clear && tr != Role::Share))
        return std::string("YIELD target of ") + to_string(a) + " must be CLEAR or SHARE";
    }
  }
  int share_count = 0;
  for (const auto& [a, r] : asg.roles)
    if (r == Role::Share) ++share_count;
  if (share_count > 0) {
    if (!asg.share_pair || share_count != 2)
      return "SHARE roles must form exactly one declared pair";
    const auto [a, b] = *asg.share_pair;
    if (asg.role_of(a) != Role::Share || asg.role_of(b) != Role::Share)
      return "share_pair members must both hold SHARE";
    const auto* ea = entry_of(a);
    const auto* eb = entry_of(b);
    if (!ea || !eb || !conflicts(a, ea->maneuver, b, eb->maneuver))
      return "share_pair must name two conflicting queried approaches";
  } else if (asg.share_pair) {
    return "share_pair declared without SHARE roles";
  }
  for (const auto& [a, ra] : asg.roles)
    for (const auto& [b, rb] : asg.roles) {
      if (a >= b || ra != Role::Clear || rb != Role::Clear) continue;
      const auto* ea = entry_of(a);
      const auto* eb = entry_of(b);
      if (ea && eb && conflicts(a, ea->maneuver, b, eb->maneuver))
        return std::string("conflicting approaches ") + to_string(a) + " and " + to_string(b) +
               " are both CLEAR";
    }
  return std::nullopt;
}

// Live per-approach aggregation from world state.
inline ApproachStates build_approach_states(const WorldState& world, const SimConfig& sim) {
  ApproachStates states;
  for (Approach a : all_approaches) {
    const Vehicle* leader = leader_of(world.vehicles, a, sim.advisory_horizon_m);
    if (!leader) continue;
    ApproachState s;
    s.approach = a;
    s.leader_maneuver = leader->maneuver;
    s.leader_distance_m = leader->position_m;
    s.leader_speed = leader->speed_mps;
    s.leader_wait_s = leader->cumulative_wait_s;
    s.leader_occupancy = leader->occupancy;
    double speed_sum = 0.0, wait_sum = 0.0, energy_sum = 0.0;
    int n = 0;
    for (const auto& v : world.vehicles) {
      if (v.approach != a || v.position_m < 0.0 || v.position_m > sim.advisory_horizon_m)
        continue;
      ++n;
      speed_sum += v.speed_mps;
      wait_sum += v.cumulative_wait_s;
      energy_sum += v.energy_pref;
      if (v.priority > s.dominant_priority) s.dominant_priority = v.priority;
    }
    s.queue_len = n;
    s.mean_speed = speed_sum / n;
    s.mean_stop_delay_s = wait_sum / n;
    s.mean_energy_pref = energy_sum / n;
    states.emplace(a, s);
  }
  return states;
}

// ---------------------------------------------------------------------------
// Role-to-speed executor.

inline double share_speed(double p_self, double p_other, double eta, double v_max, double v_min) {
  const double total = p_self + p_other;
  if (total <= 0.0) return v_max * eta;
  const double raw = eta * v_max * (p_self / total);
  return std::clamp(raw, v_min, v_max);
}

// Time the winning approach needs to reach and traverse the zone.
inline double clearance_time_s(double winner_distance_m, double v_ref, Maneuver winner_maneuver,
                               double zone_side_m, double tau_safe_s) {
  const double tau_trav = crossing_path_length_m(winner_maneuver, zone_side_m) / v_ref;
  return winner_distance_m / v_ref + tau_trav + tau_safe_s;
}

inline double yield_speed(double own_distance_m, double clearance_s, double v_min, double v_max) {
  const double raw = own_distance_m / clearance_s;
  if (raw < v_min) return 0.0;
  return std::min(raw, v_max);
}

inline double follow_speed(double own_distance_m, double leader_distance_m, double leader_speed,
                           double follow_gap_s, double v_max) {
  if (leader_speed < 1e-9) return 0.0;
  const double raw = own_distance_m / (leader_distance_m / leader_speed + follow_gap_s);
  return std::clamp(raw, 0.0, v_max);
}

// Speed advisories for every vehicle inside the advisory horizon. Leaders in
// the near zone execute their approach role; everyone behind them follows the
// lane leader; vehicles between near zone and horizon cruise at the limit.
inline ControlDecision execute_roles(const WorldState& world, const ApproachStates& states,
                                     const RoleAssignment& assignment, const SimConfig& sim,
                                     const LidsaParams& params) {
  ControlDecision out;
  const double v_max = sim.v_max_mps;

  std::map<Approach, double> live_pressure;
  for (const auto& [a, s] : states)
    live_pressure[a] = pressure(s, v_max, params.alpha_slow_s);

  auto role_speed = [&](const ApproachState& s) -> double {
    const Role role = assignment.role_of(s.approach);
    switch (role) {
      case Role::Clear:
      case Role::Follow:
        return v_max;
      case Role::Share: {
        const auto& pair = assignment.share_pair;
        Approach other = s.approach;
        if (pair) other = pair->first == s.approach ? pair->second : pair->first;
        const double p_other = live_pressure.count(other) ? live_pressure[other] : 0.0;
        return share_speed(live_pressure[s.approach], p_other, params.eta_share, v_max,
                           sim.v_min_mps);
      }
      case Role::Yield: {
        auto t = assignment.yield_targets.find(s.approach);
        if (t == assignment.yield_targets.end()) return v_max;
        auto ws = states.find(t->second);
        if (ws == states.end()) return v_max;  // winner already cleared the zone
        const ApproachState& w = ws->second;
        double v_ref = v_max;
        if (assignment.role_of(w.approach) == Role::Share) {
          Approach other = assignment.share_pair
                               ? (assignment.share_pair->first == w.approach
                                      ? assignment.share_pair->second
                                      : assignment.share_pair->first)
                               : w.approach;
          const double p_other = live_pressure.count(other) ? live_pressure[other] : 0.0;
          v_ref = share_speed(live_pressure[w.approach], p_other, params.eta_share, v_max,
                              sim.v_min_mps);
        }
        const double t_clear = clearance_time_s(w.leader_distance_m, v_ref, w.leader_maneuver,
                                                sim.conflict_zone_side_m, params.tau_safe_s);
        return yield_speed(s.leader_distance_m, t_clear, sim.v_min_mps, v_max);
      }
    }
    return v_max;
  };

  for (const auto& v : world.vehicles) {
    if (v.position_m < 0.0 || v.position_m > sim.advisory_horizon_m) continue;
    if (v.position_m > sim.near_zone_m) {
      out.advisories[v.id] = v_max;
      continue;
    }
    auto it = states.find(v.approach);
    if (it == states.end()) {
      out.advisories[v.id] = v_max;
      continue;
    }
    const ApproachState& s = it->second;
    const Vehicle* leader = leader_of(world.vehicles, v.approach, sim.advisory_horizon_m);
    if (leader && leader->id == v.id) {
      out.advisories[v.id] = role_speed(s);
    } else if (leader) {
      out.advisories[v.id] =
          follow_speed(v.position_m, leader->position_m, leader->speed_mps,
                       params.follow_gap_s, v_max);
    } else {
      out.advisories[v.id] = v_max;
    }
  }
  return out;
}

}  // namespace lidsa
