#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "lidsa/arbitration.hpp"
#include "lidsa/controller.hpp"
#include "lidsa/llm_backend.hpp"
#include "lidsa/mat.hpp"
#include "lidsa/watchdog.hpp"

namespace lidsa {

// Full intent-driven pipeline: band the traffic state, reuse memoized
// assignments when the signature recurs, otherwise query the arbitration
// backend without blocking, and run every decision through the watchdog.
class LidsaController : public Controller {
 public:
  LidsaController(LidsaParams params, SimConfig sim, std::shared_ptr<ArbitrationBackend> backend)
      : params_(std::move(params)),
        sim_(sim),
        backend_(std::move(backend)),
        arbitrator_(backend_, params_.backend_timeout_s) {}

  static std::unique_ptr<LidsaController> from_config(const LidsaParams& params,
                                                      const SimConfig& sim) {
    std::shared_ptr<ArbitrationBackend> backend;
    if (params.backend == "http")
      backend = std::make_shared<HttpBackend>(params.http, params);
    else
      backend = std::make_shared<RuleBackend>(params);
    return std::make_unique<LidsaController>(params, sim, std::move(backend));
  }

  std::string name() const override { return "lidsa"; }

  ControlDecision decide(const WorldState& world) override {
    const double t = world.time_s;
    ApproachStates states = build_approach_states(world, sim_);

    poll_pending(t, states);

    if (states.empty()) {
      have_active_ = false;
      active_key_.clear();
      active_ = {};
      row_holder_.reset();
    } else {
      const ConflictSignature sig = signature(states, row_holder_, params_.mat, params_.theta_p,
                                              sim_.v_max_mps, params_.alpha_slow_s);
      const std::string key = sig.key();
      const bool cadence_fire = t > 0.0 && std::fmod(t, params_.query_cadence_s) < 1e-9;
      if (key != active_key_ || !have_active_) {
        // The banded state moved to a new signature: reuse the cached
        // assignment when one exists, otherwise ask the arbitrator.
        if (const RoleAssignment* hit = mat_.lookup(sig)) {
          activate(*hit, key);
        } else if (arbitrator_.has_outstanding()) {
          ++mat_.stats().coalesced;
        } else {
          submit_request(states, sig, t);
        }
      } else if (cadence_fire && !arbitrator_.has_outstanding()) {
        // Periodic refresh: re-arbitrate the current signature even on a hit
        // so a stale cached ruling cannot pin the intersection forever.
        submit_request(states, sig, t);
      }
    }

    ControlDecision decision = execute_roles(world, states, active_, sim_, params_);
    last_report_ = watchdog_.pass(world, sim_, params_, decision);
    overrides_ += last_report_.overrides;
    return decision;
  }

  nlohmann::json stats() const override {
    const MatStats& m = mat_.stats();
    return {{"mat",
             {{"lookups", m.lookups},
              {"hits", m.hits},
              {"misses", m.misses},
              {"hit_rate", m.hit_rate()},
              {"unique_states", m.size},
              {"llm_calls", m.llm_calls},
              {"coalesced", m.coalesced},
              {"fallbacks", m.fallbacks},
              {"latency_mean_ms", m.mean_latency_ms()},
              {"latency_p95_ms", m.p95_latency_ms()}}},
            {"watchdog_overrides", overrides_},
            {"backend", backend_->name()}};
  }

  const MatTable& mat() const { return mat_; }
  const RoleAssignment& active_assignment() const { return active_; }
  std::optional<Approach> row_holder() const { return row_holder_; }
  long long watchdog_overrides() const { return overrides_; }
  const WatchdogReport& last_watchdog_report() const { return last_report_; }

 private:
  void submit_request(const ApproachStates& states, const ConflictSignature& sig, double t) {
    ArbitrationRequest req;
    for (const auto& [a, s] : states)
      req.entries.push_back(to_entry(s, sim_.v_max_mps, params_.alpha_slow_s));
    req.row_holder = row_holder_;
    pending_ticket_ = arbitrator_.submit(std::move(req), t);
    pending_sig_ = sig;
    ++mat_.stats().llm_calls;
    poll_pending(t, states);  // zero-latency backends resolve in the same step
  }

  void poll_pending(double t, const ApproachStates& states) {
    if (!pending_ticket_) return;
    const auto pr = arbitrator_.poll(*pending_ticket_, t);
    if (pr.status == AsyncArbitrator::Status::Pending) return;
    pending_ticket_.reset();
    if (pr.status == AsyncArbitrator::Status::Ready) {
      mat_.stats().latencies_ms.push_back(pr.latency_ms);
      mat_.store(pending_sig_, pr.assignment);
      activate(pr.assignment, pending_sig_.key());
    } else {
      ++mat_.stats().fallbacks;
      activate(fallback_assignment(states), current_key(states));
    }
  }

  // Fallback: near-zone approaches all CLEAR; the watchdog carries safety.
  RoleAssignment fallback_assignment(const ApproachStates& states) const {
    RoleAssignment asg;
    for (const auto& [a, s] : states)
      if (s.leader_distance_m <= sim_.near_zone_m) asg.roles[a] = Role::Clear;
    return asg;
  }

  std::string current_key(const ApproachStates& states) const {
    return signature(states, row_holder_, params_.mat, params_.theta_p, sim_.v_max_mps,
                     params_.alpha_slow_s)
        .key();
  }

  void activate(const RoleAssignment& asg, const std::string& key) {
    active_ = asg;
    active_key_ = key;
    have_active_ = true;
    row_holder_.reset();
    for (Approach a : all_approaches) {
      auto it = asg.roles.find(a);
      if (it != asg.roles.end() && (it->second == Role::Clear || it->second == Role::Share)) {
        row_holder_ = a;
        break;
      }
    }
  }

  LidsaParams params_;
  SimConfig sim_;
  std::shared_ptr<ArbitrationBackend> backend_;
  AsyncArbitrator arbitrator_;
  MatTable mat_;

  RoleAssignment active_;
  std::string active_key_;
  bool have_active_ = false;
  std::optional<Approach> row_holder_;
  std::optional<int> pending_ticket_;
  ConflictSignature pending_sig_;
  Watchdog watchdog_;
  WatchdogReport last_report_;
  long long overrides_ = 0;
};

}  // namespace lidsa
