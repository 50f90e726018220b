#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lidsa/arbitration.hpp"
#include "lidsa/llm_backend.hpp"

namespace lidsa {

inline double latency_score(double mean_ms, double lambda0_ms = 5000.0) {
  return std::max(0.0, 1.0 - mean_ms / lambda0_ms);
}

// Weights: latency 40%, logic 30%, role safety 20%, parse rate 10%.
inline double composite_score(double s_logic, double s_json, double lat_score, double s_safety) {
  return 0.40 * lat_score + 0.30 * s_logic + 0.20 * s_safety + 0.10 * s_json;
}

struct BenchFixture {
  int id = 0;
  char group = 'A';
  std::string name;
  ArbitrationRequest request;
  RoleAssignment expected;
  int repeats = 3;
};

namespace bench_detail {

inline ArbitrationEntry mk(Approach a, Maneuver m, PriorityClass pc, double wait, int occ,
                           int queue, double pressure) {
  ArbitrationEntry e;
  e.approach = a;
  e.maneuver = m;
  e.priority = pc;
  e.leader_wait_s = wait;
  e.leader_occupancy = occ;
  e.queue_len = queue;
  e.pressure = pressure;
  e.mean_energy_pref = 0.5;
  return e;
}

struct AsgBuilder {
  RoleAssignment asg;
  AsgBuilder& clear(Approach a) {
    asg.roles[a] = Role::Clear;
    return *this;
  }
  AsgBuilder& yield(Approach a, Approach to) {
    asg.roles[a] = Role::Yield;
    asg.yield_targets[a] = to;
    return *this;
  }
  AsgBuilder& share(Approach a, Approach b) {
    asg.roles[a] = Role::Share;
    asg.roles[b] = Role::Share;
    asg.share_pair = {a, b};
    return *this;
  }
};

}  // namespace bench_detail

// The 20-scenario suite. Expected assignments are frozen literals, derived by
// hand from the arbitration precedence rules and mirrored by the unit tests.
inline std::vector<BenchFixture> bench_fixtures() {
  using bench_detail::mk;
  using bench_detail::AsgBuilder;
  using enum Approach;
  using enum Maneuver;
  using enum PriorityClass;
  std::vector<BenchFixture> fx;
  auto add = [&fx](int id, char group, std::string name, std::vector<ArbitrationEntry> entries,
                   AsgBuilder expected, int repeats = 3) {
    BenchFixture f;
    f.id = id;
    f.group = group;
    f.name = std::move(name);
    f.request.entries = std::move(entries);
    f.expected = std::move(expected.asg);
    f.repeats = repeats;
    fx.push_back(std::move(f));
  };

  // Group A: pairwise right-of-way.
  add(1, 'A', "parallel-straights",
      {mk(N, Straight, Normal, 10, 1, 3, 40), mk(S, Straight, Normal, 8, 1, 2, 35)},
      AsgBuilder{}.clear(N).clear(S));
  add(2, 'A', "cross-wait-n",
      {mk(N, Straight, Normal, 10, 1, 3, 40), mk(E, Straight, Normal, 5, 1, 2, 45)},
      AsgBuilder{}.clear(N).yield(E, N));
  add(3, 'A', "cross-wait-e",
      {mk(N, Straight, Normal, 10, 1, 3, 40), mk(E, Straight, Normal, 30, 1, 4, 45)},
      AsgBuilder{}.yield(N, E).clear(E));
  add(4, 'A', "left-vs-opposing",
      {mk(N, Left, Normal, 20, 1, 2, 50), mk(S, Straight, Normal, 5, 1, 2, 30)},
      AsgBuilder{}.clear(N).yield(S, N));
  add(5, 'A', "pressure-tiebreak",
      {mk(N, Straight, Normal, 8, 1, 2, 40), mk(E, Straight, Normal, 8, 1, 3, 60)},
      AsgBuilder{}.yield(N, E).clear(E));
  add(6, 'A', "approach-precedence",
      {mk(N, Straight, Normal, 5, 1, 2, 30), mk(E, Straight, Normal, 5, 1, 2, 30)},
      AsgBuilder{}.clear(N).yield(E, N));

  // Group B: emergency preemption.
  add(7, 'B', "ambulance-vs-long-wait",
      {mk(N, Straight, Emergency, 2, 2, 1, 20), mk(E, Straight, Normal, 50, 1, 6, 90)},
      AsgBuilder{}.clear(N).yield(E, N));
  add(8, 'B', "ambulance-on-east",
      {mk(N, Straight, Normal, 40, 1, 7, 95), mk(E, Straight, Emergency, 1, 2, 1, 15)},
      AsgBuilder{}.yield(N, E).clear(E));
  add(9, 'B', "preempt-spares-parallel",
      {mk(N, Straight, Emergency, 3, 2, 1, 25), mk(E, Straight, Normal, 20, 1, 4, 60),
       mk(S, Straight, Normal, 15, 1, 3, 50)},
      AsgBuilder{}.clear(N).yield(E, N).clear(S));
  add(10, 'B', "dueling-ambulances",
      {mk(N, Straight, Emergency, 5, 2, 1, 30), mk(E, Straight, Emergency, 3, 2, 1, 30)},
      AsgBuilder{}.clear(N).yield(E, N));

  // Group C: balanced-saturation sharing.
  add(11, 'C', "balanced-share",
      {mk(N, Straight, Normal, 12, 1, 6, 120), mk(E, Straight, Normal, 11, 1, 6, 130)},
      AsgBuilder{}.share(N, E));
  add(12, 'C', "imbalanced-no-share",
      {mk(N, Straight, Normal, 10, 1, 6, 120), mk(E, Straight, Normal, 10, 1, 8, 180)},
      AsgBuilder{}.yield(N, E).clear(E));
  add(13, 'C', "best-share-pair",
      {mk(N, Straight, Normal, 9, 1, 5, 120), mk(E, Straight, Normal, 10, 1, 6, 130),
       mk(S, Straight, Normal, 11, 1, 6, 125)},
      AsgBuilder{}.share(E, S).yield(N, E));
  add(14, 'C', "share-at-threshold",
      {mk(N, Straight, Normal, 14, 1, 5, 102), mk(E, Straight, Normal, 13, 1, 5, 104)},
      AsgBuilder{}.share(N, E));

  // Group D: four-way ranked resolution.
  add(15, 'D', "four-way-wait-ladder",
      {mk(N, Straight, Normal, 20, 1, 4, 50), mk(E, Straight, Normal, 15, 1, 4, 50),
       mk(S, Straight, Normal, 10, 1, 4, 50), mk(W, Straight, Normal, 5, 1, 4, 50)},
      AsgBuilder{}.clear(N).yield(E, N).clear(S).yield(W, N));
  add(16, 'D', "transit-priority",
      {mk(N, Straight, Normal, 30, 1, 5, 70), mk(E, Straight, Transit, 10, 35, 3, 60),
       mk(S, Straight, Normal, 2, 1, 1, 10)},
      AsgBuilder{}.yield(N, E).clear(E).yield(S, E));
  add(17, 'D', "occupancy-weighting",
      {mk(N, Straight, Normal, 5, 35, 2, 40), mk(E, Straight, Normal, 100, 1, 8, 95)},
      AsgBuilder{}.clear(N).yield(E, N));
  add(18, 'D', "mixed-maneuvers",
      {mk(N, Left, Normal, 12, 1, 3, 45), mk(E, Right, Normal, 9, 1, 2, 30),
       mk(S, Straight, Normal, 6, 1, 3, 40), mk(W, Straight, Normal, 3, 1, 2, 35)},
      AsgBuilder{}.clear(N).clear(E).yield(S, N).yield(W, N));

  // Group E: consistency and determinism probes.
  add(19, 'E', "consistency-probe",
      {mk(N, Straight, Normal, 7, 1, 4, 80), mk(E, Left, Normal, 6, 1, 3, 75),
       mk(S, Right, Normal, 2, 1, 1, 20)},
      AsgBuilder{}.clear(N).yield(E, N).clear(S));
  add(20, 'E', "determinism-probe",
      {mk(N, Straight, Emergency, 1, 2, 2, 60), mk(E, Straight, Transit, 25, 35, 5, 90),
       mk(S, Left, Normal, 18, 1, 4, 85), mk(W, Right, Normal, 3, 1, 1, 15)},
      AsgBuilder{}.clear(N).yield(E, N).yield(S, N).clear(W), 10);

  return fx;
}

struct BenchCall {
  int scenario_id = 0;
  bool parse_ok = false;
  bool safety_ok = false;
  bool logic_ok = false;
  double latency_ms = 0.0;
};

struct BenchResult {
  double logic_accuracy = 0.0;
  double json_parse_rate = 0.0;
  double role_safety = 0.0;
  double mean_latency_ms = 0.0;
  double p95_latency_ms = 0.0;
  int calls_over_5000ms = 0;
  double lat_score = 0.0;
  double composite = 0.0;
  bool disqualified = false;
  int total_calls = 0;
  int determinism_repeats = 0;
  int determinism_identical = 0;
  std::vector<BenchCall> calls;
};

inline BenchResult run_suite(ArbitrationBackend& backend) {
  BenchResult r;
  int parse = 0, safe = 0, logic = 0;
  double lat_sum = 0.0;
  std::vector<double> latencies;
  std::vector<std::string> determinism_replies;

  for (const BenchFixture& fx : bench_fixtures()) {
    for (int rep = 0; rep < fx.repeats; ++rep) {
      const BackendReply reply = backend.invoke(fx.request);
      BenchCall call;
      call.scenario_id = fx.id;
      call.latency_ms = reply.latency_ms;
      std::string canonical = reply.body;
      if (!reply.transport_error) {
        const ReplyValidation v = parse_and_validate(reply.body, fx.request.entries);
        call.parse_ok = v.parse_ok;
        call.safety_ok = !v.parse_ok || v.safety_ok;  // vacuous when nothing parsed
        call.logic_ok = v.reply.has_value() && v.reply->assignment == fx.expected;
        if (v.reply) canonical = assignment_to_json(v.reply->assignment).dump();
      } else {
        call.safety_ok = true;
      }
      if (fx.repeats == 10) determinism_replies.push_back(canonical);
      parse += call.parse_ok;
      safe += call.safety_ok;
      logic += call.logic_ok;
      lat_sum += call.latency_ms;
      latencies.push_back(call.latency_ms);
      if (call.latency_ms > 5000.0) ++r.calls_over_5000ms;
      r.calls.push_back(call);
    }
  }

  r.total_calls = static_cast<int>(r.calls.size());
  const double n = static_cast<double>(r.total_calls);
  r.logic_accuracy = logic / n;
  r.json_parse_rate = parse / n;
  r.role_safety = safe / n;
  r.mean_latency_ms = lat_sum / n;
  std::sort(latencies.begin(), latencies.end());
  const auto idx =
      static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(latencies.size()))) - 1;
  r.p95_latency_ms = latencies[std::min(idx, latencies.size() - 1)];
  r.lat_score = latency_score(r.mean_latency_ms);
  r.composite = composite_score(r.logic_accuracy, r.json_parse_rate, r.lat_score, r.role_safety);
  r.disqualified = r.logic_accuracy < 0.50;
  r.determinism_repeats = static_cast<int>(determinism_replies.size());
  for (const auto& body : determinism_replies)
    r.determinism_identical += body == determinism_replies.front();
  return r;
}

inline nlohmann::json bench_report_json(const BenchResult& r, const std::string& backend_name) {
  nlohmann::json per_scenario = nlohmann::json::array();
  for (const auto& c : r.calls)
    per_scenario.push_back({{"scenario", c.scenario_id},
                            {"parse_ok", c.parse_ok},
                            {"safety_ok", c.safety_ok},
                            {"logic_ok", c.logic_ok},
                            {"latency_ms", c.latency_ms}});
  return {{"backend", backend_name},
          {"logic_accuracy", r.logic_accuracy},
          {"json_parse_rate", r.json_parse_rate},
          {"role_safety", r.role_safety},
          {"mean_latency_ms", r.mean_latency_ms},
          {"p95_latency_ms", r.p95_latency_ms},
          {"calls_over_5000ms", r.calls_over_5000ms},
          {"latency_score", r.lat_score},
          {"composite", r.composite},
          {"disqualified", r.disqualified},
          {"total_calls", r.total_calls},
          {"determinism_repeats", r.determinism_repeats},
          {"determinism_identical", r.determinism_identical},
          {"calls", per_scenario}};
}

inline std::string bench_report_csv(const BenchResult& r, const std::string& backend_name) {
  std::ostringstream os;
  os << "backend,logic_accuracy,json_parse_rate,role_safety,mean_latency_ms,p95_latency_ms,"
        "calls_over_5000ms,latency_score,composite,disqualified,total_calls\n";
  os << backend_name << ',' << r.logic_accuracy << ',' << r.json_parse_rate << ','
     << r.role_safety << ',' << r.mean_latency_ms << ',' << r.p95_latency_ms << ','
     << r.calls_over_5000ms << ',' << r.lat_score << ',' << r.composite << ','
     << (r.disqualified ? 1 : 0) << ',' << r.total_calls << '\n';
  return os.str();
}

}  // namespace lidsa
