#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "lidsa/arbitration.hpp"
#include "lidsa/scenario.hpp"

namespace lidsa {

// Discretization helpers. Bands must stay coarse: the table only pays off
// when recurring traffic states collapse onto few keys.

inline int urgency_band(double wait_s, double class_budget_s, int cap) {
  if (class_budget_s <= 0.0) return cap;
  return std::min(static_cast<int>(std::floor(wait_s / class_budget_s)), cap);
}

inline int wait_band(double wait_s, double band_width_s, int cap) {
  if (band_width_s <= 0.0) return cap;
  return std::min(static_cast<int>(std::floor(wait_s / band_width_s)), cap);
}

inline int pressure_band(double p, double theta_p) {
  if (p < theta_p * 0.5) return 0;
  if (p < theta_p) return 1;
  return 2;
}

inline int energy_band(double alpha) {
  if (alpha < 1.0 / 3.0) return 0;
  if (alpha < 2.0 / 3.0) return 1;
  return 2;
}

inline int queue_band(int n) {
  if (n <= 1) return 0;
  if (n <= 4) return 1;
  if (n <= 9) return 2;
  return 3;
}

struct ApproachToken {
  Approach approach = Approach::N;
  PriorityClass dominant = PriorityClass::Normal;
  int urgency = 0;
  int pressure_b = 0;
  int energy_b = 0;
  int queue_b = 0;
  int wait_b = 0;
  auto operator<=>(const ApproachToken&) const = default;
};

// Banded traffic state: one token per active approach in fixed N,E,S,W order,
// a network load band, and the current right-of-way holder. Deliberately
// maneuver-free; the safety watchdog covers reuse across changed paths.
struct ConflictSignature {
  std::vector<ApproachToken> tokens;
  int net_band = 0;
  std::optional<Approach> row_holder;
  auto operator<=>(const ConflictSignature&) const = default;

  std::string key() const {
    std::ostringstream os;
    for (const auto& t : tokens)
      os << to_string(t.approach) << ':' << to_string(t.dominant) << ".r" << t.urgency << ".p"
         << t.pressure_b << ".e" << t.energy_b << ".q" << t.queue_b << ".w" << t.wait_b << '|';
    os << "net" << net_band << "|row";
    os << (row_holder ? to_string(*row_holder) : "-");
    return os.str();
  }
};

inline ConflictSignature signature(const ApproachStates& states,
                                   std::optional<Approach> row_holder,
                                   const MatBandParams& bands, double theta_p, double v_max,
                                   double alpha_slow_s) {
  ConflictSignature sig;
  int total = 0;
  for (Approach a : all_approaches) {
    auto it = states.find(a);
    if (it == states.end()) continue;
    const ApproachState& s = it->second;
    ApproachToken t;
    t.approach = a;
    t.dominant = s.dominant_priority;
    t.urgency = urgency_band(s.leader_wait_s, bands.class_budget_s(s.dominant_priority),
                             bands.urgency_cap);
    t.pressure_b = pressure_band(pressure(s, v_max, alpha_slow_s), theta_p);
    t.energy_b = energy_band(s.mean_energy_pref);
    t.queue_b = queue_band(s.queue_len);
    t.wait_b = wait_band(s.leader_wait_s, bands.wait_band_s, bands.wait_band_cap);
    sig.tokens.push_back(t);
    total += s.queue_len;
  }
  sig.net_band = queue_band(total);
  sig.row_holder = row_holder;
  return sig;
}

struct MatStats {
  std::uint64_t lookups = 0;
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t llm_calls = 0;
  std::uint64_t coalesced = 0;
  std::uint64_t fallbacks = 0;
  std::uint64_t size = 0;
  std::vector<double> latencies_ms;

  double hit_rate() const {
    return lookups == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(lookups);
  }
  double mean_latency_ms() const {
    if (latencies_ms.empty()) return 0.0;
    double sum = 0.0;
    for (double v : latencies_ms) sum += v;
    return sum / static_cast<double>(latencies_ms.size());
  }
  double p95_latency_ms() const {
    if (latencies_ms.empty()) return 0.0;
    std::vector<double> sorted = latencies_ms;
    std::sort(sorted.begin(), sorted.end());
    const auto idx = static_cast<size_t>(
        std::ceil(0.95 * static_cast<double>(sorted.size()))) - 1;
    return sorted[std::min(idx, sorted.size() - 1)];
  }
};

// Memoized signature -> assignment store. Entries live for the whole run;
// there is no eviction, so replaying a state sequence can only gain hits.
class MatTable {
 public:
  const RoleAssignment* lookup(const ConflictSignature& sig) {
    ++stats_.lookups;
    auto it = table_.find(sig.key());
    if (it == table_.end()) {
      ++stats_.misses;
      return nullptr;
    }
    ++stats_.hits;
    return &it->second;
  }

  void store(const ConflictSignature& sig, RoleAssignment assignment) {
    table_[sig.key()] = std::move(assignment);
    stats_.size = table_.size();
  }

  bool contains(const ConflictSignature& sig) const { return table_.count(sig.key()) > 0; }
  std::size_t size() const { return table_.size(); }

  MatStats& stats() { return stats_; }
  const MatStats& stats() const { return stats_; }

 private:
  std::unordered_map<std::string, RoleAssignment> table_;
  MatStats stats_;
};

}  // namespace lidsa
