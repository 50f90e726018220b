#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "lidsa/arbitration.hpp"
#include "lidsa/scenario.hpp"

namespace lidsa {

inline constexpr const char* kPromptVersion = "arbitration-v1";

struct ArbitrationRequest {
  std::vector<ArbitrationEntry> entries;  // fixed N,E,S,W order, active approaches only
  std::optional<Approach> row_holder;
};

namespace llm_detail {

// Fixed-point formatting keeps prompts byte-stable across platforms.
inline std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace llm_detail

inline std::string build_prompt(const ArbitrationRequest& req, const LidsaParams& params) {
  using llm_detail::fmt2;
  std::ostringstream os;
  os << "[" << kPromptVersion << "]\n";
  os << "You arbitrate right of way at a signal-free four-way intersection.\n";
  os << "Assign every listed approach exactly one role: CLEAR, YIELD, or SHARE.\n";
  os << "Apply these rules in order:\n";
  os << "1. If an approach has an EMERGENCY leader, it is CLEAR; every approach whose"
        " path conflicts with it is YIELD toward it; the rest are CLEAR.\n";
  os << "2. If exactly one conflicting pair has both pressures above " << fmt2(params.theta_p)
     << " and a pressure difference below " << fmt2(params.delta_p)
     << ", that pair is SHARE (pick the pair with the highest combined pressure).\n";
  os << "3. Otherwise rank approaches by priority class, then by leader wait weighted by"
        " occupancy, then by pressure, then by N over E over S over W. Walk the ranking;"
        " an approach conflicting with an already-granted one is YIELD toward it.\n";
  os << "Never let two conflicting approaches both be CLEAR. Every YIELD needs a target"
        " approach whose role is CLEAR or SHARE.\n";
  os << "Current right-of-way holder: "
     << (req.row_holder ? to_string(*req.row_holder) : "none") << "\n";
  os << "Approaches:\n";
  for (const auto& e : req.entries) {
    os << "- " << to_string(e.approach) << ": leader " << to_string(e.maneuver) << ", priority "
       << to_string(e.priority) << ", leader wait " << fmt2(e.leader_wait_s) << " s, occupancy "
       << e.leader_occupancy << ", queue " << e.queue_len << ", pressure " << fmt2(e.pressure)
       << ", energy preference " << fmt2(e.mean_energy_pref) << "\n";
  }
  os << "Conflicting pairs:";
  bool any = false;
  for (std::size_t i = 0; i < req.entries.size(); ++i) {
    for (std::size_t j = i + 1; j < req.entries.size(); ++j) {
      const auto& a = req.entries[i];
      const auto& b = req.entries[j];
      if (conflicts(a.approach, a.maneuver, b.approach, b.maneuver)) {
        os << (any ? ", " : " ") << to_string(a.approach) << "-" << to_string(b.approach);
        any = true;
      }
    }
  }
  os << (any ? "\n" : " none\n");
  os << "Respond with one JSON object and nothing else: {\"roles\": {\"N\": \"CLEAR\", ...},"
        " \"yield_targets\": {\"W\": \"N\", ...}, \"share_pair\": [\"N\", \"E\"] or null,"
        " \"rationale\": \"short\"}\n";
  return os.str();
}

inline nlohmann::json assignment_to_json(const RoleAssignment& asg) {
  nlohmann::json j;
  j["roles"] = nlohmann::json::object();
  for (const auto& [a, r] : asg.roles) j["roles"][to_string(a)] = to_string(r);
  j["yield_targets"] = nlohmann::json::object();
  for (const auto& [a, t] : asg.yield_targets) j["yield_targets"][to_string(a)] = to_string(t);
  if (asg.share_pair)
    j["share_pair"] = {to_string(asg.share_pair->first), to_string(asg.share_pair->second)};
  else
    j["share_pair"] = nullptr;
  return j;
}

struct ParsedReply {
  RoleAssignment assignment;
  std::string rationale;
};

struct ReplyValidation {
  std::optional<ParsedReply> reply;
  std::string error;  // empty on success
  bool parse_ok = false;   // syntactically valid JSON with the expected shape
  bool safety_ok = false;  // no conflicting CLEAR-CLEAR pair (only meaningful if parse_ok)
};

namespace llm_detail {

// Models often wrap JSON in a markdown fence; strip one if present.
inline std::string strip_fence(const std::string& body) {
  auto first = body.find_first_not_of(" \t\r\n");
  if (first == std::string::npos || body[first] != '`') return body;
  auto open = body.find('\n', first);
  auto close = body.rfind("```");
  if (open == std::string::npos || close == std::string::npos || close <= open) return body;
  return body.substr(open + 1, close - open - 1);
}

}  // namespace llm_detail

inline ReplyValidation parse_and_validate(const std::string& body,
                                          const std::vector<ArbitrationEntry>& entries) {
  ReplyValidation out;
  nlohmann::json j = nlohmann::json::parse(llm_detail::strip_fence(body), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    out.error = "reply is not a JSON object";
    return out;
  }
  if (!j.contains("roles") || !j["roles"].is_object()) {
    out.error = "missing roles object";
    return out;
  }
  ParsedReply parsed;
  try {
    for (const auto& [k, v] : j["roles"].items()) {
      if (!v.is_string()) {
        out.error = "role for " + k + " is not a string";
        return out;
      }
      const auto approach = parse_approach(k);
      const auto role = parse_role(v.get<std::string>());
      if (!approach || !role) {
        out.error = "unknown approach or role token in roles";
        return out;
      }
      parsed.assignment.roles[*approach] = *role;
    }
    if (j.contains("yield_targets")) {
      if (!j["yield_targets"].is_object()) {
        out.error = "yield_targets is not an object";
        return out;
      }
      for (const auto& [k, v] : j["yield_targets"].items()) {
        if (!v.is_string()) {
          out.error = "yield target for " + k + " is not a string";
          return out;
        }
        const auto from = parse_approach(k);
        const auto to = parse_approach(v.get<std::string>());
        if (!from || !to) {
          out.error = "unknown approach token in yield_targets";
          return out;
        }
        parsed.assignment.yield_targets[*from] = *to;
      }
    }
    if (j.contains("share_pair") && !j["share_pair"].is_null()) {
      const auto& sp = j["share_pair"];
      if (!sp.is_array() || sp.size() != 2 || !sp[0].is_string() || !sp[1].is_string()) {
        out.error = "share_pair must be null or a two-element array of approaches";
        return out;
      }
      const auto a = parse_approach(sp[0].get<std::string>());
      const auto b = parse_approach(sp[1].get<std::string>());
      if (!a || !b) {
        out.error = "unknown approach token in share_pair";
        return out;
      }
      parsed.assignment.share_pair = std::make_pair(*a, *b);
    }
  } catch (const std::exception& e) {
    out.error = e.what();
    return out;
  }
  if (j.contains("rationale") && j["rationale"].is_string()) {
    parsed.rationale = j["rationale"].get<std::string>();
    if (parsed.rationale.size() > 2048) parsed.rationale.resize(2048);  // 2 KiB cap
  }
  out.parse_ok = true;

  // Safety check is just the CLEAR-CLEAR clause; full structural validation follows.
  out.safety_ok = true;
  for (const auto& a : entries) {
    for (const auto& b : entries) {
      if (a.approach >= b.approach) continue;
      if (!conflicts(a.approach, a.maneuver, b.approach, b.maneuver)) continue;
      if (parsed.assignment.role_of(a.approach) == Role::Clear &&
          parsed.assignment.role_of(b.approach) == Role::Clear)
        out.safety_ok = false;
    }
  }

  if (auto err = assignment_error(parsed.assignment, entries)) {
    out.error = *err;
    return out;
  }
  out.reply = std::move(parsed);
  return out;
}

struct BackendReply {
  std::string body;
  double latency_ms = 0.0;
  bool transport_error = false;
  std::string error;
};

class ArbitrationBackend {
 public:
  virtual ~ArbitrationBackend() = default;
  virtual std::string name() const = 0;
  virtual BackendReply invoke(const ArbitrationRequest& req) = 0;
  // Synchronous backends complete inside submit(); asynchronous ones run on a thread.
  virtual bool synchronous() const { return true; }
};

// Deterministic reference arbiter: replies with the rule policy's assignment
// and reports zero latency so runs stay byte-identical.
class RuleBackend : public ArbitrationBackend {
 public:
  explicit RuleBackend(LidsaParams params) : params_(std::move(params)) {}
  std::string name() const override { return "rule"; }
  BackendReply invoke(const ArbitrationRequest& req) override {
    RoleAssignment asg = rule_arbitrate(req.entries, params_);
    nlohmann::json j = assignment_to_json(asg);
    j["rationale"] = "rule policy";
    return {j.dump(), 0.0, false, ""};
  }

 private:
  LidsaParams params_;
};

// Test double: produces a caller-supplied body with a configured latency.
class ScriptedBackend : public ArbitrationBackend {
 public:
  using Script = std::function<std::string(const ArbitrationRequest&)>;
  ScriptedBackend(Script script, double latency_ms = 0.0, std::string label = "scripted")
      : script_(std::move(script)), latency_ms_(latency_ms), label_(std::move(label)) {}
  std::string name() const override { return label_; }
  BackendReply invoke(const ArbitrationRequest& req) override {
    ++calls_;
    return {script_(req), latency_ms_, false, ""};
  }
  int calls() const { return calls_; }

 private:
  Script script_;
  double latency_ms_;
  std::string label_;
  int calls_ = 0;
};

// POSTs {prompt, model, temperature, seed, max_tokens} and expects {"text": ...}.
class HttpBackend : public ArbitrationBackend {
 public:
  HttpBackend(HttpBackendConfig cfg, LidsaParams params)
      : cfg_(std::move(cfg)), params_(std::move(params)) {}
  std::string name() const override { return "http"; }
  bool synchronous() const override { return false; }
  BackendReply invoke(const ArbitrationRequest& req) override;

 private:
  HttpBackendConfig cfg_;
  LidsaParams params_;
};

inline BackendReply HttpBackend::invoke(const ArbitrationRequest& req) {
  BackendReply out;
  std::string base = cfg_.endpoint;
  std::string path = "/";
  auto scheme = base.find("://");
  auto slash = base.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (slash != std::string::npos) {
    path = base.substr(slash);
    base = base.substr(0, slash);
  }
  nlohmann::json payload = {
      {"prompt", build_prompt(req, params_)}, {"model", cfg_.model},
      {"temperature", cfg_.temperature},      {"seed", cfg_.llm_seed},
      {"max_tokens", cfg_.max_tokens},
  };
  httplib::Client client(base);
  client.set_connection_timeout(5, 0);
  client.set_read_timeout(120, 0);
  httplib::Headers headers;
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);
  const auto t0 = std::chrono::steady_clock::now();
  auto res = client.Post(path, headers, payload.dump(), "application/json");
  const auto t1 = std::chrono::steady_clock::now();
  out.latency_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  if (!res) {
    out.transport_error = true;
    out.error = "connection failed: " + httplib::to_string(res.error());
    return out;
  }
  if (res->status != 200) {
    out.transport_error = true;
    out.error = "http status " + std::to_string(res->status);
    return out;
  }
  nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("text") || !reply["text"].is_string()) {
    out.transport_error = true;
    out.error = "malformed completion envelope";
    return out;
  }
  out.body = reply["text"].get<std::string>();
  return out;
}

class AsyncArbitrator {
 public:
  enum class Status { Pending, Ready, Failed };

  struct PollResult {
    Status status = Status::Pending;
    RoleAssignment assignment;
    std::string rationale;
    std::string error;
    double latency_ms = 0.0;
  };

  AsyncArbitrator(std::shared_ptr<ArbitrationBackend> backend, double timeout_s)
      : backend_(std::move(backend)), timeout_s_(timeout_s) {}

  int submit(ArbitrationRequest req, double now_s) {
    const int ticket = next_ticket_++;
    Pending p;
    p.request = std::move(req);
    p.submitted_s = now_s;
    if (backend_->synchronous()) {
      p.state = std::make_shared<Shared>();
      p.state->reply = backend_->invoke(p.request);
      p.state->done = true;
    } else {
      p.state = std::make_shared<Shared>();
      auto state = p.state;
      auto backend = backend_;
      auto request = p.request;
      std::thread([state, backend, request] {
        BackendReply r = backend->invoke(request);
        std::lock_guard<std::mutex> lock(state->mutex);
        state->reply = std::move(r);
        state->done = true;
      }).detach();
    }
    pending_.emplace(ticket, std::move(p));
    return ticket;
  }

  // Completion is gated on simulated time: a reply becomes visible only once
  // now_s has passed submission plus the backend's reported latency.
  PollResult poll(int ticket, double now_s) {
    PollResult out;
    auto it = pending_.find(ticket);
    if (it == pending_.end()) {
      out.status = Status::Failed;
      out.error = "unknown ticket";
      return out;
    }
    Pending& p = it->second;
    bool done = false;
    BackendReply reply;
    {
      std::lock_guard<std::mutex> lock(p.state->mutex);
      done = p.state->done;
      if (done) reply = p.state->reply;
    }
    if (done) {
      const double ready_at = p.submitted_s + reply.latency_ms / 1000.0;
      if (now_s + 1e-9 >= ready_at) {
        out.latency_ms = reply.latency_ms;
        if (reply.transport_error) {
          out.status = Status::Failed;
          out.error = reply.error.empty() ? "transport error" : reply.error;
        } else {
          ReplyValidation v = parse_and_validate(reply.body, p.request.entries);
          if (v.reply) {
            out.status = Status::Ready;
            out.assignment = v.reply->assignment;
            out.rationale = v.reply->rationale;
          } else {
            out.status = Status::Failed;
            out.error = v.error;
          }
        }
        pending_.erase(it);
        return out;
      }
    }
    if (now_s - p.submitted_s >= timeout_s_) {
      out.status = Status::Failed;
      out.error = "timeout";
      out.latency_ms = (now_s - p.submitted_s) * 1000.0;
      pending_.erase(it);
      return out;
    }
    out.status = Status::Pending;
    return out;
  }

  bool has_outstanding() const { return !pending_.empty(); }
  double timeout_s() const { return timeout_s_; }

 private:
  struct Shared {
    std::mutex mutex;
    BackendReply reply;
    bool done = false;
  };
  struct Pending {
    ArbitrationRequest request;
    double submitted_s = 0.0;
    std::shared_ptr<Shared> state;
  };

  std::shared_ptr<ArbitrationBackend> backend_;
  double timeout_s_;
  int next_ticket_ = 1;
  std::map<int, Pending> pending_;
};

}  // namespace lidsa
