#include <catch2/catch_amalgamated.hpp>

#include <memory>
#include <random>

#include "lidsa/llm_backend.hpp"

using namespace lidsa;

namespace {

ArbitrationEntry entry_of(Approach a, Maneuver m, PriorityClass pc, double wait, int occ,
                          double pressure) {
  ArbitrationEntry e;
  e.approach = a;
  e.maneuver = m;
  e.priority = pc;
  e.leader_wait_s = wait;
  e.leader_occupancy = occ;
  e.queue_len = 3;
  e.pressure = pressure;
  return e;
}

ArbitrationRequest two_way_request() {
  ArbitrationRequest req;
  req.entries = {entry_of(Approach::N, Maneuver::Straight, PriorityClass::Normal, 10, 1, 50),
                 entry_of(Approach::E, Maneuver::Left, PriorityClass::Transit, 25, 30, 80)};
  req.row_holder = Approach::N;
  return req;
}

}  // namespace

TEST_CASE("prompt carries the full decision context", "[llm]") {
  const LidsaParams params;
  const std::string p = build_prompt(two_way_request(), params);

  CHECK(p.find(kPromptVersion) != std::string::npos);
  CHECK(p.find("[arbitration-v1]") == 0);
  CHECK(p.find("- N: leader straight, priority NORMAL, leader wait 10.00 s, occupancy 1,"
               " queue 3, pressure 50.00") != std::string::npos);
  CHECK(p.find("- E: leader left, priority TRANSIT, leader wait 25.00 s, occupancy 30,"
               " queue 3, pressure 80.00") != std::string::npos);
  CHECK(p.find("Current right-of-way holder: N") != std::string::npos);
  CHECK(p.find("Conflicting pairs: N-E") != std::string::npos);
  CHECK(p.find("100.00") != std::string::npos);  // theta_p
  CHECK(p.find("50.00") != std::string::npos);   // delta_p

  SECTION("no holder reads none") {
    ArbitrationRequest req = two_way_request();
    req.row_holder.reset();
    CHECK(build_prompt(req, params).find("Current right-of-way holder: none") !=
          std::string::npos);
  }
  SECTION("parallel-only actives list no conflicting pairs") {
    ArbitrationRequest req;
    req.entries = {entry_of(Approach::N, Maneuver::Straight, PriorityClass::Normal, 5, 1, 20),
                   entry_of(Approach::S, Maneuver::Straight, PriorityClass::Normal, 5, 1, 20)};
    CHECK(build_prompt(req, params).find("Conflicting pairs: none") != std::string::npos);
  }
  SECTION("prompt is byte-stable") {
    CHECK(build_prompt(two_way_request(), params) == p);
  }
}

TEST_CASE("assignment survives the JSON round trip", "[llm]") {
  const LidsaParams params;
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> md(0, 2);
  std::uniform_real_distribution<double> wait(0.0, 100.0);
  std::uniform_real_distribution<double> pressure(0.0, 300.0);

  for (int trial = 0; trial < 300; ++trial) {
    std::vector<ArbitrationEntry> entries;
    for (Approach a : all_approaches) {
      if (rng() % 3 == 0 && entries.size() + (4 - static_cast<int>(a)) > 1) continue;
      entries.push_back(entry_of(a, static_cast<Maneuver>(md(rng)), PriorityClass::Normal,
                                 wait(rng), 1, pressure(rng)));
    }
    if (entries.empty())
      entries.push_back(
          entry_of(Approach::N, Maneuver::Straight, PriorityClass::Normal, 5, 1, 10));
    const RoleAssignment asg = rule_arbitrate(entries, params);
    const std::string body = assignment_to_json(asg).dump();
    const ReplyValidation v = parse_and_validate(body, entries);
    REQUIRE(v.parse_ok);
    REQUIRE(v.safety_ok);
    REQUIRE(v.reply.has_value());
    REQUIRE(v.reply->assignment == asg);
  }
}

TEST_CASE("markdown fences are stripped before parsing", "[llm]") {
  const auto req = two_way_request();
  const LidsaParams params;
  const RoleAssignment asg = rule_arbitrate(req.entries, params);
  const std::string json = assignment_to_json(asg).dump();

  for (const std::string body : {"```json\n" + json + "\n```", "```\n" + json + "\n```",
                                 "  \n```json\n" + json + "\n```\n "}) {
    const ReplyValidation v = parse_and_validate(body, req.entries);
    REQUIRE(v.parse_ok);
    REQUIRE(v.reply.has_value());
    CHECK(v.reply->assignment == asg);
  }
}

TEST_CASE("validation separates parse, safety, and structure", "[llm]") {
  const auto req = two_way_request();

  SECTION("free text is not parseable") {
    const ReplyValidation v = parse_and_validate("let me think about this...", req.entries);
    CHECK_FALSE(v.parse_ok);
    CHECK_FALSE(v.reply.has_value());
    CHECK_FALSE(v.error.empty());
  }
  SECTION("JSON array is not a reply object") {
    CHECK_FALSE(parse_and_validate("[1,2,3]", req.entries).parse_ok);
  }
  SECTION("missing roles object") {
    CHECK_FALSE(parse_and_validate(R"({"rationale":"hi"})", req.entries).parse_ok);
  }
  SECTION("unknown role token") {
    const ReplyValidation v =
        parse_and_validate(R"({"roles":{"N":"GO","E":"YIELD"}})", req.entries);
    CHECK_FALSE(v.parse_ok);
  }
  SECTION("conflicting clear-clear parses but is unsafe and structurally rejected") {
    const ReplyValidation v =
        parse_and_validate(R"({"roles":{"N":"CLEAR","E":"CLEAR"}})", req.entries);
    CHECK(v.parse_ok);
    CHECK_FALSE(v.safety_ok);
    CHECK_FALSE(v.reply.has_value());
  }
  SECTION("yield without target parses safely but fails structure") {
    const ReplyValidation v =
        parse_and_validate(R"({"roles":{"N":"CLEAR","E":"YIELD"}})", req.entries);
    CHECK(v.parse_ok);
    CHECK(v.safety_ok);
    CHECK_FALSE(v.reply.has_value());
    CHECK_FALSE(v.error.empty());
  }
  SECTION("follow is rejected structurally") {
    const ReplyValidation v = parse_and_validate(
        R"({"roles":{"N":"CLEAR","E":"FOLLOW"}})", req.entries);
    CHECK_FALSE(v.reply.has_value());
  }
  SECTION("missing approach fails structure") {
    const ReplyValidation v = parse_and_validate(R"({"roles":{"N":"CLEAR"}})", req.entries);
    CHECK(v.parse_ok);
    CHECK_FALSE(v.reply.has_value());
  }
  SECTION("rationale is capped at 2 KiB") {
    const std::string big(5000, 'x');
    const std::string body = R"({"roles":{"N":"CLEAR","E":"YIELD"},)"
                             R"("yield_targets":{"E":"N"},"rationale":")" + big + "\"}";
    const ReplyValidation v = parse_and_validate(body, req.entries);
    REQUIRE(v.reply.has_value());
    CHECK(v.reply->rationale.size() == 2048);
  }
}

TEST_CASE("rule backend answers instantly and validly", "[llm]") {
  const LidsaParams params;
  RuleBackend backend{params};
  CHECK(backend.name() == "rule");
  CHECK(backend.synchronous());

  const auto req = two_way_request();
  const BackendReply r = backend.invoke(req);
  CHECK(r.latency_ms == 0.0);
  CHECK_FALSE(r.transport_error);
  const ReplyValidation v = parse_and_validate(r.body, req.entries);
  REQUIRE(v.reply.has_value());
  CHECK(v.reply->assignment == rule_arbitrate(req.entries, params));
  CHECK(v.reply->rationale == "rule policy");
}

TEST_CASE("scripted backend counts calls and reports its latency", "[llm]") {
  ScriptedBackend backend{[](const ArbitrationRequest&) { return std::string("nope"); },
                          250.0, "canned"};
  CHECK(backend.name() == "canned");
  CHECK(backend.calls() == 0);
  const BackendReply r = backend.invoke(two_way_request());
  CHECK(r.body == "nope");
  CHECK(r.latency_ms == 250.0);
  CHECK(backend.calls() == 1);
  backend.invoke(two_way_request());
  CHECK(backend.calls() == 2);
}

TEST_CASE("async arbitrator gates completion on simulated latency", "[llm]") {
  const LidsaParams params;
  auto backend = std::make_shared<ScriptedBackend>(
      [&params](const ArbitrationRequest& req) {
        return assignment_to_json(rule_arbitrate(req.entries, params)).dump();
      },
      1500.0);
  AsyncArbitrator arb{backend, 10.0};
  const auto req = two_way_request();

  const int ticket = arb.submit(req, 100.0);
  CHECK(arb.has_outstanding());

  // Reply exists immediately (synchronous backend) but stays invisible
  // until simulated time passes the reported latency.
  CHECK(arb.poll(ticket, 100.0).status == AsyncArbitrator::Status::Pending);
  CHECK(arb.poll(ticket, 101.0).status == AsyncArbitrator::Status::Pending);

  const auto done = arb.poll(ticket, 101.5);
  REQUIRE(done.status == AsyncArbitrator::Status::Ready);
  CHECK(done.latency_ms == 1500.0);
  CHECK(done.assignment == rule_arbitrate(req.entries, params));
  CHECK_FALSE(arb.has_outstanding());

  SECTION("a consumed ticket is unknown afterwards") {
    const auto again = arb.poll(ticket, 200.0);
    CHECK(again.status == AsyncArbitrator::Status::Failed);
    CHECK(again.error == "unknown ticket");
  }
}

TEST_CASE("async arbitrator times out slow replies", "[llm]") {
  auto backend = std::make_shared<ScriptedBackend>(
      [](const ArbitrationRequest&) { return std::string("{}"); }, 60000.0);
  AsyncArbitrator arb{backend, 5.0};
  const int ticket = arb.submit(two_way_request(), 0.0);

  CHECK(arb.poll(ticket, 4.9).status == AsyncArbitrator::Status::Pending);
  const auto out = arb.poll(ticket, 5.0);
  CHECK(out.status == AsyncArbitrator::Status::Failed);
  CHECK(out.error == "timeout");
  CHECK(out.latency_ms == Catch::Approx(5000.0));
  CHECK_FALSE(arb.has_outstanding());
}

TEST_CASE("async arbitrator surfaces malformed replies as failures", "[llm]") {
  auto backend = std::make_shared<ScriptedBackend>(
      [](const ArbitrationRequest&) { return std::string("gibberish"); }, 100.0);
  AsyncArbitrator arb{backend, 10.0};
  const int ticket = arb.submit(two_way_request(), 0.0);
  const auto out = arb.poll(ticket, 0.2);
  CHECK(out.status == AsyncArbitrator::Status::Failed);
  CHECK_FALSE(out.error.empty());
  CHECK_FALSE(arb.has_outstanding());
}

TEST_CASE("http backend reports unreachable endpoints as transport errors", "[llm]") {
  HttpBackendConfig cfg;
  cfg.endpoint = "http://127.0.0.1:1";
  HttpBackend backend{cfg, LidsaParams{}};
  CHECK(backend.name() == "http");
  CHECK_FALSE(backend.synchronous());
  const BackendReply r = backend.invoke(two_way_request());
  CHECK(r.transport_error);
  CHECK_FALSE(r.error.empty());
}
