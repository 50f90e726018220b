#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"
#include "lidsa/baselines.hpp"
#include "lidsa/lidsa_controller.hpp"
#include "lidsa/metrics.hpp"
#include "lidsa/scenario.hpp"

namespace lidsa {

inline constexpr std::array<std::uint64_t, 3> kCampaignSeeds{7, 41, 129};

inline const std::vector<std::string>& campaign_controllers() {
  static const std::vector<std::string> c{"fixed", "scats", "aim", "glosa", "lidsa"};
  return c;
}

inline const std::vector<std::string>& campaign_scenarios() {
  static const std::vector<std::string> s{"low", "medium", "high"};
  return s;
}

struct RunKey {
  std::string controller;
  std::string scenario;
  std::uint64_t seed = 0;
  bool operator==(const RunKey&) const = default;
};

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Stable file name per run; std::hash is not pinned across implementations.
inline std::string run_file_name(const RunKey& key) {
  std::ostringstream tag;
  tag << key.controller << '|' << key.scenario << '|' << key.seed;
  std::ostringstream os;
  os << "run_" << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(tag.str())
     << ".json";
  return os.str();
}

inline std::unique_ptr<Controller> make_controller(const std::string& name, const Config& cfg) {
  if (name == "fixed") return std::make_unique<FixedCycleController>(cfg.fixed_cycle);
  if (name == "scats") return std::make_unique<ScatsController>(cfg.scats, cfg.sim);
  if (name == "aim") return std::make_unique<AimController>(cfg.aim, cfg.sim);
  if (name == "glosa") return std::make_unique<GlosaController>(cfg.glosa, cfg.fixed_cycle, cfg.sim);
  if (name == "lidsa") return LidsaController::from_config(cfg.lidsa, cfg.sim);
  throw ConfigError("unknown controller '" + name + "' (expected fixed|scats|aim|glosa|lidsa)");
}

struct RunOutput {
  RunKey key;
  RunMetrics metrics;
  nlohmann::json controller_stats;
};

// One full simulation: per-step spawn, decide, advance, accumulate. The spawn
// RNG is dedicated to demand, so every controller sees the same arrivals.
inline RunOutput run_single(Config cfg, const std::string& controller_name,
                            const std::string& scenario, std::uint64_t seed) {
  cfg.demand = preset_demand(scenario);
  std::unique_ptr<Controller> controller = make_controller(controller_name, cfg);
  WorldState world;
  std::mt19937_64 rng(seed);
  MetricsAccumulator acc(cfg.metrics, cfg.sim);
  const int steps = static_cast<int>(cfg.sim.horizon_s / cfg.sim.step_s);
  for (int i = 0; i < steps; ++i) {
    spawn(world, cfg.demand, cfg.sim, rng);
    const ControlDecision decision = controller->decide(world);
    step(world, decision, cfg.sim);
    acc.after_step(world);
  }
  RunOutput out;
  out.key = {controller_name, scenario, seed};
  out.metrics = acc.finalize(world, cfg.demand, cfg.fixed_cycle);
  out.controller_stats = controller->stats();
  return out;
}

// Run records carry no timestamps or host details: repeat runs must be
// byte-identical.
inline nlohmann::json run_record(const RunOutput& out) {
  return {{"schema", "lidsa-run-v1"},
          {"key",
           {{"controller", out.key.controller},
            {"scenario", out.key.scenario},
            {"seed", out.key.seed}}},
          {"metrics", out.metrics},
          {"controller_stats", out.controller_stats}};
}

inline void write_run_file(const std::filesystem::path& dir, const RunOutput& out) {
  std::ofstream f(dir / run_file_name(out.key), std::ios::binary);
  f << run_record(out).dump(2) << '\n';
}

inline bool parse_run_record(const nlohmann::json& j, RunOutput& out) {
  if (!j.is_object() || j.value("schema", "") != "lidsa-run-v1") return false;
  try {
    out.key.controller = j.at("key").at("controller").get<std::string>();
    out.key.scenario = j.at("key").at("scenario").get<std::string>();
    out.key.seed = j.at("key").at("seed").get<std::uint64_t>();
    out.metrics = j.at("metrics").get<RunMetrics>();
    out.controller_stats = j.value("controller_stats", nlohmann::json::object());
  } catch (const nlohmann::json::exception&) {
    return false;
  }
  return true;
}

struct CampaignSummary {
  int executed = 0;
  int skipped = 0;  // checkpoint hits
  int failed = 0;
  std::vector<std::string> errors;
};

// 5 controllers x 3 scenarios x 3 seeds. Existing valid run files are
// checkpoints and are skipped, so an interrupted campaign resumes cheaply.
inline CampaignSummary run_campaign(const Config& cfg, const std::filesystem::path& out_dir,
                                    int jobs = 1) {
  std::filesystem::create_directories(out_dir);
  std::vector<RunKey> tasks;
  for (const auto& c : campaign_controllers())
    for (const auto& s : campaign_scenarios())
      for (std::uint64_t seed : kCampaignSeeds) tasks.push_back({c, s, seed});

  CampaignSummary summary;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const RunKey& key = tasks[i];
      const auto path = out_dir / run_file_name(key);
      if (std::filesystem::exists(path)) {
        std::ifstream f(path);
        nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
        RunOutput existing;
        if (!j.is_discarded() && parse_run_record(j, existing) && existing.key == key) {
          std::lock_guard lock(mu);
          ++summary.skipped;
          continue;
        }
      }
      try {
        const RunOutput out = run_single(cfg, key.controller, key.scenario, key.seed);
        write_run_file(out_dir, out);
        std::lock_guard lock(mu);
        ++summary.executed;
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        ++summary.failed;
        summary.errors.push_back(key.controller + "/" + key.scenario + "/seed " +
                                 std::to_string(key.seed) + ": " + e.what());
      }
    }
  };
  jobs = std::max(1, jobs);
  std::vector<std::thread> pool;
  for (int i = 0; i < jobs - 1; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return summary;
}

inline std::vector<RunOutput> load_runs(const std::filesystem::path& dir) {
  std::vector<RunOutput> runs;
  if (!std::filesystem::is_directory(dir)) return runs;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().filename().string().starts_with("run_") &&
        entry.path().extension() == ".json")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    std::ifstream f(path);
    nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
    RunOutput out;
    if (!j.is_discarded() && parse_run_record(j, out)) runs.push_back(std::move(out));
  }
  return runs;
}

struct AggregateRow {
  std::string controller;
  std::string scenario;
  int n = 0;
  std::map<std::string, double> mean;
  std::map<std::string, double> stdev;
  std::string los;
  double delta_delay_pct = 0.0;   // vs fixed, same scenario; negative is better
  double delta_fuel_pct = 0.0;
  double delta_intent_pp = 0.0;   // percentage points
};

// Mean and sample standard deviation per controller/scenario cell, plus the
// change against the fixed-time baseline in the same scenario.
inline std::vector<AggregateRow> aggregate_runs(const std::vector<RunOutput>& runs) {
  std::map<std::pair<std::string, std::string>, std::vector<const RunOutput*>> cells;
  for (const auto& r : runs) cells[{r.key.scenario, r.key.controller}].push_back(&r);

  auto numeric_fields = [](const RunOutput& r) {
    std::map<std::string, double> vals;
    nlohmann::json j = r.metrics;
    for (const auto& col : metric_columns())
      if (col != "los") vals[col] = j.at(col).get<double>();
    return vals;
  };

  std::vector<AggregateRow> rows;
  for (const auto& [key, cell] : cells) {
    AggregateRow row;
    row.scenario = key.first;
    row.controller = key.second;
    row.n = static_cast<int>(cell.size());
    std::map<std::string, std::vector<double>> series;
    for (const RunOutput* r : cell)
      for (const auto& [name, v] : numeric_fields(*r)) series[name].push_back(v);
    for (const auto& [name, vs] : series) {
      double sum = 0.0;
      for (double v : vs) sum += v;
      const double mean = sum / static_cast<double>(vs.size());
      row.mean[name] = mean;
      double ss = 0.0;
      for (double v : vs) ss += (v - mean) * (v - mean);
      row.stdev[name] = vs.size() > 1 ? std::sqrt(ss / static_cast<double>(vs.size() - 1)) : 0.0;
    }
    row.los = los_grade(row.mean["control_delay_s"]);
    rows.push_back(std::move(row));
  }

  for (auto& row : rows) {
    const AggregateRow* fixed = nullptr;
    for (const auto& other : rows)
      if (other.scenario == row.scenario && other.controller == "fixed") fixed = &other;
    if (!fixed || fixed == &row) continue;
    const double fd = fixed->mean.at("control_delay_s");
    const double ff = fixed->mean.at("fuel_g_per_veh");
    if (fd > 0.0) row.delta_delay_pct = 100.0 * (row.mean.at("control_delay_s") - fd) / fd;
    if (ff > 0.0) row.delta_fuel_pct = 100.0 * (row.mean.at("fuel_g_per_veh") - ff) / ff;
    row.delta_intent_pp = row.mean.at("intent_pct") - fixed->mean.at("intent_pct");
  }
  return rows;
}

inline nlohmann::json report_json(const std::vector<AggregateRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json j = {{"controller", row.controller}, {"scenario", row.scenario},
                        {"n", row.n},                   {"los", row.los},
                        {"mean", row.mean},             {"stdev", row.stdev}};
    if (row.controller != "fixed") {
      j["delta_vs_fixed"] = {{"control_delay_pct", row.delta_delay_pct},
                             {"fuel_pct", row.delta_fuel_pct},
                             {"intent_pp", row.delta_intent_pp}};
    }
    out.push_back(std::move(j));
  }
  return out;
}

inline std::string report_csv(const std::vector<AggregateRow>& rows) {
  std::ostringstream os;
  os << "controller,scenario,n,los";
  for (const auto& col : metric_columns())
    if (col != "los") os << ',' << col << "_mean," << col << "_std";
  os << ",delta_delay_pct,delta_fuel_pct,delta_intent_pp\n";
  for (const auto& row : rows) {
    os << row.controller << ',' << row.scenario << ',' << row.n << ',' << row.los;
    for (const auto& col : metric_columns())
      if (col != "los") os << ',' << row.mean.at(col) << ',' << row.stdev.at(col);
    os << ',' << row.delta_delay_pct << ',' << row.delta_fuel_pct << ',' << row.delta_intent_pp
       << '\n';
  }
  return os.str();
}

}  // namespace lidsa
