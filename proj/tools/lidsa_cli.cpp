#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include "CLI11.hpp"
#include "lidsa/lidsa.hpp"

namespace {

lidsa::Config load_or_default(const std::string& path) {
  if (path.empty()) return lidsa::Config{};
  return lidsa::load_config(path);
}

int write_or_print(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    return 0;
  }
  std::ofstream f(out_path, std::ios::binary);
  if (!f) {
    std::cerr << "cannot open " << out_path << " for writing\n";
    return 2;
  }
  f << text;
  if (!text.empty() && text.back() != '\n') f << '\n';
  return 0;
}

std::shared_ptr<lidsa::ArbitrationBackend> make_bench_backend(const std::string& kind,
                                                              const lidsa::Config& cfg) {
  if (kind == "rule") return std::make_shared<lidsa::RuleBackend>(cfg.lidsa);
  if (kind == "http") return std::make_shared<lidsa::HttpBackend>(cfg.lidsa.http, cfg.lidsa);
  if (kind == "scripted") {
    // Canned floor: grants everything, fails conflicting fixtures by design.
    auto script = [](const lidsa::ArbitrationRequest& req) {
      nlohmann::json roles = nlohmann::json::object();
      for (const auto& e : req.entries) roles[lidsa::to_string(e.approach)] = "CLEAR";
      return nlohmann::json{{"roles", roles},
                            {"yield_targets", nlohmann::json::object()},
                            {"share_pair", nullptr},
                            {"rationale", "all-clear floor"}}
          .dump();
    };
    return std::make_shared<lidsa::ScriptedBackend>(script, 100.0, "scripted");
  }
  throw lidsa::ConfigError("unknown backend '" + kind + "' (expected rule|http|scripted)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"signal-free intersection simulator and arbitration toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir, out_path, in_dir, format = "csv";
  std::string controller = "lidsa", scenario = "medium", backend = "rule";
  std::uint64_t seed = 7;
  int jobs = 1;

  auto* run_cmd = app.add_subcommand("run", "run one simulation");
  run_cmd->add_option("--controller", controller, "fixed|scats|aim|glosa|lidsa")
      ->check(CLI::IsMember({"fixed", "scats", "aim", "glosa", "lidsa"}));
  run_cmd->add_option("--scenario", scenario, "low|medium|high")
      ->check(CLI::IsMember({"low", "medium", "high"}));
  run_cmd->add_option("--seed", seed, "simulation seed");
  run_cmd->add_option("--config", config_path, "config JSON path");
  run_cmd->add_option("--out", out_dir, "directory for the run record");

  auto* campaign_cmd = app.add_subcommand("campaign", "run the full controller matrix");
  campaign_cmd->add_option("--config", config_path, "config JSON path");
  campaign_cmd->add_option("--out", out_dir, "directory for run records")->required();
  campaign_cmd->add_option("--jobs", jobs, "parallel workers");

  auto* report_cmd = app.add_subcommand("report", "aggregate run records");
  report_cmd->add_option("--in", in_dir, "directory with run records")->required();
  report_cmd->add_option("--format", format, "csv|json")
      ->check(CLI::IsMember({"csv", "json"}));
  report_cmd->add_option("--out", out_path, "output file (stdout when omitted)");

  auto* bench_cmd = app.add_subcommand("bench", "score an arbitration backend");
  bench_cmd->add_option("--backend", backend, "rule|http|scripted")
      ->check(CLI::IsMember({"rule", "http", "scripted"}));
  bench_cmd->add_option("--config", config_path, "config JSON path");
  bench_cmd->add_option("--format", format, "csv|json");
  bench_cmd->add_option("--out", out_path, "output file (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  lidsa::Config cfg;
  try {
    cfg = load_or_default(config_path);
  } catch (const lidsa::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (run_cmd->parsed()) {
      const lidsa::RunOutput out = lidsa::run_single(cfg, controller, scenario, seed);
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        lidsa::write_run_file(out_dir, out);
        std::cout << "wrote " << (std::filesystem::path(out_dir) / run_file_name(out.key)).string()
                  << '\n';
      } else {
        std::cout << lidsa::run_record(out).dump(2) << '\n';
      }
      std::cout << controller << '/' << scenario << " seed " << seed << ": delay "
                << out.metrics.control_delay_s << " s, LOS " << out.metrics.los << ", "
                << out.metrics.completed << " trips\n";
      return 0;
    }
    if (campaign_cmd->parsed()) {
      const lidsa::CampaignSummary s = lidsa::run_campaign(cfg, out_dir, jobs);
      std::cout << "campaign: " << s.executed << " executed, " << s.skipped << " skipped, "
                << s.failed << " failed\n";
      for (const auto& err : s.errors) std::cerr << "  " << err << '\n';
      return s.failed == 0 ? 0 : 2;
    }
    if (report_cmd->parsed()) {
      const auto runs = lidsa::load_runs(in_dir);
      if (runs.empty()) {
        std::cerr << "no run records under " << in_dir << '\n';
        return 2;
      }
      const auto rows = lidsa::aggregate_runs(runs);
      const std::string text =
          format == "json" ? lidsa::report_json(rows).dump(2) : lidsa::report_csv(rows);
      return write_or_print(text, out_path);
    }
    if (bench_cmd->parsed()) {
      auto be = make_bench_backend(backend, cfg);
      const lidsa::BenchResult result = lidsa::run_suite(*be);
      const std::string text = format == "json"
                                   ? lidsa::bench_report_json(result, be->name()).dump(2)
                                   : lidsa::bench_report_csv(result, be->name());
      return write_or_print(text, out_path);
    }
  } catch (const lidsa::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "run failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
