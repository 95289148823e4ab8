#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "iotfog/iotfog.hpp"

namespace {

enum ExitCode : int { kPass = 0, kViolations = 1, kConfigError = 2, kInternalError = 3 };

void print_violations(const std::vector<iotfog::ShapeViolation>& violations) {
  for (const auto& v : violations) std::cerr << "violation (" << v.expectation << "): " << v.detail << "\n";
}

int run_command(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out_dir,
                const std::string& format, bool parallel, bool trace) {
  auto cfg = iotfog::load_config_file(config_path);
  if (seed) cfg.seed = *seed;
  iotfog::RunOptions opts;
  opts.parallel = parallel;
  opts.trace = trace;
  auto report = iotfog::run_scenario(cfg, opts);

  auto fmt = format == "json" ? iotfog::ReportFormat::Json : iotfog::ReportFormat::Csv;
  for (const auto& path : iotfog::emit_report(report, fmt, out_dir)) std::cout << "wrote " << path.string() << "\n";
  if (trace)
    for (const auto& s : report.sizes) {
      auto path = std::filesystem::path(out_dir) / ("trace_n" + std::to_string(s.size) + ".tsv");
      iotfog::write_text_file(path, s.trace);
      std::cout << "wrote " << path.string() << "\n";
    }

  for (const auto& s : report.sizes) {
    std::cout << "n=" << s.size << " fog_peers=" << s.fog_peers << " blocks=" << s.consensus.blocks_committed
              << " txs=" << s.consensus.transactions_committed
              << " commit_latency_s=" << iotfog::format_seconds(s.consensus.mean_commit_latency)
              << " ledger_consistent=" << (s.ledger_consistent ? "yes" : "no") << "\n";
    std::cout << iotfog::emit_csv(s);
  }
  auto violations = iotfog::check_shape(report);
  print_violations(violations);
  std::cout << (violations.empty() ? "shape: pass" : "shape: FAIL") << "\n";
  return violations.empty() ? kPass : kViolations;
}

int check_command(const std::string& report_path) {
  auto report = iotfog::load_report(report_path);
  auto violations = iotfog::check_shape(report);
  print_violations(violations);
  std::cout << (violations.empty() ? "shape: pass" : "shape: FAIL") << " (" << report.sizes.size() << " sizes)\n";
  return violations.empty() ? kPass : kViolations;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blockchain IoT-fog middleware simulator"};
  app.set_version_flag("--version", std::string("iotfog ") + iotfog::kVersion);
  app.require_subcommand(1);

  std::string config_path, out_dir = "reports", format = "csv", report_path;
  std::optional<std::uint64_t> seed;
  bool parallel = false, trace = false;

  auto* run = app.add_subcommand("run", "Run the scenario and emit reports");
  run->add_option("--config", config_path, "Scenario config (key=value lines)")->required();
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--out", out_dir, "Output directory")->capture_default_str();
  run->add_option("--format", format, "Report format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  run->add_flag("--parallel", parallel, "Run network sizes on separate threads");
  run->add_flag("--trace", trace, "Also write per-size event traces");

  auto* check = app.add_subcommand("check", "Check the shape of a stored report");
  check->add_option("--report", report_path, "JSON report, CSV table, or directory of CSV tables")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kPass : kConfigError;
  }

  try {
    if (*run) return run_command(config_path, seed, out_dir, format, parallel, trace);
    return check_command(report_path);
  } catch (const iotfog::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const iotfog::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
}
