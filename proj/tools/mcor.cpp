#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "mcor/cli.hpp"

namespace {

mcor::RateUnits parse_units(const std::string& s) {
  if (s == "bits") return mcor::RateUnits::Bits;
  if (s == "nats") return mcor::RateUnits::Nats;
  throw mcor::ConfigError("--units must be 'bits' or 'nats', got '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mismatch capacity of a relayed channel by alternating maximization"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_prefix;
  std::optional<std::string> units;
  int workers = 0;
  app.add_option("--config", config_path, "Path to the run configuration (JSON)");
  app.add_option("--seed", seed, "Override the configured random seed");
  app.add_option("--out", out_prefix, "Override the output file prefix");
  app.add_option("--units", units, "Report units: bits or nats");
  app.add_option("--workers", workers, "Sweep worker threads (default: available cores)");

  auto* run = app.add_subcommand("run", "Solve one configuration and write report + trace");
  auto* sweep = app.add_subcommand("sweep", "Solve along the configured parameter axis");
  auto* exporter =
      app.add_subcommand("export-quantizer", "Export the converged relay law as CSV");
  auto* lm = app.add_subcommand("lm-rate", "LM rate of a joint/metric CSV pair");
  std::string joint_path, metric_path;
  lm->add_option("joint", joint_path, "Joint distribution CSV")->required();
  lm->add_option("metric", metric_path, "Decoding metric CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (lm->parsed()) {
      const auto u = units ? parse_units(*units) : mcor::RateUnits::Bits;
      return mcor::cmd_lm_rate(joint_path, metric_path, u, std::cout);
    }
    if (config_path.empty()) throw mcor::ConfigError("missing --config <path>");
    mcor::RunConfig cfg = mcor::load_run_config(config_path);
    if (seed) cfg.solver.seed = *seed;
    if (out_prefix) cfg.output_prefix = out_prefix->empty() ? "run" : *out_prefix;
    if (units) cfg.report_units = parse_units(*units);

    if (run->parsed()) return mcor::cmd_run(cfg);
    if (sweep->parsed()) return mcor::cmd_sweep(cfg, workers);
    if (exporter->parsed()) return mcor::cmd_export_quantizer(cfg);
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
