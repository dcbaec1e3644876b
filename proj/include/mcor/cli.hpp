#pragma once

#include <atomic>
#include <filesystem>
#include <iostream>
#include <thread>

#include "mcor/csv.hpp"
#include "mcor/run_config.hpp"

namespace mcor {

inline SolverReport run_solver(const Problem& problem, const RunConfig& cfg) {
  SolverConfig sc = cfg.solver;
  if (cfg.mode == RunMode::Budget) {
    sc.compression_target = bits_to_nats(cfg.budget_bits);
    return solve_for_budget(problem.theta, problem.metric, sc);
  }
  sc.compression_target.reset();
  return solve(problem.theta, problem.metric, sc);
}

inline nlohmann::json report_to_json(const SolverReport& rep, const RunConfig& cfg) {
  nlohmann::json j;
  j["capacity_lm_nats"] = rep.capacity_lm;
  j["capacity_lm_bits"] = nats_to_bits(rep.capacity_lm);
  j["rate_yz_nats"] = rep.rate_yz;
  j["rate_yz_bits"] = nats_to_bits(rep.rate_yz);
  j["objective_nats"] = rep.objective;
  j["lambda"] = rep.lambda;
  j["iterations"] = rep.iterations;
  j["converged"] = rep.converged;
  j["seed"] = rep.seed;
  j["flags"] = rep.flags;
  j["report_units"] = units_name(cfg.report_units);
  j["mode"] = cfg.mode == RunMode::Budget ? "budget" : "fixed_lambda";
  if (cfg.mode == RunMode::Budget) {
    j["budget_bits"] = cfg.budget_bits;
    j["budget_gap_nats"] = std::abs(rep.rate_yz - bits_to_nats(cfg.budget_bits));
  }
  return j;
}

inline void write_report_json(const std::filesystem::path& path, const SolverReport& rep,
                              const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << report_to_json(rep, cfg).dump(2) << "\n";
}

inline void write_trace_csv(const std::filesystem::path& path, const SolverReport& rep) {
  csv::Table t;
  t.header = {"iter", "objective", "r_phi", "r_psi", "r_zeta", "r_mu"};
  for (std::size_t i = 0; i < rep.objective_trace.size(); ++i)
    t.rows.push_back({static_cast<double>(i + 1), rep.objective_trace[i],
                      rep.residual_phi_trace[i], rep.residual_psi_trace[i],
                      rep.residual_zeta_trace[i], rep.residual_mu_trace[i]});
  csv::write_table(path, t);
}

/// Single solve: writes <prefix>_report.json and <prefix>_trace.csv.
/// Exit code 0 when converged, 2 otherwise.
inline int cmd_run(const RunConfig& cfg) {
  const Problem problem = build_problem(cfg);
  const SolverReport rep = run_solver(problem, cfg);
  write_report_json(cfg.output_prefix + "_report.json", rep, cfg);
  write_trace_csv(cfg.output_prefix + "_trace.csv", rep);
  return rep.converged ? 0 : 2;
}

namespace detail_cli {

struct SweepRow {
  double axis_value = 0.0;
  double capacity_nats = 0.0;
  double rate_nats = 0.0;
  int iterations = 0;
  bool converged = false;
  bool failed = false;
};

inline RunConfig point_config(const RunConfig& base, const std::string& axis, double value) {
  RunConfig cfg = base;
  cfg.sweep.reset();
  if (axis == "epsilon") {
    if (!cfg.is_quaternary())
      throw ConfigError("sweep: axis 'epsilon' needs a quaternary channel");
    std::get<QuaternarySpec>(cfg.channel).epsilon = value;
  } else if (axis == "B") {
    cfg.mode = RunMode::Budget;
    cfg.budget_bits = value;
  } else if (axis == "snr_db") {
    if (cfg.is_quaternary()) throw ConfigError("sweep: axis 'snr_db' needs an awgn_iq channel");
    std::get<AwgnIqSpec>(cfg.channel).snr_db = value;
  } else if (axis == "lambda") {
    cfg.mode = RunMode::FixedLambda;
    cfg.solver.lambda = value;
  } else {
    throw ConfigError("sweep: unknown axis '" + axis + "'");
  }
  return cfg;
}

}  // namespace detail_cli

/// Parameter sweep: one solve per value, run on a small worker pool. Rows are
/// written in axis order regardless of completion order, so output bytes do
/// not depend on scheduling. Per-point failures leave a row with converged=0.
inline int cmd_sweep(const RunConfig& cfg, int workers) {
  if (!cfg.sweep) throw ConfigError("sweep: config has no sweep section");
  const auto& spec = *cfg.sweep;
  // Fail early on axis/channel mismatches rather than inside the pool.
  detail_cli::point_config(cfg, spec.axis, spec.values.front());

  const std::size_t n = spec.values.size();
  std::vector<detail_cli::SweepRow> rows(n);
  std::atomic<std::size_t> next{0};
  if (workers <= 0)
    workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min<int>(workers, static_cast<int>(n));

  auto work = [&]() {
    while (true) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= n) return;
      detail_cli::SweepRow& row = rows[idx];
      row.axis_value = spec.values[idx];
      try {
        const RunConfig pc = detail_cli::point_config(cfg, spec.axis, spec.values[idx]);
        const Problem problem = build_problem(pc);
        const SolverReport rep = run_solver(problem, pc);
        row.capacity_nats = rep.capacity_lm;
        row.rate_nats = rep.rate_yz;
        row.iterations = rep.iterations;
        row.converged = rep.converged;
      } catch (const std::exception&) {
        row.failed = true;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  const std::string suffix = cfg.report_units == RateUnits::Bits ? "bits" : "nats";
  csv::Table t;
  t.header = {spec.axis, "capacity_" + suffix, "rate_yz_" + suffix, "iterations", "converged"};
  for (const auto& row : rows) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    t.rows.push_back({row.axis_value,
                      row.failed ? nan : in_units(row.capacity_nats, cfg.report_units),
                      row.failed ? nan : in_units(row.rate_nats, cfg.report_units),
                      static_cast<double>(row.iterations),
                      row.converged && !row.failed ? 1.0 : 0.0});
  }
  csv::write_table(cfg.output_prefix + "_sweep.csv", t);
  return 0;
}

/// Converged relay law as a matrix CSV plus an index-to-coordinate legend for
/// the shared observation/reproduction grid.
inline int cmd_export_quantizer(const RunConfig& cfg) {
  if (cfg.is_quaternary())
    throw ConfigError("export-quantizer: needs an awgn_iq channel (grid coordinates)");
  const Problem problem = build_problem(cfg);
  const SolverReport rep = run_solver(problem, cfg);

  std::vector<std::string> comments;
  if (!rep.converged) comments.push_back("converged=false");
  csv::write_matrix(cfg.output_prefix + "_quantizer.csv", rep.final_state.omega, comments);

  csv::Table legend;
  legend.header = {"index", "coord0", "coord1"};
  const auto& pts = *problem.z_alphabet->points;
  for (std::size_t j = 0; j < pts.size(); ++j)
    legend.rows.push_back({static_cast<double>(j), pts[j].x(), pts[j].y()});
  csv::write_table(cfg.output_prefix + "_grid_legend.csv", legend);
  return rep.converged ? 0 : 2;
}

/// LM rate of a joint/metric pair read from matrix CSVs, printed in the
/// requested units.
inline int cmd_lm_rate(const std::string& joint_path, const std::string& metric_path,
                       RateUnits units, std::ostream& out) {
  const Matrix joint = csv::read_matrix(joint_path);
  const Matrix costs = csv::read_matrix(metric_path);
  if (joint.rows() != costs.rows() || joint.cols() != costs.cols())
    throw std::invalid_argument("lm-rate: joint is " + std::to_string(joint.rows()) + "x" +
                                std::to_string(joint.cols()) + " but metric is " +
                                std::to_string(costs.rows()) + "x" +
                                std::to_string(costs.cols()));
  const auto res = lm_rate_fixed_joint(joint, DecodingMetric(costs), 1e-10, 50000);
  out << csv::format_double(in_units(res.value, units)) << "\n";
  return 0;
}

}  // namespace mcor
