#pragma once

#include <fstream>
#include <string>
#include <variant>

#include <json.hpp>

#include "mcor/am_solver.hpp"
#include "mcor/channel_models.hpp"

namespace mcor {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class RateUnits { Bits, Nats };
enum class RunMode { FixedLambda, Budget };

inline std::string units_name(RateUnits u) { return u == RateUnits::Bits ? "bits" : "nats"; }

inline double in_units(double nats, RateUnits u) {
  return u == RateUnits::Bits ? nats_to_bits(nats) : nats;
}

struct QuaternarySpec {
  double epsilon = 0.3;
  std::optional<Matrix> transition;
};

struct AwgnIqSpec {
  Modulation scheme = Modulation::Qpsk;
  double eta = 1.0;
  double theta = 0.0;
  double snr_db = 10.0;
  int grid_n = 225;
  double half_width = 8.0;
};

struct SweepSpec {
  std::string axis;  // epsilon | B | snr_db | lambda
  std::vector<double> values;
};

struct RunConfig {
  std::variant<QuaternarySpec, AwgnIqSpec> channel;
  SolverConfig solver;
  RunMode mode = RunMode::FixedLambda;
  double budget_bits = 0.0;
  std::string output_prefix = "run";
  RateUnits report_units = RateUnits::Bits;
  std::optional<SweepSpec> sweep;

  bool is_quaternary() const { return std::holds_alternative<QuaternarySpec>(channel); }
};

namespace detail_config {

using nlohmann::json;

inline const json& require(const json& j, const char* key, const char* where) {
  if (!j.contains(key))
    throw ConfigError(std::string("config: missing field '") + key + "' in " + where);
  return j.at(key);
}

template <class T>
T as(const json& j, const char* key, const char* where) {
  try {
    return require(j, key, where).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: field '") + key + "' in " + where + ": " + e.what());
  }
}

template <class T>
T as_or(const json& j, const char* key, const char* where, T fallback) {
  if (!j.contains(key)) return fallback;
  return as<T>(j, key, where);
}

}  // namespace detail_config

inline RunConfig parse_run_config(const nlohmann::json& j) {
  using detail_config::as;
  using detail_config::as_or;
  using detail_config::require;
  RunConfig cfg;

  const auto& ch = require(j, "channel", "top level");
  const std::string kind = as<std::string>(ch, "type", "channel");
  if (kind == "quaternary") {
    QuaternarySpec q;
    q.epsilon = as<double>(ch, "epsilon", "channel");
    if (ch.contains("transition")) {
      const auto rows = as<std::vector<std::vector<double>>>(ch, "transition", "channel");
      if (rows.size() != 4) throw ConfigError("config: channel.transition must have 4 rows");
      Matrix t(4, 4);
      for (std::size_t i = 0; i < 4; ++i) {
        if (rows[i].size() != 4)
          throw ConfigError("config: channel.transition row " + std::to_string(i) +
                            " must have 4 entries");
        for (std::size_t k = 0; k < 4; ++k)
          t(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][k];
      }
      q.transition = std::move(t);
    }
    cfg.channel = std::move(q);
  } else if (kind == "awgn_iq") {
    AwgnIqSpec a;
    const std::string scheme = as<std::string>(ch, "scheme", "channel");
    if (scheme == "qpsk")
      a.scheme = Modulation::Qpsk;
    else if (scheme == "16qam")
      a.scheme = Modulation::Qam16;
    else
      throw ConfigError("config: channel.scheme must be 'qpsk' or '16qam', got '" + scheme +
                        "'");
    a.eta = as<double>(ch, "eta", "channel");
    a.theta = as<double>(ch, "theta", "channel");
    a.snr_db = as<double>(ch, "snr_db", "channel");
    a.grid_n = as<int>(ch, "grid_n", "channel");
    a.half_width = as_or<double>(ch, "half_width", "channel", 8.0);
    cfg.channel = a;
  } else {
    throw ConfigError("config: channel.type must be 'quaternary' or 'awgn_iq', got '" + kind +
                      "'");
  }

  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    cfg.solver.lambda = as_or<double>(s, "lambda", "solver", cfg.solver.lambda);
    cfg.solver.max_iter = as_or<int>(s, "max_iter", "solver", cfg.solver.max_iter);
    cfg.solver.residual_tol =
        as_or<double>(s, "residual_tol", "solver", cfg.solver.residual_tol);
    if (s.contains("power_limit"))
      cfg.solver.power_limit = as<double>(s, "power_limit", "solver");
    if (s.contains("lambda_bracket")) {
      const auto b = as<std::vector<double>>(s, "lambda_bracket", "solver");
      if (b.size() != 2) throw ConfigError("config: solver.lambda_bracket must have 2 entries");
      cfg.solver.lambda_bracket = {b[0], b[1]};
    }
    cfg.solver.seed = as_or<std::uint64_t>(s, "seed", "solver", cfg.solver.seed);
    cfg.solver.optimize_input =
        as_or<bool>(s, "optimize_input", "solver", cfg.solver.optimize_input);
    cfg.solver.restarts = as_or<int>(s, "restarts", "solver", cfg.solver.restarts);
    cfg.solver.budget_tol = as_or<double>(s, "budget_tol", "solver", cfg.solver.budget_tol);
  }

  if (j.contains("mode")) {
    const auto& m = j.at("mode");
    const std::string mk = as<std::string>(m, "type", "mode");
    if (mk == "fixed_lambda") {
      cfg.mode = RunMode::FixedLambda;
    } else if (mk == "budget") {
      cfg.mode = RunMode::Budget;
      cfg.budget_bits = as<double>(m, "B_bits", "mode");
      if (!(cfg.budget_bits >= 0.0)) throw ConfigError("config: mode.B_bits must be >= 0");
    } else {
      throw ConfigError("config: mode.type must be 'fixed_lambda' or 'budget', got '" + mk +
                        "'");
    }
  }

  cfg.output_prefix = detail_config::as_or<std::string>(j, "output", "top level", "run");
  if (cfg.output_prefix.empty()) cfg.output_prefix = "run";

  const std::string units =
      detail_config::as_or<std::string>(j, "report_units", "top level", "bits");
  if (units == "bits")
    cfg.report_units = RateUnits::Bits;
  else if (units == "nats")
    cfg.report_units = RateUnits::Nats;
  else
    throw ConfigError("config: report_units must be 'bits' or 'nats', got '" + units + "'");

  if (j.contains("sweep")) {
    const auto& sw = j.at("sweep");
    SweepSpec spec;
    spec.axis = as<std::string>(sw, "axis", "sweep");
    spec.values = as<std::vector<double>>(sw, "values", "sweep");
    if (spec.axis != "epsilon" && spec.axis != "B" && spec.axis != "snr_db" &&
        spec.axis != "lambda")
      throw ConfigError("config: sweep.axis must be one of epsilon, B, snr_db, lambda");
    if (spec.values.empty()) throw ConfigError("config: sweep.values must not be empty");
    cfg.sweep = std::move(spec);
  }
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    // The parser message carries the line and column of the defect.
    throw ConfigError("config: " + path + ": " + e.what());
  }
  try {
    return parse_run_config(j);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
}

struct Problem {
  Channel theta;
  DecodingMetric metric;
  std::optional<Alphabet> z_alphabet;  // grid coordinates, when the model has them
};

inline Problem build_problem(const RunConfig& cfg) {
  if (cfg.is_quaternary()) {
    const auto& q = std::get<QuaternarySpec>(cfg.channel);
    return Problem{quaternary_channel(q.epsilon, q.transition),
                   metric_from_decoding_rule(q.epsilon), std::nullopt};
  }
  const auto& a = std::get<AwgnIqSpec>(cfg.channel);
  const Alphabet points = constellation(a.scheme);
  const GridSpec grid{a.half_width, a.grid_n};
  const auto params = IqImbalanceParams::from_snr(a.eta, a.theta, a.snr_db);
  return Problem{awgn_iq_channel(points, params, grid), mismatch_metric_awgn(points, grid),
                 make_grid(grid)};
}

}  // namespace mcor
