#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mcor/lm_dual.hpp"

namespace mcor {

struct SolverConfig {
  double lambda = 1.0;
  int max_iter = 5000;
  double residual_tol = 1e-8;
  std::optional<double> power_limit;         // mean-square amplitude budget
  std::optional<double> compression_target;  // relay-rate budget B, in nats
  std::pair<double, double> lambda_bracket{1e-3, 10.0};
  std::uint64_t seed = 0;
  bool optimize_input = true;  // false pins the input law to uniform
  int restarts = 1;
  double budget_tol = 1e-6;  // |I(Y;Z) - B| target of the multiplier search, nats

  void validate() const {
    if (!(lambda > 0.0)) throw std::invalid_argument("SolverConfig: lambda must be positive");
    if (max_iter < 1) throw std::invalid_argument("SolverConfig: max_iter must be >= 1");
    if (!(residual_tol > 0.0))
      throw std::invalid_argument("SolverConfig: residual_tol must be positive");
    if (!(lambda_bracket.first > 0.0) || !(lambda_bracket.second > lambda_bracket.first))
      throw std::invalid_argument("SolverConfig: lambda_bracket must be ordered and positive");
    if (power_limit && !(*power_limit > 0.0))
      throw std::invalid_argument("SolverConfig: power_limit must be positive");
    if (power_limit && !optimize_input)
      throw std::invalid_argument(
          "SolverConfig: a power constraint needs an optimized input law");
    if (compression_target && !(*compression_target >= 0.0))
      throw std::invalid_argument("SolverConfig: compression_target must be >= 0");
    if (restarts < 1) throw std::invalid_argument("SolverConfig: restarts must be >= 1");
    if (!(budget_tol > 0.0)) throw std::invalid_argument("SolverConfig: budget_tol must be positive");
  }
};

/// All iterates of one alternating-maximization run. log_omega caches
/// log(omega) entrywise (-inf where omega is zero) so the relay-rate term
/// never re-takes logs of the full matrix.
struct SolverState {
  Vector p;
  Matrix omega;
  Matrix log_omega;
  Vector r;
  DualState dual;
  double mu = 0.0;
};

struct Residuals {
  double phi = 0.0;
  double psi_tilde = 0.0;
  double zeta = 0.0;
  double mu = 0.0;
  double max_value() const {
    return std::max(std::max(phi, psi_tilde), std::max(zeta, mu));
  }
};

struct SolverReport {
  double capacity_lm = 0.0;  // nats
  double rate_yz = 0.0;      // nats
  double objective = 0.0;    // final relaxed objective, nats
  double lambda = 0.0;
  int iterations = 0;
  bool converged = false;
  std::uint64_t seed = 0;
  std::vector<double> objective_trace;
  std::vector<double> residual_phi_trace;
  std::vector<double> residual_psi_trace;
  std::vector<double> residual_zeta_trace;
  std::vector<double> residual_mu_trace;
  std::vector<double> mu_trace;
  std::vector<double> mean_power_trace;
  std::vector<std::string> flags;
  SolverState final_state;

  bool has_flag(const std::string& f) const {
    for (const auto& g : flags)
      if (g == f) return true;
    return false;
  }
};

namespace detail {

inline Vector softmax(const Vector& log_w, const char* what) {
  double mx = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < log_w.size(); ++i) mx = std::max(mx, log_w[i]);
  if (!std::isfinite(mx)) throw std::domain_error(std::string(what) + ": all weights vanished");
  Vector w(log_w.size());
  double s = 0.0;
  for (Index i = 0; i < log_w.size(); ++i) {
    w[i] = std::exp(log_w[i] - mx);
    s += w[i];
  }
  return w / s;
}

/// Row-wise KL divergence to a fixed reference law, using cached logs.
inline Vector kl_rows(const Matrix& omega, const Matrix& log_omega, const Vector& log_ref) {
  Vector kl(omega.rows());
  for (Index k = 0; k < omega.rows(); ++k) {
    double acc = 0.0;
    for (Index j = 0; j < omega.cols(); ++j) {
      const double w = omega(k, j);
      if (w > 0.0) acc += w * (log_omega(k, j) - log_ref[j]);
    }
    kl[k] = acc;
  }
  return kl;
}

}  // namespace detail

/// Rows drawn from a flat Dirichlet; strictly positive almost surely.
inline Matrix random_row_stochastic(Index k, Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> draw(1.0);
  Matrix m(k, n);
  for (Index a = 0; a < k; ++a) {
    double s = 0.0;
    for (Index b = 0; b < n; ++b) {
      double v = draw(rng);
      if (!(v > 0.0)) v = 1e-12;
      m(a, b) = v;
      s += v;
    }
    m.row(a) /= s;
  }
  return m;
}

/// Log of the linear-term coefficients J of the relaxed objective, as a
/// function of the current duals, relay law and output law. Independent of p.
inline Vector eval_log_J(const SolverState& s, const Matrix& theta, const Matrix& costs,
                         double lambda) {
  const Matrix theta_omega = theta * s.omega;
  const Index m = theta.rows();
  const Index n = costs.cols();
  const Vector lam_phi = s.dual.kernel.transpose() * s.dual.phi;
  Vector u(n);
  for (Index j = 0; j < n; ++j)
    u[j] = -lam_phi[j] * s.dual.psi_tilde[j] + std::log(s.dual.psi_tilde[j]);
  const Vector a = theta_omega * u;
  const Vector b = (theta_omega.array() * costs.array()).matrix().rowwise().sum();
  Vector log_r(s.r.size());
  for (Index j = 0; j < s.r.size(); ++j) log_r[j] = safe_log(s.r[j]);
  const Vector kl = detail::kl_rows(s.omega, s.log_omega, log_r);
  const Vector c = theta * kl;
  Vector log_j(m);
  for (Index i = 0; i < m; ++i) {
    const double lp = s.dual.phi[i] > 0.0 ? std::log(s.dual.phi[i])
                                          : -std::numeric_limits<double>::infinity();
    log_j[i] = lp + a[i] - s.dual.zeta * b[i] - lambda * c[i];
  }
  return log_j;
}

/// J itself. Entries on forbidden metric rows may underflow to zero; the
/// normalized updates below work on logs and are unaffected.
inline Vector eval_J(const SolverState& s, const Matrix& theta, const Matrix& costs,
                     double lambda) {
  return eval_log_J(s, theta, costs, lambda).array().exp();
}

inline Vector update_p(const Vector& log_j) { return detail::softmax(log_j, "update_p"); }

inline double eval_F(double mu, const Vector& log_j, const Vector& sq_norms, double gamma) {
  const Vector w = detail::softmax(log_j - mu * sq_norms, "eval_F");
  return w.dot(sq_norms) - gamma;
}

inline double eval_F_derivative(double mu, const Vector& log_j, const Vector& sq_norms) {
  const Vector w = detail::softmax(log_j - mu * sq_norms, "eval_F");
  const double mean = w.dot(sq_norms);
  const double second = w.dot(sq_norms.cwiseProduct(sq_norms));
  return -(second - mean * mean);
}

struct PowerUpdate {
  Vector p;
  double mu = 0.0;
};

/// Input-law update under a mean-square amplitude budget. F(0) <= 0 means the
/// plain update already respects the budget and mu stays at zero; otherwise mu
/// is the root of the monotone function F.
inline PowerUpdate update_p_power(const Vector& log_j, const Vector& sq_norms, double gamma,
                                  double mu_warm, double tol) {
  const double f0 = eval_F(0.0, log_j, sq_norms, gamma);
  if (f0 <= tol) return {detail::softmax(log_j, "update_p"), 0.0};
  auto f = [&](double mu) { return eval_F(mu, log_j, sq_norms, gamma); };
  auto df = [&](double mu) { return eval_F_derivative(mu, log_j, sq_norms); };
  const double mu = detail::solve_decreasing_root(
      f, df, mu_warm, tol, 1e6,
      "update_p_power: power budget below the smallest constellation norm");
  return {detail::softmax(log_j - mu * sq_norms, "update_p"), mu};
}

struct OmegaUpdate {
  Matrix omega;
  Matrix log_omega;
};

/// Pre-normalization relay update in log space, valid where every relay input
/// is reachable (theta^T p strictly positive).
inline Matrix eval_omega_star_log(const SolverState& s, const Matrix& theta,
                                  const Matrix& costs, double lambda) {
  const Index k_dim = theta.cols();
  const Index n = costs.cols();
  const Vector lam_phi = s.dual.kernel.transpose() * s.dual.phi;
  Vector v(n);
  for (Index j = 0; j < n; ++j)
    v[j] = safe_log(s.r[j]) + (std::log(s.dual.psi_tilde[j]) -
                               lam_phi[j] * s.dual.psi_tilde[j]) /
                                  lambda;
  const Vector q = theta.transpose() * s.p;
  const Matrix a = theta.transpose() * (s.p.asDiagonal() * costs);
  Matrix lo(k_dim, n);
  for (Index k = 0; k < k_dim; ++k)
    for (Index j = 0; j < n; ++j)
      lo(k, j) = v[j] - (s.dual.zeta / lambda) * a(k, j) / q[k];
  return lo;
}

/// Relay-law update. Unreachable relay inputs (zero weight under theta^T p)
/// get a uniform row; any value is optimal there and they carry no rate.
inline OmegaUpdate update_omega(const SolverState& s, const Matrix& theta, const Matrix& costs,
                                double lambda) {
  const Index k_dim = theta.cols();
  const Index n = costs.cols();
  const Vector lam_phi = s.dual.kernel.transpose() * s.dual.phi;
  Vector v(n);
  for (Index j = 0; j < n; ++j)
    v[j] = safe_log(s.r[j]) + (std::log(s.dual.psi_tilde[j]) -
                               lam_phi[j] * s.dual.psi_tilde[j]) /
                                  lambda;
  const Vector q = theta.transpose() * s.p;
  const Matrix a = theta.transpose() * (s.p.asDiagonal() * costs);

  OmegaUpdate out;
  out.omega.resize(k_dim, n);
  out.log_omega.resize(k_dim, n);
  const double log_uniform = -std::log(static_cast<double>(n));
  for (Index k = 0; k < k_dim; ++k) {
    if (q[k] < kLogFloor) {
      out.omega.row(k).setConstant(1.0 / static_cast<double>(n));
      out.log_omega.row(k).setConstant(log_uniform);
      continue;
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < n; ++j) {
      const double lw = v[j] - (s.dual.zeta / lambda) * a(k, j) / q[k];
      out.log_omega(k, j) = lw;
      mx = std::max(mx, lw);
    }
    if (!std::isfinite(mx))
      throw std::domain_error("update_omega: row " + std::to_string(k) +
                              " of the pre-normalized update vanished");
    double sum = 0.0;
    for (Index j = 0; j < n; ++j) {
      const double w = std::exp(out.log_omega(k, j) - mx);
      out.omega(k, j) = w;
      sum += w;
    }
    const double log_sum = mx + std::log(sum);
    for (Index j = 0; j < n; ++j) {
      out.omega(k, j) /= sum;
      out.log_omega(k, j) -= log_sum;
    }
  }
  return out;
}

inline Vector update_r(const Vector& p, const Matrix& theta, const Matrix& omega) {
  return omega.transpose() * (theta.transpose() * p);
}

/// Relay rate I(Y;Z) of the current state, in nats.
inline double rate_yz(const Vector& p, const Matrix& theta, const Matrix& omega) {
  const Vector q = theta.transpose() * p;
  return mutual_information(q.asDiagonal() * omega);
}

/// Relaxed objective in its linear-coefficient form: H(p) + p.log(J) + 1.
inline double eval_objective(const SolverState& s, const Matrix& theta, const Matrix& costs,
                             double lambda) {
  const Vector log_j = eval_log_J(s, theta, costs, lambda);
  double acc = 1.0;
  for (Index i = 0; i < s.p.size(); ++i) {
    if (s.p[i] > 0.0) acc += -xlogx(s.p[i]) + s.p[i] * log_j[i];
  }
  return acc;
}

/// Same quantity along the independent route: the transport dual of the LM
/// rate minus lambda times the relay rate. Agrees with eval_objective whenever
/// r matches the composed Z-marginal.
inline double eval_objective_dual_form(const SolverState& s, const Matrix& theta,
                                       const Matrix& costs, double lambda) {
  const Matrix theta_omega = theta * s.omega;
  const Matrix joint = s.p.asDiagonal() * theta_omega;
  const Vector rbar = joint.colwise().sum().transpose();
  const double metric_mean = (joint.array() * costs.array()).sum();
  return eval_g_lm_joint(s.dual, s.p, rbar, metric_mean) -
         lambda * rate_yz(s.p, theta, s.omega);
}

/// Convergence diagnostics: stationarity of phi and psi~, |G(zeta)|, and the
/// power-budget gap. The power residual is zero when no budget is configured
/// or when the budget is slack at mu = 0.
inline Residuals residuals(const SolverState& s, const Matrix& theta, const Matrix& costs,
                           double lambda, const std::optional<double>& power_limit = {},
                           const Vector* sq_norms = nullptr) {
  Residuals res;
  res.phi = residual_phi(s.dual, s.p, s.r);
  res.psi_tilde = residual_psi_tilde(s.dual, s.r);
  const Matrix theta_omega = theta * s.omega;
  const double metric_mean =
      s.p.dot((theta_omega.array() * costs.array()).matrix().rowwise().sum());
  res.zeta = std::abs(
      eval_G(s.dual.zeta, s.dual.phi, s.dual.psi_tilde, s.r, metric_mean, costs));
  if (power_limit) {
    if (sq_norms == nullptr)
      throw std::invalid_argument("residuals: power limit set but no constellation norms");
    const Vector log_j = eval_log_J(s, theta, costs, lambda);
    if (s.mu > 0.0)
      res.mu = std::abs(eval_F(s.mu, log_j, *sq_norms, *power_limit));
    else
      res.mu = std::max(eval_F(0.0, log_j, *sq_norms, *power_limit), 0.0);
  }
  return res;
}

struct SolveHooks {
  std::function<void(const SolverState&, int)> on_sweep_end;
  const Matrix* initial_omega = nullptr;
};

namespace detail {

inline Vector constellation_sq_norms(const Channel& theta) {
  if (!theta.input().points)
    throw std::invalid_argument("solve: power limit set but the input alphabet has no points");
  const auto& pts = *theta.input().points;
  Vector s(static_cast<Index>(pts.size()));
  for (Index i = 0; i < s.size(); ++i) s[i] = pts[static_cast<std::size_t>(i)].squaredNorm();
  return s;
}

inline SolverReport solve_single(const Channel& theta, const DecodingMetric& metric,
                                 const SolverConfig& cfg, std::uint64_t seed,
                                 const SolveHooks& hooks) {
  const Matrix& th = theta.kernel();
  const Matrix& costs = metric.costs();
  const Index m = th.rows();
  const Index k_dim = th.cols();
  const Index n = costs.cols();
  if (costs.rows() != m)
    throw std::invalid_argument("solve: metric has " + std::to_string(costs.rows()) +
                                " rows for an input alphabet of size " + std::to_string(m));
  const bool power = cfg.power_limit.has_value();
  Vector sq_norms;
  if (power) sq_norms = constellation_sq_norms(theta);

  SolverState s;
  s.p = Vector::Constant(m, 1.0 / static_cast<double>(m));
  if (hooks.initial_omega != nullptr) {
    if (hooks.initial_omega->rows() != k_dim || hooks.initial_omega->cols() != n)
      throw std::invalid_argument("solve: initial omega has the wrong shape");
    s.omega = *hooks.initial_omega;
  } else {
    s.omega = random_row_stochastic(k_dim, n, seed);
  }
  s.log_omega.resize(k_dim, n);
  for (Index k = 0; k < k_dim; ++k)
    for (Index j = 0; j < n; ++j)
      s.log_omega(k, j) = s.omega(k, j) > 0.0
                              ? std::log(s.omega(k, j))
                              : -std::numeric_limits<double>::infinity();
  s.r = update_r(s.p, th, s.omega);
  s.dual = DualState::initial(m, n, costs);
  s.mu = power ? 1.0 : 0.0;

  SolverReport report;
  report.lambda = cfg.lambda;
  report.seed = seed;

  Vector log_j = eval_log_J(s, th, costs, cfg.lambda);
  double prev_obj = std::numeric_limits<double>::quiet_NaN();
  for (int it = 1; it <= cfg.max_iter; ++it) {
    if (power) {
      const double f_tol = 1e-12 * (1.0 + *cfg.power_limit);
      PowerUpdate pu = update_p_power(log_j, sq_norms, *cfg.power_limit,
                                      s.mu > 0.0 ? s.mu : 1.0, f_tol);
      s.p = std::move(pu.p);
      s.mu = pu.mu;
    } else if (cfg.optimize_input) {
      s.p = update_p(log_j);
    }
    OmegaUpdate ou = update_omega(s, th, costs, cfg.lambda);
    s.omega = std::move(ou.omega);
    s.log_omega = std::move(ou.log_omega);
    s.r = update_r(s.p, th, s.omega);
    s.dual.phi = update_phi(s.dual, s.p, s.r);
    s.dual.psi_tilde = update_psi_tilde(s.dual, costs);

    const Matrix theta_omega = th * s.omega;
    const double metric_mean =
        s.p.dot((theta_omega.array() * costs.array()).matrix().rowwise().sum());
    const double zeta_tol = 1e-12 * (1.0 + std::abs(metric_mean));
    const double z = solve_zeta(s.dual.phi, s.dual.psi_tilde, s.r, metric_mean, costs,
                                s.dual.zeta, zeta_tol);
    s.dual.set_zeta(z, costs);

    // End-of-sweep objective and diagnostics; this log(J) also feeds the next
    // input-law update since nothing changes in between.
    const Vector lam_phi = s.dual.kernel.transpose() * s.dual.phi;
    Vector u(n);
    for (Index j = 0; j < n; ++j)
      u[j] = -lam_phi[j] * s.dual.psi_tilde[j] + std::log(s.dual.psi_tilde[j]);
    const Vector a_vec = theta_omega * u;
    const Vector b_vec = (theta_omega.array() * costs.array()).matrix().rowwise().sum();
    Vector log_r(n);
    for (Index j = 0; j < n; ++j) log_r[j] = safe_log(s.r[j]);
    const Vector kl = kl_rows(s.omega, s.log_omega, log_r);
    const Vector c_vec = th * kl;
    for (Index i = 0; i < m; ++i) {
      const double lp = s.dual.phi[i] > 0.0 ? std::log(s.dual.phi[i])
                                            : -std::numeric_limits<double>::infinity();
      log_j[i] = lp + a_vec[i] - s.dual.zeta * b_vec[i] - cfg.lambda * c_vec[i];
    }
    double obj = 1.0;
    for (Index i = 0; i < m; ++i)
      if (s.p[i] > 0.0) obj += -xlogx(s.p[i]) + s.p[i] * log_j[i];

    Residuals res;
    res.phi = residual_phi(s.dual, s.p, s.r);
    res.psi_tilde = residual_psi_tilde(s.dual, s.r);
    res.zeta = std::abs(eval_G(z, s.dual.phi, s.dual.psi_tilde, s.r, metric_mean, costs));
    if (power) {
      if (s.mu > 0.0)
        res.mu = std::abs(eval_F(s.mu, log_j, sq_norms, *cfg.power_limit));
      else
        res.mu = std::max(eval_F(0.0, log_j, sq_norms, *cfg.power_limit), 0.0);
    }

    report.objective_trace.push_back(obj);
    report.residual_phi_trace.push_back(res.phi);
    report.residual_psi_trace.push_back(res.psi_tilde);
    report.residual_zeta_trace.push_back(res.zeta);
    report.residual_mu_trace.push_back(res.mu);
    report.mu_trace.push_back(s.mu);
    report.mean_power_trace.push_back(power ? s.p.dot(sq_norms) : 0.0);
    report.objective = obj;
    report.iterations = it;
    if (hooks.on_sweep_end) hooks.on_sweep_end(s, it);

    const bool settled = !std::isnan(prev_obj) &&
                         std::max(res.max_value(), std::abs(obj - prev_obj)) <
                             cfg.residual_tol;
    prev_obj = obj;
    if (settled) {
      report.converged = true;
      break;
    }
  }

  report.rate_yz = rate_yz(s.p, th, s.omega);
  report.capacity_lm = report.objective + cfg.lambda * report.rate_yz;
  if (!report.converged) report.flags.push_back("non-converged");
  report.final_state = std::move(s);
  return report;
}

}  // namespace detail

/// Alternating maximization at a fixed multiplier. With a power limit the
/// input-law step solves the budget multiplier first; otherwise it is the
/// plain normalized update, or skipped entirely when the input law is pinned.
/// Non-convergence within max_iter is flagged on the report, not an error.
inline SolverReport solve(const Channel& theta, const DecodingMetric& metric,
                          const SolverConfig& cfg, const SolveHooks& hooks = {}) {
  cfg.validate();
  SolverReport best;
  for (int t = 0; t < cfg.restarts; ++t) {
    SolverReport rep = detail::solve_single(theta, metric, cfg,
                                            cfg.seed + static_cast<std::uint64_t>(t), hooks);
    if (t == 0 || rep.objective > best.objective) best = std::move(rep);
  }
  return best;
}

/// Binary search for the multiplier that pins the relay rate to the
/// compression target. The bracket auto-expands tenfold up to four times on
/// each side; order violations of the probed rates are flagged, not retried.
inline SolverReport solve_for_budget(const Channel& theta, const DecodingMetric& metric,
                                     const SolverConfig& cfg, const SolveHooks& hooks = {}) {
  cfg.validate();
  if (!cfg.compression_target)
    throw std::invalid_argument("solve_for_budget: no compression target configured");
  const double target = *cfg.compression_target;
  const double tol = cfg.budget_tol;

  auto probe = [&](double lam) {
    SolverConfig c = cfg;
    c.lambda = lam;
    c.compression_target.reset();
    return solve(theta, metric, c, hooks);
  };

  double lo = cfg.lambda_bracket.first;
  double hi = cfg.lambda_bracket.second;
  SolverReport rep_lo = probe(lo);
  for (int e = 0; e < 4 && rep_lo.rate_yz < target - tol; ++e) {
    lo /= 10.0;
    rep_lo = probe(lo);
  }
  if (rep_lo.rate_yz < target - tol) {
    rep_lo.flags.push_back("budget-inactive");
    return rep_lo;
  }
  SolverReport rep_hi = probe(hi);
  for (int e = 0; e < 4 && rep_hi.rate_yz > target + tol; ++e) {
    hi *= 10.0;
    rep_hi = probe(hi);
  }
  if (rep_hi.rate_yz > target + tol) {
    rep_hi.flags.push_back("bracket-failure");
    return rep_hi;
  }
  if (std::abs(rep_hi.rate_yz - target) <= tol) return rep_hi;
  if (std::abs(rep_lo.rate_yz - target) <= tol) return rep_lo;

  const double mono_slack = std::max(1e-9, 10.0 * cfg.residual_tol);
  double i_lo = rep_lo.rate_yz;
  double i_hi = rep_hi.rate_yz;
  if (i_lo < i_hi - mono_slack) {
    rep_lo.flags.push_back("monotonicity-violation");
    return rep_lo;
  }
  SolverReport best = std::abs(i_lo - target) < std::abs(i_hi - target) ? std::move(rep_lo)
                                                                        : std::move(rep_hi);
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(lo * hi);
    SolverReport rep = probe(mid);
    const double rate = rep.rate_yz;
    if (std::abs(rate - target) <= tol) return rep;
    if (std::abs(rate - target) < std::abs(best.rate_yz - target)) best = std::move(rep);
    if (rate > i_lo + mono_slack || rate < i_hi - mono_slack) {
      best.flags.push_back("monotonicity-violation");
      return best;
    }
    if (rate > target) {
      lo = mid;
      i_lo = rate;
    } else {
      hi = mid;
      i_hi = rate;
    }
    if (hi - lo <= 1e-15 * hi) break;
  }
  best.flags.push_back("bracket-failure");
  return best;
}

}  // namespace mcor
