#pragma once

#include <limits>
#include <vector>

#include "mcor/detail/rootfind.hpp"
#include "mcor/prob.hpp"

namespace mcor {

/// Dual variables of the transport-form LM rate. psi_tilde is the rescaled
/// potential psi ./ r, which makes every outer update closed-form. The Gibbs
/// kernel exp(-zeta * D) is cached and kept coherent through set_zeta.
struct DualState {
  Vector phi;
  Vector psi_tilde;
  double zeta = 1.0;
  Matrix kernel;

  static DualState initial(Index m, Index n, const Matrix& costs) {
    DualState s;
    s.phi = Vector::Ones(m);
    s.psi_tilde = Vector::Ones(n);
    s.zeta = 1.0;
    s.kernel = (-costs.array()).exp();
    (void)n;
    return s;
  }

  void set_zeta(double z, const Matrix& costs) {
    zeta = z;
    kernel = (-z * costs.array()).exp();
  }
};

/// phi_i = p_i / sum_j Lambda_ij psi~_j r_j. Stationary in phi immediately
/// after the update. Requires r consistent with the current coupling.
inline Vector update_phi(const DualState& dual, const Vector& p, const Vector& r) {
  const Vector denom = dual.kernel * dual.psi_tilde.cwiseProduct(r);
  Vector phi(p.size());
  for (Index i = 0; i < p.size(); ++i) {
    if (!(denom[i] > 0.0))
      throw std::domain_error("update_phi: zero denominator in row " + std::to_string(i) +
                              " (all kernel mass sits on forbidden metric entries)");
    phi[i] = p[i] / denom[i];
  }
  return phi;
}

/// psi~_j = 1 / sum_i phi_i exp(-zeta D_ij), evaluated as a log-sum-exp so a
/// column whose kernel underflows does not silently produce infinities.
inline Vector update_psi_tilde(const DualState& dual, const Matrix& costs) {
  const Index m = costs.rows();
  const Index n = costs.cols();
  Vector log_phi(m);
  for (Index i = 0; i < m; ++i)
    log_phi[i] = dual.phi[i] > 0.0 ? std::log(dual.phi[i])
                                   : -std::numeric_limits<double>::infinity();
  Vector psi(n);
  for (Index j = 0; j < n; ++j) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < m; ++i) mx = std::max(mx, log_phi[i] - dual.zeta * costs(i, j));
    if (!std::isfinite(mx))
      throw std::domain_error("update_psi_tilde: zero denominator in column " +
                              std::to_string(j));
    double s = 0.0;
    for (Index i = 0; i < m; ++i) s += std::exp(log_phi[i] - dual.zeta * costs(i, j) - mx);
    const double log_denom = mx + std::log(s);
    if (log_denom < -709.0)
      throw std::domain_error("update_psi_tilde: denominator underflows in column " +
                              std::to_string(j));
    psi[j] = std::exp(-log_denom);
  }
  return psi;
}

/// L1 stationarity residual of the phi update.
inline double residual_phi(const DualState& dual, const Vector& p, const Vector& r) {
  return (dual.phi.cwiseProduct(dual.kernel * dual.psi_tilde.cwiseProduct(r)) - p)
      .lpNorm<1>();
}

/// L1 stationarity residual of the psi~ update, weighted by the Z-marginal.
inline double residual_psi_tilde(const DualState& dual, const Vector& r) {
  const Vector t =
      dual.psi_tilde.cwiseProduct(dual.kernel.transpose() * dual.phi) - Vector::Ones(r.size());
  return t.cwiseProduct(r).lpNorm<1>();
}

/// Derivative of the block objective in zeta. Non-increasing in zeta whenever
/// the costs are nonnegative; its root enforces the metric-mean constraint.
inline double eval_G(double zeta, const Vector& phi, const Vector& psi_tilde, const Vector& r,
                     double metric_mean, const Matrix& costs) {
  const Vector w = psi_tilde.cwiseProduct(r);
  const Matrix dk = costs.array() * (-zeta * costs.array()).exp();
  return phi.dot(dk * w) - metric_mean;
}

inline double eval_G_derivative(double zeta, const Vector& phi, const Vector& psi_tilde,
                                const Vector& r, const Matrix& costs) {
  const Vector w = psi_tilde.cwiseProduct(r);
  const Matrix dk = costs.array().square() * (-zeta * costs.array()).exp();
  return -phi.dot(dk * w);
}

/// Solves G(zeta) = 0 over zeta >= 0. G(0) <= 0 means the metric constraint is
/// already slack, so zero is returned without a root search. Newton steps are
/// safeguarded by a bisection bracket; the bracket expands up to 1e6.
inline double solve_zeta(const Vector& phi, const Vector& psi_tilde, const Vector& r,
                         double metric_mean, const Matrix& costs, double warm_start,
                         double tol) {
  const double g0 = eval_G(0.0, phi, psi_tilde, r, metric_mean, costs);
  if (g0 <= 0.0 || g0 <= tol) return 0.0;
  auto f = [&](double z) { return eval_G(z, phi, psi_tilde, r, metric_mean, costs); };
  auto df = [&](double z) { return eval_G_derivative(z, phi, psi_tilde, r, costs); };
  return detail::solve_decreasing_root(
      f, df, warm_start, tol, 1e6,
      "solve_zeta: G stays positive up to zeta = 1e6 (metric constraint unachievable)");
}

/// Transport-dual objective for a fixed pair of marginals and metric mean.
/// psi is recovered from the transformed potential as psi~ .* r.
inline double eval_g_lm_joint(const DualState& dual, const Vector& p, const Vector& r,
                              double metric_mean) {
  for (Index j = 0; j < dual.psi_tilde.size(); ++j)
    if (!(dual.psi_tilde[j] > 0.0))
      throw std::domain_error("eval_g_lm: non-positive potential psi~[" + std::to_string(j) +
                              "]");
  for (Index i = 0; i < dual.phi.size(); ++i)
    if (p[i] > 0.0 && !(dual.phi[i] > 0.0))
      throw std::domain_error("eval_g_lm: non-positive potential phi[" + std::to_string(i) +
                              "]");
  const Vector psi = dual.psi_tilde.cwiseProduct(r);
  const double bilinear = dual.phi.dot(dual.kernel * psi);
  double e_log_phi = 0.0;
  for (Index i = 0; i < p.size(); ++i) e_log_phi += xlogy(p[i], dual.phi[i]);
  double e_log_psi = 0.0;
  for (Index j = 0; j < r.size(); ++j) e_log_psi += xlogy(r[j], psi[j]);
  return -bilinear + detail::entropy_vec(p) + detail::entropy_vec(r) -
         dual.zeta * metric_mean + e_log_phi + e_log_psi + 1.0;
}

/// Same objective with the joint composed from an input law and two channels.
inline double eval_g_lm(const DualState& dual, const Distribution& p, const Channel& theta,
                        const Channel& omega, const DecodingMetric& d) {
  const Matrix joint = compose_joint(p, theta, omega);
  if (joint.cols() != d.cols() || joint.rows() != d.rows())
    throw std::invalid_argument("eval_g_lm: metric shape does not match the joint");
  const Vector r = joint.colwise().sum().transpose();
  const double metric_mean = (joint.array() * d.costs().array()).sum();
  return eval_g_lm_joint(dual, p.mass(), r, metric_mean);
}

struct LmRateResult {
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> value_trace;
};

/// LM rate of a fixed joint distribution under an additive decoding metric,
/// computed by alternating the phi, psi~ and zeta updates at fixed marginals.
/// Zero-mass rows and columns are stripped before iterating and contribute
/// nothing to the result.
inline LmRateResult lm_rate_fixed_joint(const Matrix& joint, const DecodingMetric& d,
                                        double tol = 1e-10, int max_iter = 10000) {
  if (joint.rows() != d.rows() || joint.cols() != d.cols())
    throw std::invalid_argument("lm_rate_fixed_joint: joint is " +
                                std::to_string(joint.rows()) + "x" +
                                std::to_string(joint.cols()) + ", metric is " +
                                std::to_string(d.rows()) + "x" + std::to_string(d.cols()));
  for (Index i = 0; i < joint.rows(); ++i)
    for (Index j = 0; j < joint.cols(); ++j)
      if (!(joint(i, j) >= 0.0))
        throw std::invalid_argument("lm_rate_fixed_joint: negative joint entry (" +
                                    std::to_string(i) + "," + std::to_string(j) + ")");
  if (std::abs(joint.sum() - 1.0) > 1e-10)
    throw std::invalid_argument("lm_rate_fixed_joint: joint mass is " +
                                detail::num_str(joint.sum()));

  const Vector row_mass = joint.rowwise().sum();
  const Vector col_mass = joint.colwise().sum().transpose();
  std::vector<Index> rows, cols;
  for (Index i = 0; i < row_mass.size(); ++i)
    if (row_mass[i] > 0.0) rows.push_back(i);
  for (Index j = 0; j < col_mass.size(); ++j)
    if (col_mass[j] > 0.0) cols.push_back(j);

  const Index m = static_cast<Index>(rows.size());
  const Index n = static_cast<Index>(cols.size());
  Matrix sub(m, n), costs(m, n);
  Vector p(m), r(n);
  for (Index a = 0; a < m; ++a) {
    p[a] = row_mass[rows[static_cast<std::size_t>(a)]];
    for (Index b = 0; b < n; ++b) {
      sub(a, b) = joint(rows[static_cast<std::size_t>(a)], cols[static_cast<std::size_t>(b)]);
      costs(a, b) =
          d.costs()(rows[static_cast<std::size_t>(a)], cols[static_cast<std::size_t>(b)]);
    }
  }
  for (Index b = 0; b < n; ++b) r[b] = col_mass[cols[static_cast<std::size_t>(b)]];
  const double metric_mean = (sub.array() * costs.array()).sum();

  DualState dual = DualState::initial(m, n, costs);
  LmRateResult res;
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (int it = 1; it <= max_iter; ++it) {
    dual.phi = update_phi(dual, p, r);
    dual.psi_tilde = update_psi_tilde(dual, costs);
    const double zeta_tol = 1e-12 * (1.0 + std::abs(metric_mean));
    const double z = solve_zeta(dual.phi, dual.psi_tilde, r, metric_mean, costs, dual.zeta,
                                zeta_tol);
    dual.set_zeta(z, costs);
    const double value = eval_g_lm_joint(dual, p, r, metric_mean);
    res.value_trace.push_back(value);
    res.value = value;
    res.iterations = it;
    const double r_phi = residual_phi(dual, p, r);
    const double r_psi = residual_psi_tilde(dual, r);
    const double r_zeta = std::abs(eval_G(z, dual.phi, dual.psi_tilde, r, metric_mean, costs));
    const double dv = std::isnan(prev) ? std::numeric_limits<double>::infinity()
                                       : std::abs(value - prev);
    prev = value;
    if (std::max(std::max(r_phi, r_psi), std::max(r_zeta, dv)) < tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace mcor
