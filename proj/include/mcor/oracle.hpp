#pragma once

#include <functional>

#include "mcor/am_solver.hpp"

namespace mcor::oracle {

/// Parametrization of the transportation polytope with fixed marginals: the
/// product coupling plus integer moves on 2x2 corners anchored at the last row
/// and column. The move count is (M-1)(N-1), the polytope dimension for
/// full-support marginals.
struct CouplingGrid {
  Matrix base;
  std::vector<Matrix> basis;
  double step = 0.0;

  static CouplingGrid build(const Vector& p, const Vector& r, double step) {
    const Index m = p.size();
    const Index n = r.size();
    CouplingGrid g;
    g.step = step;
    g.base = p * r.transpose();
    for (Index a = 0; a + 1 < m; ++a) {
      for (Index b = 0; b + 1 < n; ++b) {
        Matrix mv = Matrix::Zero(m, n);
        mv(a, b) = 1.0;
        mv(a, n - 1) = -1.0;
        mv(m - 1, b) = -1.0;
        mv(m - 1, n - 1) = 1.0;
        g.basis.push_back(std::move(mv));
      }
    }
    return g;
  }

  Index free_dims() const { return static_cast<Index>(basis.size()); }
};

namespace detail_oracle {

struct Instance {
  Vector p, r;
  Matrix costs;
  double metric_cap = 0.0;
  double h_marginals = 0.0;
};

// Builds the coupling for interior coefficients c (row-major over the
// (M-1)x(N-1) block) and returns its mutual information, or +inf when the
// point leaves the polytope or breaks the metric budget. Entries in
// [-1e-15, 0) count as zero.
inline double coupling_value(const Instance& in, const Matrix& base, const Vector& c) {
  const Index m = in.p.size();
  const Index n = in.r.size();
  Matrix t(m, n);
  for (Index a = 0; a + 1 < m; ++a) {
    double row_rest = in.p[a];
    for (Index b = 0; b + 1 < n; ++b) {
      const double v = base(a, b) + c[a * (n - 1) + b];
      t(a, b) = v;
      row_rest -= v;
    }
    t(a, n - 1) = row_rest;
  }
  for (Index b = 0; b < n; ++b) {
    double col_rest = in.r[b];
    for (Index a = 0; a + 1 < m; ++a) col_rest -= t(a, b);
    t(m - 1, b) = col_rest;
  }
  double cost = 0.0;
  double neg_entropy = 0.0;
  for (Index a = 0; a < m; ++a) {
    for (Index b = 0; b < n; ++b) {
      double v = t(a, b);
      if (v < 0.0) {
        if (v < -1e-15) return std::numeric_limits<double>::infinity();
        v = 0.0;
      }
      cost += v * in.costs(a, b);
      neg_entropy += xlogx(v);
    }
  }
  if (cost > in.metric_cap + 1e-12) return std::numeric_limits<double>::infinity();
  return in.h_marginals + neg_entropy;
}

// Exhaustive scan of an axis-aligned box of coefficients at a fixed
// resolution. lo/hi are clamped to the per-coordinate entry bounds.
inline void scan_box(const Instance& in, const Matrix& base, const Vector& lo,
                     const Vector& hi, double step, double& best, Vector& best_c) {
  const Index dims = lo.size();
  std::vector<Index> counts(static_cast<std::size_t>(dims));
  for (Index t = 0; t < dims; ++t) {
    const double span = hi[t] - lo[t];
    counts[static_cast<std::size_t>(t)] =
        span <= 0.0 ? 1 : static_cast<Index>(std::floor(span / step + 1e-9)) + 2;
  }
  std::vector<Index> k(static_cast<std::size_t>(dims), 0);
  Vector c(dims);
  while (true) {
    for (Index t = 0; t < dims; ++t)
      c[t] = std::min(lo[t] + static_cast<double>(k[static_cast<std::size_t>(t)]) * step,
                      hi[t]);
    const double v = coupling_value(in, base, c);
    if (v < best) {
      best = v;
      best_c = c;
    }
    Index t = 0;
    while (t < dims) {
      if (++k[static_cast<std::size_t>(t)] < counts[static_cast<std::size_t>(t)]) break;
      k[static_cast<std::size_t>(t)] = 0;
      ++t;
    }
    if (t == dims) break;
  }
}

}  // namespace detail_oracle

/// Brute-force LM rate by enumerating couplings with the joint's marginals on
/// a uniform coefficient grid, then refining around the best point down to
/// step/100. Intended for tiny instances (M*N <= 9) only; the result
/// upper-bounds the true minimum by construction.
inline double lm_rate_bruteforce(const Matrix& joint, const DecodingMetric& metric,
                                 double step) {
  const Index m = joint.rows();
  const Index n = joint.cols();
  if (m * n > 9)
    throw std::invalid_argument("lm_rate_bruteforce: instance larger than 9 cells");
  if (metric.rows() != m || metric.cols() != n)
    throw std::invalid_argument("lm_rate_bruteforce: metric shape mismatch");
  if (std::abs(joint.sum() - 1.0) > 1e-10)
    throw std::invalid_argument("lm_rate_bruteforce: joint mass is " +
                                mcor::detail::num_str(joint.sum()));

  detail_oracle::Instance in;
  in.p = joint.rowwise().sum();
  in.r = joint.colwise().sum().transpose();
  for (Index a = 0; a < m; ++a)
    if (!(in.p[a] > 0.0))
      throw std::invalid_argument("lm_rate_bruteforce: zero-mass row " + std::to_string(a));
  for (Index b = 0; b < n; ++b)
    if (!(in.r[b] > 0.0))
      throw std::invalid_argument("lm_rate_bruteforce: zero-mass column " +
                                  std::to_string(b));
  in.costs = metric.costs();
  in.metric_cap = (joint.array() * in.costs.array()).sum();
  in.h_marginals = mcor::detail::entropy_vec(in.p) + mcor::detail::entropy_vec(in.r);

  const CouplingGrid grid = CouplingGrid::build(in.p, in.r, step);
  const Index dims = grid.free_dims();

  // Per-coordinate bounds from nonnegativity of the interior entry alone.
  Vector lo(dims), hi(dims);
  for (Index a = 0; a + 1 < m; ++a) {
    for (Index b = 0; b + 1 < n; ++b) {
      const Index t = a * (n - 1) + b;
      lo[t] = -grid.base(a, b);
      hi[t] = std::min(in.p[a], in.r[b]) - grid.base(a, b);
    }
  }

  double best = std::numeric_limits<double>::infinity();
  Vector best_c = Vector::Zero(dims);

  // The joint itself is always a feasible candidate.
  Vector c_joint(dims);
  for (Index a = 0; a + 1 < m; ++a)
    for (Index b = 0; b + 1 < n; ++b)
      c_joint[a * (n - 1) + b] = joint(a, b) - grid.base(a, b);
  const double v_joint = detail_oracle::coupling_value(in, grid.base, c_joint);
  if (v_joint < best) {
    best = v_joint;
    best_c = c_joint;
  }

  detail_oracle::scan_box(in, grid.base, lo, hi, step, best, best_c);

  // Local refinement to step/100 around the best coarse point; low dimensions
  // get one direct pass, higher ones reach the same resolution in two stages.
  auto refine = [&](double radius, double res) {
    Vector rlo(dims), rhi(dims);
    for (Index t = 0; t < dims; ++t) {
      rlo[t] = std::max(lo[t], best_c[t] - radius);
      rhi[t] = std::min(hi[t], best_c[t] + radius);
    }
    detail_oracle::scan_box(in, grid.base, rlo, rhi, res, best, best_c);
  };
  if (dims <= 2) {
    refine(step, step / 100.0);
  } else {
    refine(step, step / 10.0);
    refine(step / 10.0, step / 100.0);
  }

  if (!std::isfinite(best))
    throw std::runtime_error("lm_rate_bruteforce: no feasible coupling on the grid");
  return std::max(best, 0.0);
}

/// Relative disagreement between the analytic derivative and a central
/// difference of f at x.
inline double finite_diff_check(const std::function<double(double)>& f,
                                double analytic_derivative, double x, double h) {
  const double fd = (f(x + h) - f(x - h)) / (2.0 * h);
  return std::abs(fd - analytic_derivative) / (1.0 + std::abs(analytic_derivative));
}

struct ScalarReference {
  Vector j;
  double objective = 0.0;
  Matrix omega_star;
};

/// Naive scalar-loop evaluation of the linear coefficients J, the relaxed
/// objective and the pre-normalized relay update, for cross-checking the
/// vectorized implementations on tiny instances. Deliberately shares no code
/// with the production path.
inline ScalarReference scalar_reference_eval(const SolverState& s, const Matrix& theta,
                                             const Matrix& costs, double lambda) {
  const Index m = theta.rows();
  const Index k_dim = theta.cols();
  const Index n = costs.cols();
  ScalarReference out;
  out.j.resize(m);
  out.omega_star.resize(k_dim, n);

  for (Index i = 0; i < m; ++i) {
    double expo = 0.0;
    for (Index k = 0; k < k_dim; ++k) {
      for (Index j = 0; j < n; ++j) {
        double lam_phi_j = 0.0;
        for (Index i2 = 0; i2 < m; ++i2)
          lam_phi_j += std::exp(-s.dual.zeta * costs(i2, j)) * s.dual.phi[i2];
        const double u_j = -lam_phi_j * s.dual.psi_tilde[j] + std::log(s.dual.psi_tilde[j]);
        expo += theta(i, k) * s.omega(k, j) * u_j;
        expo -= s.dual.zeta * theta(i, k) * s.omega(k, j) * costs(i, j);
        if (s.omega(k, j) > 0.0)
          expo -= lambda * theta(i, k) * s.omega(k, j) *
                  (std::log(s.omega(k, j)) - std::log(std::max(s.r[j], kLogFloor)));
      }
    }
    out.j[i] = s.dual.phi[i] * std::exp(expo);
  }

  out.objective = 1.0;
  for (Index i = 0; i < m; ++i) {
    if (s.p[i] > 0.0)
      out.objective += -s.p[i] * std::log(s.p[i]) + s.p[i] * std::log(out.j[i]);
  }

  for (Index k = 0; k < k_dim; ++k) {
    double qk = 0.0;
    for (Index i = 0; i < m; ++i) qk += theta(i, k) * s.p[i];
    for (Index j = 0; j < n; ++j) {
      double lam_phi_j = 0.0;
      for (Index i2 = 0; i2 < m; ++i2)
        lam_phi_j += std::exp(-s.dual.zeta * costs(i2, j)) * s.dual.phi[i2];
      double weighted_cost = 0.0;
      for (Index i = 0; i < m; ++i) weighted_cost += theta(i, k) * s.p[i] * costs(i, j);
      out.omega_star(k, j) =
          s.r[j] * std::pow(s.dual.psi_tilde[j], 1.0 / lambda) *
          std::exp(-lam_phi_j * s.dual.psi_tilde[j] / lambda) *
          std::exp(-(s.dual.zeta / lambda) * weighted_cost / qk);
    }
  }
  return out;
}

}  // namespace mcor::oracle
