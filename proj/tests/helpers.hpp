#pragma once

#include <random>

#include "mcor/am_solver.hpp"
#include "mcor/prob.hpp"

namespace test_helpers {

inline mcor::Vector random_simplex(std::mt19937_64& rng, mcor::Index n) {
  std::exponential_distribution<double> draw(1.0);
  mcor::Vector v(n);
  double s = 0.0;
  for (mcor::Index i = 0; i < n; ++i) {
    v[i] = draw(rng) + 1e-6;
    s += v[i];
  }
  return v / s;
}

inline mcor::Matrix random_row_stochastic(std::mt19937_64& rng, mcor::Index m,
                                          mcor::Index n) {
  mcor::Matrix k(m, n);
  for (mcor::Index i = 0; i < m; ++i) k.row(i) = random_simplex(rng, n).transpose();
  return k;
}

inline mcor::Matrix random_metric(std::mt19937_64& rng, mcor::Index m, mcor::Index n,
                                  double scale = 3.0) {
  std::uniform_real_distribution<double> draw(0.0, scale);
  mcor::Matrix d(m, n);
  for (mcor::Index i = 0; i < m; ++i)
    for (mcor::Index j = 0; j < n; ++j) d(i, j) = draw(rng);
  return d;
}

inline mcor::Matrix random_joint(std::mt19937_64& rng, mcor::Index m, mcor::Index n) {
  std::uniform_real_distribution<double> draw(0.05, 1.0);
  mcor::Matrix j(m, n);
  double s = 0.0;
  for (mcor::Index a = 0; a < m; ++a)
    for (mcor::Index b = 0; b < n; ++b) {
      j(a, b) = draw(rng);
      s += j(a, b);
    }
  return j / s;
}

inline mcor::Matrix bsc_kernel(double flip) {
  mcor::Matrix k(2, 2);
  k << 1.0 - flip, flip, flip, 1.0 - flip;
  return k;
}

/// A fresh solver state with consistent output law, the standard initial
/// duals, and a seeded random relay law. Mirrors the solver's own start.
inline mcor::SolverState make_state(std::mt19937_64& rng, const mcor::Matrix& theta,
                                    const mcor::Matrix& costs) {
  mcor::SolverState s;
  const mcor::Index m = theta.rows();
  const mcor::Index k = theta.cols();
  const mcor::Index n = costs.cols();
  s.p = random_simplex(rng, m);
  s.omega = random_row_stochastic(rng, k, n);
  s.log_omega = s.omega.array().log();
  s.r = mcor::update_r(s.p, theta, s.omega);
  s.dual = mcor::DualState::initial(m, n, costs);
  s.mu = 0.0;
  return s;
}

}  // namespace test_helpers
