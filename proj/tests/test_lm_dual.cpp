#include <catch2/catch.hpp>

#include <random>

#include "helpers.hpp"
#include "mcor/lm_dual.hpp"
#include "mcor/oracle.hpp"

using namespace mcor;
using test_helpers::random_joint;
using test_helpers::random_metric;
using test_helpers::random_simplex;

namespace {

// One alternating sweep at fixed marginals, mirroring the production order.
void lm_sweep(DualState& dual, const Vector& p, const Vector& r, double metric_mean,
              const Matrix& costs) {
  dual.phi = update_phi(dual, p, r);
  dual.psi_tilde = update_psi_tilde(dual, costs);
  const double z = solve_zeta(dual.phi, dual.psi_tilde, r, metric_mean, costs, dual.zeta,
                              1e-12 * (1.0 + std::abs(metric_mean)));
  dual.set_zeta(z, costs);
}

// Bisection-only root of G, independent of the production Newton path.
double bisect_zeta(const Vector& phi, const Vector& psi, const Vector& r, double metric_mean,
                   const Matrix& costs) {
  double lo = 0.0, hi = 1.0;
  while (eval_G(hi, phi, psi, r, metric_mean, costs) > 0.0) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (eval_G(mid, phi, psi, r, metric_mean, costs) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("phi update closed forms") {
  Vector p = Vector::Constant(2, 0.5);
  Vector r = Vector::Constant(3, 1.0 / 3.0);
  Matrix costs = Matrix::Zero(2, 3);

  SECTION("flat kernel at zeta = 0") {
    DualState dual = DualState::initial(2, 3, costs);
    dual.set_zeta(0.0, costs);
    Vector phi = update_phi(dual, p, r);
    CHECK(phi[0] == Approx(0.5).epsilon(1e-14));
    CHECK(phi[1] == Approx(0.5).epsilon(1e-14));
  }

  SECTION("zero costs at any zeta") {
    DualState dual = DualState::initial(2, 3, costs);
    dual.set_zeta(1.7, costs);
    Vector phi = update_phi(dual, p, r);
    CHECK(phi[0] == Approx(0.5).epsilon(1e-14));
  }

  SECTION("symmetric 2x2 instance") {
    Matrix d(2, 2);
    d << 0, 1, 1, 0;
    Vector p2 = Vector::Constant(2, 0.5);
    Vector r2 = Vector::Constant(2, 0.5);
    DualState dual = DualState::initial(2, 2, d);
    dual.set_zeta(1.0, d);
    Vector phi = update_phi(dual, p2, r2);
    const double expected = 1.0 / (1.0 + std::exp(-1.0));
    CHECK(phi[0] == Approx(expected).epsilon(1e-14));
    CHECK(phi[1] == Approx(expected).epsilon(1e-14));

    dual.phi = phi;
    Vector psi = update_psi_tilde(dual, d);
    CHECK(psi[0] == Approx(1.0).epsilon(1e-13));
    CHECK(psi[1] == Approx(1.0).epsilon(1e-13));
  }
}

TEST_CASE("psi update closed forms") {
  SECTION("phi equal to the input law at zeta = 0") {
    std::mt19937_64 rng(3);
    Matrix costs = random_metric(rng, 3, 4);
    DualState dual = DualState::initial(3, 4, costs);
    dual.set_zeta(0.0, costs);
    dual.phi = random_simplex(rng, 3);
    Vector psi = update_psi_tilde(dual, costs);
    for (Index j = 0; j < 4; ++j) CHECK(psi[j] == Approx(1.0).epsilon(1e-13));
  }

  SECTION("single-row inversion") {
    Matrix costs(1, 3);
    costs << 0.3, 1.1, 2.0;
    DualState dual = DualState::initial(1, 3, costs);
    dual.set_zeta(0.8, costs);
    dual.phi[0] = 2.5;
    Vector psi = update_psi_tilde(dual, costs);
    for (Index j = 0; j < 3; ++j)
      CHECK(psi[j] == Approx(std::exp(0.8 * costs(0, j)) / 2.5).epsilon(1e-13));
  }
}

TEST_CASE("post-update stationarity residuals vanish") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const Index m = 2 + static_cast<Index>(rng() % 3);
    const Index n = 2 + static_cast<Index>(rng() % 3);
    Matrix joint = random_joint(rng, m, n);
    Vector p = joint.rowwise().sum();
    Vector r = joint.colwise().sum().transpose();
    Matrix costs = random_metric(rng, m, n);
    DualState dual = DualState::initial(m, n, costs);
    dual.set_zeta(0.4, costs);
    dual.psi_tilde = random_simplex(rng, n) * 3.0;

    dual.phi = update_phi(dual, p, r);
    REQUIRE(residual_phi(dual, p, r) <= 1e-12);
    dual.psi_tilde = update_psi_tilde(dual, costs);
    REQUIRE(residual_psi_tilde(dual, r) <= 1e-12);
  }
}

TEST_CASE("G formula and derivative") {
  std::mt19937_64 rng(23);
  const Index m = 3, n = 3;
  Matrix joint = random_joint(rng, m, n);
  Vector r = joint.colwise().sum().transpose();
  Matrix costs = random_metric(rng, m, n);
  const double metric_mean = (joint.array() * costs.array()).sum();
  Vector phi = random_simplex(rng, m) * 2.0;
  Vector psi = random_simplex(rng, n) * 2.0;

  SECTION("zero costs make G identically zero") {
    Matrix zero = Matrix::Zero(m, n);
    for (double z : {0.0, 0.5, 3.0})
      CHECK(eval_G(z, phi, psi, r, 0.0, zero) == Approx(0.0).margin(1e-15));
  }

  SECTION("at zeta = 0 the first term decouples into a product expectation") {
    double first = 0.0;
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < n; ++j) first += phi[i] * costs(i, j) * psi[j] * r[j];
    CHECK(eval_G(0.0, phi, psi, r, metric_mean, costs) ==
          Approx(first - metric_mean).epsilon(1e-13));
  }

  SECTION("finite differences confirm the derivative") {
    for (double z : {0.1, 0.5, 1.5}) {
      auto f = [&](double zz) { return eval_G(zz, phi, psi, r, metric_mean, costs); };
      const double analytic = eval_G_derivative(z, phi, psi, r, costs);
      CHECK(oracle::finite_diff_check(f, analytic, z, 1e-5) < 1e-6);
    }
  }

  SECTION("G is non-increasing in zeta") {
    std::mt19937_64 rng2(31);
    for (int trial = 0; trial < 200; ++trial) {
      const Index mm = 2 + static_cast<Index>(rng2() % 3);
      const Index nn = 2 + static_cast<Index>(rng2() % 3);
      Matrix jj = random_joint(rng2, mm, nn);
      Vector rr = jj.colwise().sum().transpose();
      Matrix dd = random_metric(rng2, mm, nn);
      const double mean = (jj.array() * dd.array()).sum();
      Vector ph = random_simplex(rng2, mm) * 2.0;
      Vector ps = random_simplex(rng2, nn) * 2.0;
      std::uniform_real_distribution<double> zdraw(0.0, 4.0);
      double z1 = zdraw(rng2), z2 = zdraw(rng2);
      if (z1 > z2) std::swap(z1, z2);
      REQUIRE(eval_G(z2, ph, ps, rr, mean, dd) <=
              eval_G(z1, ph, ps, rr, mean, dd) + 1e-12);
    }
  }
}

TEST_CASE("zeta solve") {
  std::mt19937_64 rng(41);
  const Index m = 2, n = 2;
  Matrix costs(2, 2);
  costs << 0, 1, 1, 0;

  SECTION("slack constraint returns zero") {
    // A product joint meets its own metric mean, so G(0) <= 0 exactly.
    Vector p = Vector::Constant(2, 0.5);
    Vector r = Vector::Constant(2, 0.5);
    Matrix joint = p * r.transpose();
    const double mean = (joint.array() * costs.array()).sum();
    DualState dual = DualState::initial(m, n, costs);
    dual.set_zeta(0.0, costs);
    dual.phi = update_phi(dual, p, r);
    dual.psi_tilde = update_psi_tilde(dual, costs);
    CHECK(solve_zeta(dual.phi, dual.psi_tilde, r, mean, costs, 1.0, 1e-13) == 0.0);
  }

  SECTION("zero costs return zero") {
    Matrix zero = Matrix::Zero(2, 2);
    Vector ones = Vector::Ones(2);
    Vector r = Vector::Constant(2, 0.5);
    CHECK(solve_zeta(ones, ones, r, 0.0, zero, 1.0, 1e-13) == 0.0);
  }

  SECTION("an unachievable constraint is an error, not a silent cap") {
    // Zero metric mean with tiny positive costs: G stays above tolerance all
    // the way to the bracket cap.
    Matrix tiny(2, 2);
    tiny << 0, 1e-7, 1e-7, 0;
    Vector p = Vector::Constant(2, 0.5);
    Vector r = Vector::Constant(2, 0.5);
    Vector ones = Vector::Ones(2);
    CHECK_THROWS_AS(solve_zeta(ones, ones, r, 0.0, tiny, 1.0, 1e-13), std::runtime_error);
  }

  SECTION("a fully forbidden column is a diagnosed error") {
    Matrix costs(2, 2);
    costs << 0, kMetricInf, 1, kMetricInf;
    DualState dual = DualState::initial(2, 2, costs);
    try {
      update_psi_tilde(dual, costs);
      FAIL("expected a domain error");
    } catch (const std::domain_error& e) {
      CHECK(std::string(e.what()).find("column 1") != std::string::npos);
    }
  }

  SECTION("agrees with a bisection-only oracle when the root is interior") {
    for (int trial = 0; trial < 30; ++trial) {
      Matrix joint = random_joint(rng, m, n);
      Vector r = joint.colwise().sum().transpose();
      Matrix d = random_metric(rng, m, n);
      Vector phi = random_simplex(rng, m) * 1.5;
      Vector psi = random_simplex(rng, n) * 1.5;
      // Bias the budget low so G(0) > 0.
      const double mean = 0.25 * (joint.array() * d.array()).sum();
      if (eval_G(0.0, phi, psi, r, mean, d) <= 0.0) continue;
      const double z = solve_zeta(phi, psi, r, mean, d, 1.0, 1e-13);
      const double z_oracle = bisect_zeta(phi, psi, r, mean, d);
      REQUIRE(z == Approx(z_oracle).margin(1e-8));
      REQUIRE(std::abs(eval_G(z, phi, psi, r, mean, d)) <= 1e-13);
    }
  }
}

TEST_CASE("dual objective value") {
  SECTION("fixed point of a product joint evaluates to zero") {
    std::mt19937_64 rng(53);
    Vector p = random_simplex(rng, 2);
    Vector r = random_simplex(rng, 2);
    Matrix costs = random_metric(rng, 2, 2);
    Matrix joint = p * r.transpose();
    const double mean = (joint.array() * costs.array()).sum();
    DualState dual = DualState::initial(2, 2, costs);
    dual.set_zeta(0.0, costs);
    for (int sweep = 0; sweep < 3; ++sweep) {
      dual.phi = update_phi(dual, p, r);
      dual.psi_tilde = update_psi_tilde(dual, costs);
    }
    CHECK(eval_g_lm_joint(dual, p, r, mean) == Approx(0.0).margin(1e-12));
  }

  SECTION("all-ones potentials at zeta 0 on a product joint, pinned by hand") {
    // Summing the six terms directly: -phi' Lambda psi collapses to -M, the
    // psi expectation cancels H(Z), leaving H(p) + 1 - M.
    Vector p = Vector::Constant(2, 0.5);
    std::mt19937_64 rng(54);
    Vector r = random_simplex(rng, 3);
    Matrix costs = random_metric(rng, 2, 3);
    DualState dual = DualState::initial(2, 3, costs);
    dual.set_zeta(0.0, costs);
    Matrix joint = p * r.transpose();
    const double mean = (joint.array() * costs.array()).sum();
    const double value = eval_g_lm_joint(dual, p, r, mean);

    double by_hand = 0.0;
    for (Index i = 0; i < 2; ++i)
      for (Index j = 0; j < 3; ++j) by_hand -= 1.0 * 1.0 * (1.0 * r[j]);
    by_hand += detail::entropy_vec(p) + detail::entropy_vec(r);
    for (Index j = 0; j < 3; ++j) by_hand += r[j] * std::log(1.0 * r[j]);
    by_hand += 1.0;
    CHECK(value == Approx(by_hand).epsilon(1e-13));
    CHECK(value == Approx(kLn2 - 1.0).epsilon(1e-12));
  }

  SECTION("scaling phi by c and psi by 1/c leaves the value unchanged") {
    std::mt19937_64 rng(57);
    for (double c : {0.1, 10.0}) {
      Matrix joint = random_joint(rng, 3, 3);
      Vector p = joint.rowwise().sum();
      Vector r = joint.colwise().sum().transpose();
      Matrix costs = random_metric(rng, 3, 3);
      const double mean = (joint.array() * costs.array()).sum();
      DualState dual = DualState::initial(3, 3, costs);
      dual.set_zeta(0.7, costs);
      dual.phi = random_simplex(rng, 3) * 2.0;
      dual.psi_tilde = random_simplex(rng, 3) * 2.0;
      const double base = eval_g_lm_joint(dual, p, r, mean);
      DualState scaled = dual;
      scaled.phi *= c;
      scaled.psi_tilde /= c;
      REQUIRE(eval_g_lm_joint(scaled, p, r, mean) == Approx(base).margin(1e-10));
    }
  }

  SECTION("non-positive potentials are rejected") {
    Matrix costs = Matrix::Zero(2, 2);
    Vector p = Vector::Constant(2, 0.5);
    Vector r = Vector::Constant(2, 0.5);
    DualState dual = DualState::initial(2, 2, costs);
    dual.phi[0] = 0.0;
    CHECK_THROWS_AS(eval_g_lm_joint(dual, p, r, 0.0), std::domain_error);
  }
}

TEST_CASE("typed g evaluation matches the joint-based core") {
  std::mt19937_64 rng(61);
  auto p = Distribution(random_simplex(rng, 3));
  auto theta = Channel::from_kernel(test_helpers::random_row_stochastic(rng, 3, 2));
  auto omega = Channel::from_kernel(test_helpers::random_row_stochastic(rng, 2, 3), "y", "z");
  DecodingMetric d(random_metric(rng, 3, 3));
  DualState dual = DualState::initial(3, 3, d.costs());
  Matrix joint = compose_joint(p, theta, omega);
  Vector r = joint.colwise().sum().transpose();
  const double mean = (joint.array() * d.costs().array()).sum();
  CHECK(eval_g_lm(dual, p, theta, omega, d) ==
        Approx(eval_g_lm_joint(dual, p.mass(), r, mean)).epsilon(1e-15));
}

TEST_CASE("LM rate of a fixed joint") {
  SECTION("independent pair gives zero") {
    std::mt19937_64 rng(71);
    Vector p = random_simplex(rng, 2);
    Vector r = random_simplex(rng, 3);
    Matrix costs = random_metric(rng, 2, 3);
    auto res = lm_rate_fixed_joint(p * r.transpose(), DecodingMetric(costs), 1e-10, 2000);
    CHECK(res.converged);
    CHECK(res.value == Approx(0.0).margin(1e-6));
  }

  SECTION("perfectly correlated pair under a pinning metric gives ln 2") {
    Matrix joint = Matrix::Zero(2, 2);
    joint(0, 0) = joint(1, 1) = 0.5;
    Matrix hamming(2, 2);
    hamming << 0, 1, 1, 0;
    auto res = lm_rate_fixed_joint(joint, DecodingMetric(hamming), 1e-10, 2000);
    CHECK(res.converged);
    CHECK(res.value == Approx(kLn2).margin(1e-6));
  }

  SECTION("binary symmetric joint matches the brute-force oracle") {
    Matrix joint = 0.5 * test_helpers::bsc_kernel(0.1);
    Matrix hamming(2, 2);
    hamming << 0, 1, 1, 0;
    DecodingMetric metric(hamming);
    auto res = lm_rate_fixed_joint(joint, metric, 1e-11, 5000);
    const double grid = oracle::lm_rate_bruteforce(joint, metric, 1e-3);
    CHECK(res.converged);
    CHECK(res.value == Approx(grid).margin(1e-3));
  }

  SECTION("never exceeds the mutual information of the joint") {
    std::mt19937_64 rng(83);
    for (int trial = 0; trial < 30; ++trial) {
      Matrix joint = random_joint(rng, 2, 3);
      DecodingMetric metric(random_metric(rng, 2, 3));
      auto res = lm_rate_fixed_joint(joint, metric, 1e-10, 5000);
      REQUIRE(res.value <= mutual_information(joint) + 1e-9);
    }
  }

  SECTION("invariant under simultaneous permutations") {
    std::mt19937_64 rng(89);
    Matrix joint = random_joint(rng, 3, 3);
    Matrix costs = random_metric(rng, 3, 3);
    const double base = lm_rate_fixed_joint(joint, DecodingMetric(costs), 1e-11, 5000).value;

    std::vector<Index> rp{2, 0, 1}, cp{1, 2, 0};
    Matrix pj(3, 3), pc(3, 3);
    for (Index i = 0; i < 3; ++i)
      for (Index j = 0; j < 3; ++j) {
        pj(i, j) = joint(rp[static_cast<std::size_t>(i)], cp[static_cast<std::size_t>(j)]);
        pc(i, j) = costs(rp[static_cast<std::size_t>(i)], cp[static_cast<std::size_t>(j)]);
      }
    const double permuted = lm_rate_fixed_joint(pj, DecodingMetric(pc), 1e-11, 5000).value;
    CHECK(permuted == Approx(base).margin(1e-9));
  }

  SECTION("zero-mass symbols are stripped, not fatal") {
    Matrix joint = Matrix::Zero(3, 3);
    joint(0, 0) = 0.5;
    joint(1, 1) = 0.5;
    Matrix costs(3, 3);
    costs << 0, 1, 1, 1, 0, 1, 1, 1, 0;
    auto res = lm_rate_fixed_joint(joint, DecodingMetric(costs), 1e-10, 2000);
    CHECK(res.converged);
    CHECK(res.value == Approx(kLn2).margin(1e-6));
  }

  SECTION("iteration cap yields a flagged result") {
    Matrix joint = Matrix::Zero(2, 2);
    joint(0, 0) = joint(1, 1) = 0.5;
    Matrix hamming(2, 2);
    hamming << 0, 1, 1, 0;
    auto res = lm_rate_fixed_joint(joint, DecodingMetric(hamming), 1e-14, 1);
    CHECK_FALSE(res.converged);
    CHECK(res.iterations == 1);
  }

  SECTION("value trace respects weak duality against the grid oracle") {
    std::mt19937_64 rng(97);
    for (int trial = 0; trial < 10; ++trial) {
      Matrix joint = random_joint(rng, 2, 2);
      DecodingMetric metric(random_metric(rng, 2, 2));
      const double grid = oracle::lm_rate_bruteforce(joint, metric, 1e-3);
      auto res = lm_rate_fixed_joint(joint, metric, 1e-10, 3000);
      for (double v : res.value_trace) REQUIRE(v <= grid + 1e-6);
    }
  }
}

TEST_CASE("lm sweep keeps improving the dual value") {
  std::mt19937_64 rng(101);
  Matrix joint = random_joint(rng, 3, 3);
  Vector p = joint.rowwise().sum();
  Vector r = joint.colwise().sum().transpose();
  Matrix costs = random_metric(rng, 3, 3);
  const double mean = (joint.array() * costs.array()).sum();
  DualState dual = DualState::initial(3, 3, costs);
  double prev = -std::numeric_limits<double>::infinity();
  for (int sweep = 0; sweep < 20; ++sweep) {
    lm_sweep(dual, p, r, mean, costs);
    const double value = eval_g_lm_joint(dual, p, r, mean);
    REQUIRE(value >= prev - 1e-9);
    prev = value;
  }
}
