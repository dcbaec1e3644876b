#pragma once

#include <cmath>

#include "mcor/prob.hpp"

namespace mcor {

/// Amplitude/phase imbalance of the in-phase and quadrature branches plus the
/// noise level implied by the configured SNR (snr_db = 10 log10(1/(2 sigma^2))).
struct IqImbalanceParams {
  double eta = 1.0;
  double theta = 0.0;
  double snr_db = 0.0;
  double sigma_n = 1.0;

  static IqImbalanceParams from_snr(double eta, double theta, double snr_db) {
    if (!(eta > 0.0) || eta > 1.0)
      throw std::invalid_argument("IqImbalanceParams: eta must lie in (0, 1]");
    IqImbalanceParams p;
    p.eta = eta;
    p.theta = theta;
    p.snr_db = snr_db;
    p.sigma_n = std::sqrt(0.5 * std::pow(10.0, -snr_db / 10.0));
    return p;
  }

  /// Channel mixing matrix: axis scaling after a rotation.
  Eigen::Matrix2d mixing() const {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    Eigen::Matrix2d h;
    h << c, s, -eta * s, eta * c;
    return h;
  }
};

/// Square grid over [-half_width, half_width]^2 with side*side nodes.
struct GridSpec {
  double half_width = 8.0;
  int n_points = 0;

  int side() const {
    const int s = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n_points))));
    if (s < 2 || s * s != n_points)
      throw std::invalid_argument("GridSpec: n_points = " + std::to_string(n_points) +
                                  " is not a perfect square with side >= 2");
    return s;
  }

  double step() const { return 2.0 * half_width / (side() - 1); }
};

/// Four-symbol symmetric channel: stay with probability 1-epsilon, hop to each
/// of the other symbols with probability epsilon/3. An explicit 4x4 transition
/// matrix overrides the symmetric law.
inline Channel quaternary_channel(double epsilon,
                                  const std::optional<Matrix>& transition_override = {}) {
  if (transition_override) {
    if (transition_override->rows() != 4 || transition_override->cols() != 4)
      throw std::invalid_argument("quaternary_channel: override must be 4x4");
    return Channel(Alphabet::indexed(4, "x"), Alphabet::indexed(4, "y"), *transition_override);
  }
  if (!(epsilon >= 0.0) || epsilon > 0.75)
    throw std::invalid_argument("quaternary_channel: epsilon must lie in [0, 0.75]");
  Matrix k = Matrix::Constant(4, 4, epsilon / 3.0);
  for (Index i = 0; i < 4; ++i) k(i, i) = 1.0 - epsilon;
  return Channel(Alphabet::indexed(4, "x"), Alphabet::indexed(4, "y"), std::move(k));
}

/// Metric of the decoder rule q(x,z) = exp(-d(x,z)) with q = 1-epsilon on the
/// diagonal and epsilon/3 off it. At epsilon = 0 the off-diagonal entries are
/// forbidden pairs and take the finite sentinel.
inline DecodingMetric metric_from_decoding_rule(double epsilon) {
  if (!(epsilon >= 0.0) || epsilon >= 1.0)
    throw std::invalid_argument("metric_from_decoding_rule: epsilon must lie in [0, 1)");
  const double diag = -std::log1p(-epsilon);
  const double off = epsilon > 0.0 ? -std::log(epsilon / 3.0) : kMetricInf;
  Matrix d = Matrix::Constant(4, 4, off);
  for (Index i = 0; i < 4; ++i) d(i, i) = diag;
  return DecodingMetric(std::move(d));
}

enum class Modulation { Qpsk, Qam16 };

/// Constellation points normalized to unit mean square norm.
inline Alphabet constellation(Modulation scheme) {
  std::vector<Eigen::Vector2d> pts;
  std::string prefix;
  if (scheme == Modulation::Qpsk) {
    prefix = "qpsk";
    const double quarter = M_PI / 2.0;
    for (int k = 0; k < 4; ++k) {
      const double angle = M_PI / 4.0 + k * quarter;
      pts.emplace_back(std::cos(angle), std::sin(angle));
    }
  } else {
    prefix = "qam16";
    const double scale = 1.0 / std::sqrt(10.0);
    for (int a : {-3, -1, 1, 3})
      for (int b : {-3, -1, 1, 3}) pts.emplace_back(a * scale, b * scale);
  }
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < pts.size(); ++i) labels.push_back(prefix + std::to_string(i));
  return Alphabet(std::move(labels), std::move(pts));
}

/// Uniform grid points in row-major order: node (row, col) sits at
/// (-hw + row*step, -hw + col*step).
inline Alphabet make_grid(const GridSpec& spec) {
  const int side = spec.side();
  const double step = spec.step();
  std::vector<Eigen::Vector2d> pts;
  std::vector<std::string> labels;
  pts.reserve(static_cast<std::size_t>(spec.n_points));
  for (int row = 0; row < side; ++row) {
    for (int col = 0; col < side; ++col) {
      pts.emplace_back(-spec.half_width + row * step, -spec.half_width + col * step);
      labels.push_back("g" + std::to_string(row * side + col));
    }
  }
  return Alphabet(std::move(labels), std::move(pts));
}

/// Discretized Gaussian channel from a constellation to grid nodes under the
/// imbalance map: rows are the pointwise density at the nodes, normalized.
inline Channel awgn_iq_channel(const Alphabet& points, const IqImbalanceParams& params,
                               const GridSpec& grid) {
  if (!points.points)
    throw std::invalid_argument("awgn_iq_channel: constellation has no coordinates");
  const Alphabet nodes = make_grid(grid);
  const auto& xs = *points.points;
  const auto& ys = *nodes.points;
  const Eigen::Matrix2d h = params.mixing();
  const double inv_two_var = 1.0 / (2.0 * params.sigma_n * params.sigma_n);
  Matrix k(points.size(), nodes.size());
  for (Index i = 0; i < points.size(); ++i) {
    const Eigen::Vector2d mean = h * xs[static_cast<std::size_t>(i)];
    double sum = 0.0;
    for (Index j = 0; j < nodes.size(); ++j) {
      const double w =
          std::exp(-(ys[static_cast<std::size_t>(j)] - mean).squaredNorm() * inv_two_var);
      k(i, j) = w;
      sum += w;
    }
    if (!(sum > 0.0))
      throw std::domain_error("awgn_iq_channel: row " + std::to_string(i) +
                              " underflowed entirely; enlarge half_width or lower the SNR");
    k.row(i) /= sum;
  }
  return Channel(points, nodes, std::move(k));
}

/// Squared-distance decoding metric between grid nodes and the constellation
/// as the decoder believes it to be (identity mixing unless overridden).
inline DecodingMetric mismatch_metric_awgn(const Alphabet& points, const GridSpec& grid,
                                           const std::optional<Eigen::Matrix2d>& h_hat = {}) {
  if (!points.points)
    throw std::invalid_argument("mismatch_metric_awgn: constellation has no coordinates");
  const Alphabet nodes = make_grid(grid);
  const auto& xs = *points.points;
  const auto& zs = *nodes.points;
  const Eigen::Matrix2d h = h_hat.value_or(Eigen::Matrix2d::Identity());
  Matrix d(points.size(), nodes.size());
  for (Index i = 0; i < points.size(); ++i) {
    const Eigen::Vector2d ref = h * xs[static_cast<std::size_t>(i)];
    for (Index j = 0; j < nodes.size(); ++j)
      d(i, j) = (zs[static_cast<std::size_t>(j)] - ref).squaredNorm();
  }
  return DecodingMetric(std::move(d));
}

}  // namespace mcor
