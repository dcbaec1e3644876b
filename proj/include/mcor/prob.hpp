#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mcor {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Tolerance for simplex membership checks at construction time.
inline constexpr double kSimplexTol = 1e-12;

/// Finite stand-in for a forbidden decoder pair: exp(-zeta * kMetricInf)
/// underflows cleanly to zero, so Gibbs-kernel arithmetic stays finite.
inline constexpr double kMetricInf = 1e9;

/// Probabilities are floored here before logs whose argument can vanish
/// during iteration. Never applied before summation.
inline constexpr double kLogFloor = 1e-300;

inline constexpr double kLn2 = 0.69314718055994530942;

inline double nats_to_bits(double x) { return x / kLn2; }
inline double bits_to_nats(double x) { return x * kLn2; }

inline double safe_log(double x) { return std::log(std::max(x, kLogFloor)); }

/// x*log(x) with the 0*log(0) = 0 convention.
inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

/// x*log(y) with the 0*log(.) = 0 convention.
inline double xlogy(double x, double y) { return x > 0.0 ? x * std::log(y) : 0.0; }

namespace detail {

inline std::string num_str(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double entropy_vec(const Vector& v) {
  double h = 0.0;
  for (Index i = 0; i < v.size(); ++i) h -= xlogx(v[i]);
  return h;
}

}  // namespace detail

/// A finite symbol set, optionally carrying planar coordinates
/// (constellation points or grid nodes, normalized amplitude).
struct Alphabet {
  std::vector<std::string> labels;
  std::optional<std::vector<Eigen::Vector2d>> points;

  Alphabet(std::vector<std::string> labels_,
           std::optional<std::vector<Eigen::Vector2d>> points_ = std::nullopt)
      : labels(std::move(labels_)), points(std::move(points_)) {
    if (labels.empty()) throw std::invalid_argument("Alphabet: needs at least one symbol");
    std::set<std::string> uniq(labels.begin(), labels.end());
    if (uniq.size() != labels.size())
      throw std::invalid_argument("Alphabet: labels must be distinct");
    if (points && points->size() != labels.size())
      throw std::invalid_argument("Alphabet: " + std::to_string(points->size()) +
                                  " points for " + std::to_string(labels.size()) + " labels");
  }

  static Alphabet indexed(Index n, const std::string& prefix) {
    std::vector<std::string> l;
    l.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) l.push_back(prefix + std::to_string(i));
    return Alphabet(std::move(l));
  }

  Index size() const { return static_cast<Index>(labels.size()); }
};

/// A probability vector on a finite alphabet. Construction validates simplex
/// membership; violations beyond kSimplexTol are errors, never silently fixed.
class Distribution {
 public:
  explicit Distribution(Vector mass) : mass_(std::move(mass)) {
    if (mass_.size() < 1) throw std::invalid_argument("Distribution: empty mass vector");
    for (Index i = 0; i < mass_.size(); ++i) {
      if (!(mass_[i] >= 0.0))
        throw std::invalid_argument("Distribution: entry " + std::to_string(i) + " is " +
                                    detail::num_str(mass_[i]));
    }
    const double s = mass_.sum();
    if (std::abs(s - 1.0) > kSimplexTol)
      throw std::invalid_argument("Distribution: mass sums to " + detail::num_str(s));
  }

  static Distribution uniform(Index n) {
    return Distribution(Vector::Constant(n, 1.0 / static_cast<double>(n)));
  }

  static Distribution point_mass(Index n, Index at) {
    Vector v = Vector::Zero(n);
    v[at] = 1.0;
    return Distribution(std::move(v));
  }

  const Vector& mass() const { return mass_; }
  Index size() const { return mass_.size(); }
  double operator[](Index i) const { return mass_[i]; }

 private:
  Vector mass_;
};

/// A discrete memoryless channel: input/output alphabets plus a
/// row-stochastic transition matrix (rows indexed by input symbol).
class Channel {
 public:
  Channel(Alphabet input, Alphabet output, Matrix kernel)
      : input_(std::move(input)), output_(std::move(output)), kernel_(std::move(kernel)) {
    if (kernel_.rows() != input_.size() || kernel_.cols() != output_.size())
      throw std::invalid_argument("Channel: kernel is " + std::to_string(kernel_.rows()) + "x" +
                                  std::to_string(kernel_.cols()) + " for alphabets of size " +
                                  std::to_string(input_.size()) + " and " +
                                  std::to_string(output_.size()));
    for (Index i = 0; i < kernel_.rows(); ++i) {
      for (Index k = 0; k < kernel_.cols(); ++k) {
        if (!(kernel_(i, k) >= 0.0))
          throw std::invalid_argument("Channel: entry (" + std::to_string(i) + "," +
                                      std::to_string(k) + ") is " +
                                      detail::num_str(kernel_(i, k)));
      }
      const double s = kernel_.row(i).sum();
      if (std::abs(s - 1.0) > kSimplexTol)
        throw std::invalid_argument("Channel: row " + std::to_string(i) + " sums to " +
                                    detail::num_str(s));
    }
  }

  static Channel from_kernel(Matrix kernel, const std::string& in_prefix = "x",
                             const std::string& out_prefix = "y") {
    Alphabet in = Alphabet::indexed(kernel.rows(), in_prefix);
    Alphabet out = Alphabet::indexed(kernel.cols(), out_prefix);
    return Channel(std::move(in), std::move(out), std::move(kernel));
  }

  const Alphabet& input() const { return input_; }
  const Alphabet& output() const { return output_; }
  const Matrix& kernel() const { return kernel_; }
  Index input_size() const { return kernel_.rows(); }
  Index output_size() const { return kernel_.cols(); }

 private:
  Alphabet input_;
  Alphabet output_;
  Matrix kernel_;
};

/// Additive decoding costs d(x, z). Entries must be finite; +infinity is
/// accepted on input and replaced by the kMetricInf sentinel.
class DecodingMetric {
 public:
  explicit DecodingMetric(Matrix costs) : costs_(std::move(costs)) {
    if (costs_.size() == 0) throw std::invalid_argument("DecodingMetric: empty cost matrix");
    for (Index i = 0; i < costs_.rows(); ++i) {
      for (Index j = 0; j < costs_.cols(); ++j) {
        double v = costs_(i, j);
        if (std::isnan(v) || v == -std::numeric_limits<double>::infinity())
          throw std::invalid_argument("DecodingMetric: entry (" + std::to_string(i) + "," +
                                      std::to_string(j) + ") is " + detail::num_str(v));
        if (v == std::numeric_limits<double>::infinity()) costs_(i, j) = kMetricInf;
      }
    }
  }

  const Matrix& costs() const { return costs_; }
  Index rows() const { return costs_.rows(); }
  Index cols() const { return costs_.cols(); }

 private:
  Matrix costs_;
};

/// Joint distribution of the end-to-end pair (X, Z) induced by feeding p
/// through the cascade theta then omega. Rows marginalize back to p, columns
/// to omega^T theta^T p.
inline Matrix compose_joint(const Distribution& p, const Channel& theta, const Channel& omega) {
  if (theta.input_size() != p.size())
    throw std::invalid_argument("compose_joint: input distribution has size " +
                                std::to_string(p.size()) + ", channel expects " +
                                std::to_string(theta.input_size()));
  if (theta.output_size() != omega.input_size())
    throw std::invalid_argument("compose_joint: cascade mismatch, " +
                                std::to_string(theta.output_size()) + " vs " +
                                std::to_string(omega.input_size()));
  return p.mass().asDiagonal() * (theta.kernel() * omega.kernel());
}

inline double entropy(const Distribution& p) { return detail::entropy_vec(p.mass()); }

/// Mutual information of a joint distribution, in nats. Degenerate rows and
/// columns contribute zero via the 0*log(0) convention.
inline double mutual_information(const Matrix& joint) {
  for (Index i = 0; i < joint.rows(); ++i)
    for (Index j = 0; j < joint.cols(); ++j)
      if (!(joint(i, j) >= 0.0))
        throw std::invalid_argument("mutual_information: entry (" + std::to_string(i) + "," +
                                    std::to_string(j) + ") is " + detail::num_str(joint(i, j)));
  const double total = joint.sum();
  if (std::abs(total - 1.0) > 1e-10)
    throw std::invalid_argument("mutual_information: total mass is " + detail::num_str(total));
  const Vector a = joint.rowwise().sum();
  const Vector b = joint.colwise().sum().transpose();
  double info = 0.0;
  for (Index i = 0; i < joint.rows(); ++i) {
    for (Index j = 0; j < joint.cols(); ++j) {
      const double v = joint(i, j);
      // log(v) - log(a) - log(b) rather than log(v/(a*b)): the product a*b
      // can underflow for near-empty rows even though each factor is >= v.
      if (v > 0.0) info += v * (std::log(v) - std::log(a[i]) - std::log(b[j]));
    }
  }
  return std::max(info, 0.0);
}

}  // namespace mcor
