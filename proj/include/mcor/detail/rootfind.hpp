#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mcor::detail {

/// Root solve for a continuous non-increasing scalar function with f(0) > tol.
/// Expands a bracket geometrically from the warm start, then runs Newton steps
/// safeguarded by bisection: any step leaving the bracket is replaced by its
/// midpoint. Returns x with |f(x)| <= tol; throws if f stays above tol up to
/// hi_cap.
template <class F, class DF>
double solve_decreasing_root(F&& f, DF&& df, double warm, double tol, double hi_cap,
                             const std::string& what) {
  double lo = 0.0;
  double hi = std::min(std::max(warm, 1.0), hi_cap);
  double f_hi = f(hi);
  while (f_hi > tol) {
    if (hi >= hi_cap) throw std::runtime_error(what);
    lo = hi;
    hi = std::min(hi * 4.0, hi_cap);
    f_hi = f(hi);
  }
  if (std::abs(f_hi) <= tol && hi - lo <= 1.0) return hi;

  double x = std::min(std::max(warm, lo), hi);
  if (!(x > lo) || !(x < hi)) x = 0.5 * (lo + hi);
  double best = hi;
  double best_f = std::abs(f_hi);
  for (int it = 0; it < 200; ++it) {
    const double fx = f(x);
    if (std::abs(fx) <= tol) return x;
    if (std::abs(fx) < best_f) {
      best = x;
      best_f = std::abs(fx);
    }
    if (fx > 0.0)
      lo = x;
    else
      hi = x;
    if (hi - lo <= 1e-15 * (1.0 + hi)) break;
    const double slope = df(x);
    double next = slope < 0.0 ? x - fx / slope : std::numeric_limits<double>::quiet_NaN();
    if (!(next > lo) || !(next < hi)) next = 0.5 * (lo + hi);
    x = next;
  }
  return best;
}

}  // namespace mcor::detail
