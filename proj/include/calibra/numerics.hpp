#pragma once

// Quadrature and one-dimensional root/extremum search shared by the
// revenue and ratio modules.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include "calibra/error.hpp"

namespace calibra::numerics {

namespace detail {
inline std::atomic<double>& tolerance_slot() {
  static std::atomic<double> tol{1e-10};
  return tol;
}
}  // namespace detail

/// Process-wide quadrature tolerance (default 1e-10).
inline double quadrature_tolerance() {
  return detail::tolerance_slot().load(std::memory_order_relaxed);
}

inline void set_quadrature_tolerance(double tol) {
  if (!(tol > 0.0) || !std::isfinite(tol)) {
    throw ValidationError("quadrature tolerance must be positive and finite");
  }
  detail::tolerance_slot().store(tol, std::memory_order_relaxed);
}

/// Upper bound on the number of subintervals kept by the adaptive rule.
inline constexpr std::size_t kMaxQuadratureSegments = 4000;

/// Integrates `f` over [lo, hi], splitting at every breakpoint that falls
/// strictly inside. Breakpoints mark kinks and jumps of the integrand; the
/// adaptive rule converges much faster when they sit on segment boundaries.
///
/// Global adaptive Gauss-Kronrod (15 points): the subinterval with the
/// largest error estimate is bisected until the summed estimate is at most
/// tol * max(1, L1). The absolute floor keeps integrands that are a tiny
/// difference of large terms from chasing rounding noise.
/// Throws QuadratureError if the combined error estimate misses the budget
/// by more than a factor of 100.
template <class F>
double integrate(F&& f, double lo, double hi, std::vector<double> breaks = {}) {
  if (!(hi > lo)) return 0.0;
  breaks.erase(std::remove_if(breaks.begin(), breaks.end(),
                              [&](double t) { return !(t > lo && t < hi) || !std::isfinite(t); }),
               breaks.end());
  breaks.push_back(lo);
  breaks.push_back(hi);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  struct Segment {
    double a, b, value, err, l1;
    bool operator<(const Segment& o) const { return err < o.err; }
  };
  auto rule = [&f](double a, double b) {
    double err = 0.0;
    double l1 = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 0, 0.0, &err, &l1);
    return Segment{a, b, v, err, l1};
  };

  const double tol = quadrature_tolerance();
  std::priority_queue<Segment> work;
  double total = 0.0;
  double err_total = 0.0;
  double l1_total = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    if (!(breaks[i + 1] > breaks[i])) continue;
    const auto seg = rule(breaks[i], breaks[i + 1]);
    total += seg.value;
    err_total += seg.err;
    l1_total += seg.l1;
    work.push(seg);
  }
  while (!work.empty() && err_total > tol * std::max(1.0, l1_total) && work.size() < kMaxQuadratureSegments &&
         std::isfinite(total)) {
    const Segment worst = work.top();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) break;  // interval can no longer be split
    work.pop();
    const auto left = rule(worst.a, mid);
    const auto right = rule(mid, worst.b);
    total += left.value + right.value - worst.value;
    err_total += left.err + right.err - worst.err;
    l1_total += left.l1 + right.l1 - worst.l1;
    work.push(left);
    work.push(right);
  }
  if (!std::isfinite(total)) {
    throw QuadratureError("integrand produced a non-finite value");
  }
  if (err_total > 100.0 * tol * std::max(1.0, l1_total)) {
    throw QuadratureError("quadrature did not converge: error estimate " +
                          std::to_string(err_total) + " exceeds tolerance " +
                          std::to_string(tol));
  }
  return total;
}

/// Integrates `f` over [lo, infinity): adaptive Gauss-Kronrod between `lo`
/// and the largest finite breakpoint, then an exp-sinh rule for the tail,
/// which copes with slowly decaying integrands.
template <class F>
double integrate_to_infinity(F&& f, double lo, std::vector<double> breaks = {}) {
  double tail_start = lo;
  for (double b : breaks) {
    if (std::isfinite(b) && b > tail_start) tail_start = b;
  }
  double total = tail_start > lo ? integrate(f, lo, tail_start, std::move(breaks)) : 0.0;
  const double tol = quadrature_tolerance();
  double err = 0.0;
  double l1 = 0.0;
  thread_local boost::math::quadrature::exp_sinh<double> rule;
  const double tail = rule.integrate(f, tail_start, std::numeric_limits<double>::infinity(), tol, &err, &l1);
  if (!std::isfinite(tail)) throw QuadratureError("integrand produced a non-finite value");
  if (err > 100.0 * tol * std::max(1.0, l1)) {
    throw QuadratureError("tail quadrature did not converge: error estimate " + std::to_string(err) +
                          " exceeds tolerance " + std::to_string(tol));
  }
  return total + tail;
}

/// Bisection for a sign change of `f` on [lo, hi]; stops once the bracket is
/// no wider than `xtol`. Requires f(lo) and f(hi) of opposite sign.
template <class F>
double bisect_root(F&& f, double lo, double hi, double xtol = 1e-12,
                   std::uintmax_t max_iter = 200) {
  auto done = [xtol](double a, double b) { return std::abs(b - a) <= xtol; };
  std::uintmax_t iters = max_iter;
  const auto bracket = boost::math::tools::bisect(f, lo, hi, done, iters);
  return 0.5 * (bracket.first + bracket.second);
}

/// Golden-section style search (Brent's variant) for the maximiser of `f`.
template <class F>
double maximize_scalar(F&& f, double lo, double hi) {
  const auto neg = [&f](double x) { return -f(x); };
  const auto r = boost::math::tools::brent_find_minima(neg, lo, hi, std::numeric_limits<double>::digits / 2);
  return r.first;
}

}  // namespace calibra::numerics
