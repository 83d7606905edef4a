#pragma once

// Optimal signal ratio analysis for two symmetric bidders with CTRs (1, l):
// the revenue-maximising ratio x(l), its inverse l(x), convexity of x(l),
// and the worst-case machinery (initial number K0, intersection points l[k],
// the normalisation sum S(k, l), and the suboptimal mass z*).

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

// pchip.hpp in Boost 1.74 uses an unqualified isnan; make it visible first.
#include <boost/math/special_functions/fpclassify.hpp>
#include <boost/math/interpolators/pchip.hpp>

#include "calibra/diagnostics.hpp"
#include "calibra/distributions.hpp"
#include "calibra/error.hpp"
#include "calibra/numerics.hpp"
#include "calibra/revenue.hpp"

namespace calibra {

namespace detail {
inline void check_unit(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw ValidationError(std::string(name) + " must lie in [0, 1], got " + std::to_string(v));
  }
}
}  // namespace detail

/// Derivative in x of the revenue at CTRs (1, l) and ratio x <= 1:
///   integral of v f(v) f(vx) (l phi(v) - phi(vx)) dv,
/// written with f * phi(v) = v f(v) - S(v) so no division by f is needed.
inline double dg_dx(double x, double l, const ValueDistribution& d) {
  if (!(x > 0.0 && x <= 1.0)) throw ValidationError("signal ratio must lie in (0, 1]");
  detail::check_unit(l, "CTR l");
  auto breaks = detail::scaled_breaks(d, x);
  return integrate_support(
      d,
      [&](double v) {
        const double fv = d.pdf(v);
        const double fvx = d.pdf(v * x);
        const double lhs = l * fvx * (v * fv - d.survival(v));
        const double rhs = fv * (v * x * fvx - d.survival(v * x));
        return v * (lhs - rhs);
      },
      std::move(breaks));
}

/// Revenue-maximising ratio x(l) in (l, 1]. Returns 1 when the revenue is
/// still increasing at x = 1; otherwise bisects for the root of dg_dx on
/// [l + 1e-9, 1], falling back to a bracketing maximiser when the derivative
/// shows no sign change.
inline double optimal_ratio(double l, const ValueDistribution& d) {
  detail::check_unit(l, "CTR l");
  if (l >= 1.0 - 1e-12) return 1.0;
  const auto h = [&](double x) { return dg_dx(x, l, d); };
  // A relative floor absorbs quadrature noise when the derivative vanishes at 1.
  const double at_one = h(1.0);
  if (at_one >= -1e-12) return 1.0;
  const double lo = l + 1e-9;
  if (h(lo) > 0.0) return numerics::bisect_root(h, lo, 1.0, 1e-12);
  return numerics::maximize_scalar([&](double x) { return revenue_at_ratio(l, x, d); }, 0.0, 1.0);
}

/// Inverse of x(l): l(x) = int v f(v) (vx f(vx) - S(vx)) / int v f(vx) (v f(v) - S(v)).
/// Throws when the denominator is not positive or the result leaves [0, 1].
inline double inverse_ratio(double x, const ValueDistribution& d) {
  if (!(x > 0.0 && x <= 1.0)) throw ValidationError("signal ratio must lie in (0, 1]");
  auto breaks = detail::scaled_breaks(d, x);
  const double num = integrate_support(
      d,
      [&](double v) {
        const double fvx = d.pdf(v * x);
        return v * d.pdf(v) * (v * x * fvx - d.survival(v * x));
      },
      breaks);
  const double den = integrate_support(
      d,
      [&](double v) {
        const double fvx = d.pdf(v * x);
        return v * fvx * (v * d.pdf(v) - d.survival(v));
      },
      breaks);
  if (!(den > 0.0)) {
    throw DomainError("ratio " + std::to_string(x) + " is outside the range of x(l): denominator " +
                      std::to_string(den) + " is not positive");
  }
  const double l = num / den;
  if (l < -1e-9 || l > 1.0 + 1e-9) {
    throw DomainError("ratio " + std::to_string(x) + " is outside the range of x(l): l(x) = " +
                      std::to_string(l));
  }
  return std::clamp(l, 0.0, 1.0);
}

/// S(k, l) = 1 + A (1 + P_1 + P_1 P_2 + ... + P_1...P_{k-1}) with
/// sigma_i = x^(k-i), A = (l + 1 - 2 sigma_0)/(sigma_0 - l), P_i = (1 - sigma_i)/(sigma_i - l).
inline double s_quantity_from_ratio(int k, double l, double x) {
  if (k < 1) throw ValidationError("S(k, l) needs k >= 1");
  detail::check_unit(l, "CTR l");
  if (!(x > 0.0 && x <= 1.0)) throw ValidationError("signal ratio must lie in (0, 1]");
  const double sigma0 = std::pow(x, k);
  if (!(sigma0 > l)) {
    throw DomainError("S(k, l) needs x(l)^k > l (got " + std::to_string(sigma0) + " <= " +
                      std::to_string(l) + ")");
  }
  const double a = (l + 1.0 - 2.0 * sigma0) / (sigma0 - l);
  double sum = 1.0;
  double prod = 1.0;
  for (int i = 1; i < k; ++i) {
    const double sigma = std::pow(x, k - i);
    prod *= (1.0 - sigma) / (sigma - l);
    sum += prod;
  }
  return 1.0 + a * sum;
}

inline double s_quantity(int k, double l, const ValueDistribution& d) {
  return s_quantity_from_ratio(k, l, optimal_ratio(l, d));
}

enum class Convexity { convex, not_convex, inconclusive };

inline std::string convexity_name(Convexity c) {
  switch (c) {
    case Convexity::convex: return "convex";
    case Convexity::not_convex: return "not-convex";
    case Convexity::inconclusive: return "inconclusive";
  }
  return "unknown";
}

/// Outcome of the worst-case bound computation. `k0` is empty when x(l)
/// never crosses below the diagonal (e.g. x(l) = 1), in which case z* = 0.
/// z* is the total suboptimal mass over both mirrored states of a pair.
struct BoundReport {
  Convexity convexity = Convexity::inconclusive;
  std::optional<int> k0;
  double l_k = std::nan("");
  double x_at_l_k = std::nan("");
  double s = std::nan("");
  double z_star = 0.0;
  double approx = 1.0;
};

/// x(l) tabulated once on a Chebyshev-spaced grid of [0, 1] (dense near both
/// ends) with monotone cubic interpolation between nodes. Immutable after
/// construction.
class RatioAnalysis {
 public:
  static constexpr int kDefaultGrid = 257;
  static constexpr int kMaxPower = 64;
  static constexpr double kCrossTol = 1e-9;
  static constexpr double kConvexTol = 1e-8;

  explicit RatioAnalysis(ValueDistribution d, int grid_points = kDefaultGrid) : d_(std::move(d)) {
    if (grid_points < 16) throw ValidationError("ratio grid needs at least 16 points");
    if (!is_mhr(d_)) warn("value distribution is not MHR; optimal ratio results may be unreliable");
    const int m = grid_points - 1;
    l_.resize(grid_points);
    x_.resize(grid_points);
    for (int j = 0; j <= m; ++j) {
      l_[j] = j == m ? 1.0 : 0.5 * (1.0 - std::cos(std::numbers::pi * j / m));
      x_[j] = optimal_ratio(l_[j], d_);
    }
    auto lx = l_;
    auto xx = x_;
    interp_.emplace(std::move(lx), std::move(xx));
  }

  const ValueDistribution& distribution() const { return d_; }
  const std::vector<double>& l_grid() const { return l_; }
  const std::vector<double>& x_grid() const { return x_; }

  /// Interpolated x(l) from the cached grid.
  double x_of(double l) const {
    detail::check_unit(l, "CTR l");
    return (*interp_)(l);
  }

  /// x(l) recomputed from scratch.
  double x_exact(double l) const { return optimal_ratio(l, d_); }

  /// Convex when every cached x(l) node lies on or below the chord of its
  /// neighbours (tolerance 1e-8) and l(x), sampled on `grid_points` uniform
  /// x nodes, is concave by the same test. If x(l) is constant the l(x)
  /// cross-check is skipped. Disagreement between the two tests gives
  /// `inconclusive`.
  Convexity check_convexity(int grid_points = 64) const {
    if (grid_points < 16) throw ValidationError("convexity check needs at least 16 points");
    const bool x_convex = chord_test(l_, x_, +1.0);
    const double x_lo = x_.front();
    const double x_hi = x_.back();
    if (x_hi - x_lo <= 1e-9) return x_convex ? Convexity::convex : Convexity::not_convex;
    std::vector<double> xs(grid_points);
    std::vector<double> ls(grid_points);
    for (int j = 0; j < grid_points; ++j) {
      xs[j] = x_lo + (x_hi - x_lo) * j / (grid_points - 1);
      try {
        ls[j] = inverse_ratio(xs[j], d_);
      } catch (const DomainError&) {
        return x_convex ? Convexity::inconclusive : Convexity::not_convex;
      }
    }
    const bool l_concave = chord_test(xs, ls, -1.0);
    if (x_convex && l_concave) return Convexity::convex;
    if (!x_convex && !l_concave) return Convexity::not_convex;
    return Convexity::inconclusive;
  }

  /// Largest K0 >= 1 such that x(l)^K0 >= l on the whole grid while
  /// x(l)^(K0+1) dips below l somewhere; empty when no power up to
  /// `k_max` crosses.
  std::optional<int> initial_number(int k_max = kMaxPower) const {
    for (int k = 1; k <= k_max; ++k) {
      if (first_negative(k)) {
        if (k == 1) return std::nullopt;
        return k - 1;
      }
    }
    return std::nullopt;
  }

  /// The sub-unit solution l[k] of x(l)^k = l for k > K0, i.e. the left end
  /// of the region where x(l)^k < l. Bisection on exact x(l) to 1e-10.
  double intersection_point(int k) const {
    const auto j = first_negative(k);
    if (!j) throw DomainError("x(l)^" + std::to_string(k) + " never crosses l; need k > K0");
    const auto g = [&](double l) { return std::pow(optimal_ratio(l, d_), k) - l; };
    if (*j == 0) throw NumericalError("x(l)^k < l already at l = 0");
    std::size_t left = *j - 1;
    while (left > 0 && g(l_[left]) < 0.0) --left;
    std::size_t right = *j;
    while (right + 1 < l_.size() - 1 && g(l_[right]) >= 0.0) ++right;
    if (g(l_[left]) < 0.0 || g(l_[right]) >= 0.0) {
      throw NumericalError("could not bracket the intersection point for k = " + std::to_string(k));
    }
    return numerics::bisect_root(g, l_[left], l_[right], 1e-10);
  }

  double s_quantity(int k, double l) const { return calibra::s_quantity(k, l, d_); }

  /// z* = 1 / S(K0, l[K0+1]) and approximation 1 - z*. Refuses unless x(l)
  /// is verified convex.
  BoundReport worst_case_bound() const {
    BoundReport rep;
    rep.convexity = check_convexity();
    if (rep.convexity != Convexity::convex) {
      throw ValidationError("worst-case bound requires a convex optimal ratio function (verdict: " +
                            convexity_name(rep.convexity) + ")");
    }
    rep.k0 = initial_number();
    if (!rep.k0) return rep;
    rep.l_k = intersection_point(*rep.k0 + 1);
    rep.x_at_l_k = optimal_ratio(rep.l_k, d_);
    rep.s = s_quantity_from_ratio(*rep.k0, rep.l_k, rep.x_at_l_k);
    rep.z_star = 1.0 / rep.s;
    rep.approx = 1.0 - rep.z_star;
    return rep;
  }

 private:
  // sign = +1 tests convexity (middle node on or below the chord),
  // sign = -1 tests concavity.
  static bool chord_test(const std::vector<double>& t, const std::vector<double>& y, double sign) {
    for (std::size_t j = 1; j + 1 < t.size(); ++j) {
      const double w = (t[j] - t[j - 1]) / (t[j + 1] - t[j - 1]);
      const double chord = y[j - 1] + w * (y[j + 1] - y[j - 1]);
      if (sign * (y[j] - chord) > kConvexTol) return false;
    }
    return true;
  }

  // Index of the first grid node with x^k - l < -tol (the last node, l = 1,
  // is always on the diagonal and is skipped).
  std::optional<std::size_t> first_negative(int k) const {
    for (std::size_t j = 0; j + 1 < l_.size(); ++j) {
      if (std::pow(x_[j], k) - l_[j] < -kCrossTol) return j;
    }
    return std::nullopt;
  }

  ValueDistribution d_;
  std::vector<double> l_;
  std::vector<double> x_;
  std::optional<boost::math::interpolators::pchip<std::vector<double>>> interp_;
};

}  // namespace calibra
