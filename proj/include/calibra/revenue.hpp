#pragma once

// Expected seller revenue of the click-through auction for fixed CTRs r and
// signals s. The winner maximises v_i * s_i and pays, per click, the smallest
// bid that still wins; the seller collects r_winner * payment in expectation.
//
// For two bidders with x = s2 / s1 the inner integral collapses to the
// survival function S = 1 - F:
//   R = r1 * E_v[ v x S(v x) ] + r2 * E_v[ (v / x) S(v / x) ].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "calibra/distributions.hpp"
#include "calibra/error.hpp"

namespace calibra {

namespace detail {

inline void check_pair(std::span<const double> r, std::span<const double> s) {
  if (r.size() != 2 || s.size() != 2) {
    throw ValidationError("two-bidder revenue needs CTR and signal vectors of length 2");
  }
  if (!(s[0] > 0.0) || !(s[1] > 0.0) || !std::isfinite(s[0]) || !std::isfinite(s[1])) {
    throw ValidationError("signals must be positive and finite");
  }
  if (!(r[0] >= 0.0) || !(r[1] >= 0.0)) throw ValidationError("CTRs must be nonnegative");
}

/// Points where v * scale crosses a kink or the top of the support.
inline std::vector<double> scaled_breaks(const ValueDistribution& d, double scale) {
  std::vector<double> out;
  if (d.bounded()) out.push_back(d.upper() / scale);
  if (d.lower() > 0.0) out.push_back(d.lower() / scale);
  for (double k : d.kinks()) out.push_back(k / scale);
  return out;
}

/// E_v[ m(v) S(m(v)) ] with m(v) = max(v * scale, reserve).
inline double payment_term(const ValueDistribution& d, double scale, double reserve) {
  auto breaks = scaled_breaks(d, scale);
  if (reserve > 0.0) breaks.push_back(reserve / scale);
  return integrate_support(
      d,
      [&](double v) {
        const double m = std::max(v * scale, reserve);
        return d.pdf(v) * m * d.survival(m);
      },
      std::move(breaks));
}

}  // namespace detail

/// c (x/2 - x^2/3 + l x / 6) for values uniform on [0, c] and CTRs (1, l),
/// valid for 0 <= x <= 1.
inline double expected_revenue_uniform_ratio(double l, double x, double c) {
  if (!(x >= 0.0 && x <= 1.0)) throw ValidationError("signal ratio must lie in [0, 1]");
  if (!(l >= 0.0 && l <= 1.0)) throw ValidationError("CTR l must lie in [0, 1]");
  if (!(c > 0.0)) throw ValidationError("support top must be positive");
  return c * (x / 2.0 - x * x / 3.0 + l * x / 6.0);
}

/// Two-bidder revenue by adaptive quadrature, whatever the distribution.
inline double expected_revenue_quadrature(std::span<const double> r, std::span<const double> s,
                                          const ValueDistribution& d) {
  detail::check_pair(r, s);
  const double x = s[1] / s[0];
  double total = 0.0;
  if (r[0] > 0.0) total += r[0] * detail::payment_term(d, x, 0.0);
  if (r[1] > 0.0) total += r[1] * detail::payment_term(d, 1.0 / x, 0.0);
  return total;
}

/// Two-bidder expected revenue. Closed forms are used for uniform laws on
/// [0, c] and for the exponential law; everything else goes through
/// quadrature.
inline double expected_revenue_two(std::span<const double> r, std::span<const double> s,
                                   const ValueDistribution& d) {
  detail::check_pair(r, s);
  const double x = s[1] / s[0];
  if (const auto* u = std::get_if<UniformLaw>(&d.law()); u && u->lo == 0.0) {
    const double c = u->hi;
    if (x <= 1.0) return c * (r[0] * (x / 2.0 - x * x / 3.0) + r[1] * x / 6.0);
    const double y = 1.0 / x;
    return c * (r[1] * (y / 2.0 - y * y / 3.0) + r[0] * y / 6.0);
  }
  if (const auto* e = std::get_if<ExponentialLaw>(&d.law())) {
    return (r[0] + r[1]) / e->rate * x / ((1.0 + x) * (1.0 + x));
  }
  return expected_revenue_quadrature(r, s, d);
}

/// Revenue at CTRs (1, l) when the signal ratio is x.
inline double revenue_at_ratio(double l, double x, const ValueDistribution& d) {
  const double r[2] = {1.0, l};
  const double s[2] = {1.0, x};
  return expected_revenue_two(r, s, d);
}

/// Two-bidder revenue with reserve price p: the winner must bid at least p
/// and pays max(p, runner-up's bid scaled by the signal ratio) per click.
inline double expected_revenue_reserve(std::span<const double> r, std::span<const double> s,
                                       double p, const ValueDistribution& d) {
  detail::check_pair(r, s);
  if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("reserve price must be finite and >= 0");
  if (p == 0.0) return expected_revenue_two(r, s, d);
  if (p >= d.upper()) return 0.0;
  const double x = s[1] / s[0];
  double total = 0.0;
  if (r[0] > 0.0) total += r[0] * detail::payment_term(d, x, p);
  if (r[1] > 0.0) total += r[1] * detail::payment_term(d, 1.0 / x, p);
  return total;
}

/// Closed-form three-bidder revenue for i.i.d. exponential values, with
/// x = s2 / s1 and y = s3 / s2.
inline double expected_revenue_three_exponential(std::span<const double> r, std::span<const double> s,
                                                 double rate) {
  if (r.size() != 3 || s.size() != 3) throw ValidationError("three-bidder revenue needs vectors of length 3");
  for (double v : s) {
    if (!(v > 0.0)) throw ValidationError("signals must be positive");
  }
  if (!(rate > 0.0)) throw ValidationError("exponential rate must be positive");
  const double x = s[1] / s[0];
  const double y = s[2] / s[1];
  const auto sq = [](double t) { return t * t; };
  const double all = 1.0 / sq(x * y + 1.0 + y);
  const double t12 = (r[0] + r[1]) * x * y * y * (1.0 / sq(x * y + y) - all);
  const double t23 = (r[1] + r[2]) * y * (1.0 / sq(y + 1.0) - all);
  const double t13 = (r[0] + r[2]) * x * y * (1.0 / sq(x * y + 1.0) - all);
  return (t12 + t23 + t13) / rate;
}

/// Outcome of one auction: the winner maximises v_i * s_i (ties go to the
/// lower index) and pays, per click, the smallest winning bid
/// max(reserve, max_{j != winner} v_j s_j / s_winner). With a reserve the
/// top-ranked bidder must also bid at least the reserve, otherwise nothing
/// is sold. A lone bidder pays the reserve (zero without one).
struct AuctionResult {
  std::size_t winner = 0;
  double payment = 0.0;
  bool sold = false;
};

inline AuctionResult resolve_auction(std::span<const double> v, std::span<const double> s, double reserve = 0.0) {
  AuctionResult out;
  if (v.empty() || v.size() != s.size()) return out;
  std::size_t best = 0;
  double top = v[0] * s[0];
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] * s[i] > top) {
      top = v[i] * s[i];
      best = i;
    }
  }
  out.winner = best;
  if (reserve > 0.0 && v[best] < reserve) return out;
  double runner = 0.0;
  for (std::size_t j = 0; j < v.size(); ++j) {
    if (j != best) runner = std::max(runner, v[j] * s[j]);
  }
  out.sold = true;
  out.payment = std::max(reserve, s[best] > 0.0 ? runner / s[best] : 0.0);
  return out;
}

/// Mean of r_winner * payment over a fixed sample of value profiles stored
/// row-major (`values.size()` = samples * n). Reusing one sample for many
/// (r, s) cells gives common random numbers across cells.
inline double revenue_on_sample(std::span<const double> r, std::span<const double> s,
                                std::span<const double> values, double reserve = 0.0) {
  const std::size_t n = r.size();
  if (n == 0 || s.size() != n || values.size() % n != 0) {
    throw ValidationError("revenue sample dimensions disagree");
  }
  const std::size_t samples = values.size() / n;
  if (samples == 0) throw ValidationError("revenue sample is empty");
  double total = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    const auto res = resolve_auction(values.subspan(k * n, n), s, reserve);
    if (res.sold) total += r[res.winner] * res.payment;
  }
  return total / static_cast<double>(samples);
}

/// Draws `samples` i.i.d. value profiles of `n` bidders (row-major).
inline std::vector<double> sample_values(const ValueDistribution& d, std::size_t n, std::size_t samples,
                                         std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> values(n * samples);
  for (double& v : values) v = d.sample(rng);
  return values;
}

}  // namespace calibra
