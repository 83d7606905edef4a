#pragma once

// Bidder value distributions: density, CDF, hazard rate, virtual value and
// inverse-CDF sampling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "calibra/error.hpp"
#include "calibra/numerics.hpp"

namespace calibra {

namespace detail {
template <class... Ts>
struct Overload : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overload(Ts...) -> Overload<Ts...>;
}  // namespace detail

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

struct UniformLaw {
  double lo = 0.0;
  double hi = 1.0;
};

struct ExponentialLaw {
  double rate = 1.0;
};

/// Density sum_k coeffs[k] * v^k on [lo, hi].
struct PolynomialLaw {
  std::vector<double> coeffs;
  double lo = 0.0;
  double hi = 1.0;
};

/// Piecewise-linear density through (v, f(v)) knots, renormalised at load.
struct TabulatedLaw {
  std::vector<double> v;
  std::vector<double> f;
  std::vector<double> cum;  // cumulative mass at each knot
};

class ValueDistribution {
 public:
  enum class Kind { uniform, exponential, polynomial, tabulated };

  static ValueDistribution uniform(double lo, double hi) {
    if (!(lo >= 0.0) || !(hi > lo) || !std::isfinite(hi)) {
      throw ValidationError("uniform support must satisfy 0 <= lo < hi < inf");
    }
    return ValueDistribution(UniformLaw{lo, hi});
  }

  static ValueDistribution exponential(double rate) {
    if (!(rate > 0.0) || !std::isfinite(rate)) {
      throw ValidationError("exponential rate must be positive");
    }
    return ValueDistribution(ExponentialLaw{rate});
  }

  /// `coeffs` are ascending by power. The density must be nonnegative on the
  /// support and integrate to one within 1e-9; it is not renormalised.
  static ValueDistribution polynomial(std::vector<double> coeffs, double lo, double hi) {
    if (coeffs.empty()) throw ValidationError("polynomial density needs at least one coefficient");
    if (!(lo >= 0.0) || !(hi > lo) || !std::isfinite(hi)) {
      throw ValidationError("polynomial support must satisfy 0 <= lo < hi < inf");
    }
    PolynomialLaw law{std::move(coeffs), lo, hi};
    const double mass = poly_antiderivative(law.coeffs, hi) - poly_antiderivative(law.coeffs, lo);
    if (std::abs(mass - 1.0) > 1e-9) {
      throw ValidationError("polynomial density integrates to " + std::to_string(mass) +
                            " instead of 1");
    }
    constexpr int kChecks = 1024;
    for (int i = 0; i <= kChecks; ++i) {
      const double v = lo + (hi - lo) * i / kChecks;
      if (poly_eval(law.coeffs, v) < -1e-12) {
        throw ValidationError("polynomial density is negative at v = " + std::to_string(v));
      }
    }
    return ValueDistribution(std::move(law));
  }

  static ValueDistribution tabulated(std::vector<std::pair<double, double>> points) {
    if (points.size() < 2) throw ValidationError("tabulated density needs at least two points");
    TabulatedLaw law;
    for (const auto& [v, f] : points) {
      if (!std::isfinite(v) || !std::isfinite(f) || f < 0.0) {
        throw ValidationError("tabulated density points must be finite with f >= 0");
      }
      if (!law.v.empty() && !(v > law.v.back())) {
        throw ValidationError("tabulated density abscissae must be strictly increasing");
      }
      law.v.push_back(v);
      law.f.push_back(f);
    }
    if (law.v.front() < 0.0) throw ValidationError("tabulated support must be nonnegative");
    law.cum.assign(law.v.size(), 0.0);
    for (std::size_t i = 1; i < law.v.size(); ++i) {
      law.cum[i] = law.cum[i - 1] + 0.5 * (law.f[i - 1] + law.f[i]) * (law.v[i] - law.v[i - 1]);
    }
    const double area = law.cum.back();
    if (!(area > 0.0)) throw ValidationError("tabulated density has zero mass");
    for (auto& f : law.f) f /= area;
    for (auto& c : law.cum) c /= area;
    return ValueDistribution(std::move(law));
  }

  Kind kind() const { return static_cast<Kind>(law_.index()); }
  const auto& law() const { return law_; }

  double lower() const {
    return std::visit(detail::Overload{[](const UniformLaw& u) { return u.lo; },
                               [](const ExponentialLaw&) { return 0.0; },
                               [](const PolynomialLaw& p) { return p.lo; },
                               [](const TabulatedLaw& t) { return t.v.front(); }},
                      law_);
  }

  double upper() const {
    return std::visit(detail::Overload{[](const UniformLaw& u) { return u.hi; },
                               [](const ExponentialLaw&) { return std::numeric_limits<double>::infinity(); },
                               [](const PolynomialLaw& p) { return p.hi; },
                               [](const TabulatedLaw& t) { return t.v.back(); }},
                      law_);
  }

  bool bounded() const { return std::isfinite(upper()); }

  double pdf(double v) const {
    if (!(v >= lower()) || v > upper()) return 0.0;
    return std::visit(detail::Overload{[](const UniformLaw& u) { return 1.0 / (u.hi - u.lo); },
                               [v](const ExponentialLaw& e) { return e.rate * std::exp(-e.rate * v); },
                               [v](const PolynomialLaw& p) { return std::max(0.0, poly_eval(p.coeffs, v)); },
                               [v](const TabulatedLaw& t) { return table_pdf(t, v); }},
                      law_);
  }

  double cdf(double v) const {
    if (std::isnan(v)) return v;
    if (v <= lower()) return 0.0;
    if (v >= upper()) return 1.0;
    return std::visit(detail::Overload{[v](const UniformLaw& u) { return (v - u.lo) / (u.hi - u.lo); },
                               [v](const ExponentialLaw& e) { return -std::expm1(-e.rate * v); },
                               [v](const PolynomialLaw& p) {
                                 const double c = poly_antiderivative(p.coeffs, v) -
                                                  poly_antiderivative(p.coeffs, p.lo);
                                 return std::clamp(c, 0.0, 1.0);
                               },
                               [v](const TabulatedLaw& t) { return table_cdf(t, v); }},
                      law_);
  }

  /// 1 - F(v), computed without cancellation for the exponential law.
  double survival(double v) const {
    if (kind() == Kind::exponential) {
      if (v <= 0.0) return 1.0;
      return std::exp(-std::get<ExponentialLaw>(law_).rate * v);
    }
    return 1.0 - cdf(v);
  }

  /// Interior points where the density is not smooth.
  std::vector<double> kinks() const {
    if (const auto* t = std::get_if<TabulatedLaw>(&law_)) {
      return std::vector<double>(t->v.begin() + 1, t->v.end() - 1);
    }
    return {};
  }

  double quantile(double u) const {
    if (u <= 0.0) return lower();
    return std::visit(
        detail::Overload{[u](const UniformLaw& l) { return l.lo + u * (l.hi - l.lo); },
                 [u](const ExponentialLaw& e) { return -std::log1p(-u) / e.rate; },
                 [u, this](const auto&) {
                   if (u >= 1.0) return upper();
                   return numerics::bisect_root([&](double v) { return cdf(v) - u; }, lower(), upper(),
                                                1e-12);
                 }},
        law_);
  }

  template <class Urbg>
  double sample(Urbg& rng) const {
    return quantile(uniform01(rng));
  }

  /// Analytic E[v^2] for the built-in kinds; tabulated laws are bounded.
  double second_moment() const {
    return std::visit(detail::Overload{[](const UniformLaw& u) {
                                 return (u.hi * u.hi + u.hi * u.lo + u.lo * u.lo) / 3.0;
                               },
                               [](const ExponentialLaw& e) { return 2.0 / (e.rate * e.rate); },
                               [](const PolynomialLaw& p) {
                                 std::vector<double> shifted(p.coeffs.size() + 2, 0.0);
                                 for (std::size_t k = 0; k < p.coeffs.size(); ++k) shifted[k + 2] = p.coeffs[k];
                                 return poly_antiderivative(shifted, p.hi) - poly_antiderivative(shifted, p.lo);
                               },
                               [](const TabulatedLaw& t) { return t.v.back() * t.v.back(); }},
                      law_);
  }

  static double poly_eval(const std::vector<double>& c, double v) {
    double acc = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * v + *it;
    return acc;
  }

  static double poly_antiderivative(const std::vector<double>& c, double v) {
    double acc = 0.0;
    for (std::size_t k = c.size(); k-- > 0;) acc = acc * v + c[k] / static_cast<double>(k + 1);
    return acc * v;
  }

 private:
  using Law = std::variant<UniformLaw, ExponentialLaw, PolynomialLaw, TabulatedLaw>;

  explicit ValueDistribution(Law law) : law_(std::move(law)) {}

  static std::size_t table_segment(const TabulatedLaw& t, double v) {
    const auto it = std::upper_bound(t.v.begin(), t.v.end(), v);
    const auto idx = static_cast<std::size_t>(it - t.v.begin());
    return std::clamp<std::size_t>(idx, 1, t.v.size() - 1) - 1;
  }

  static double table_pdf(const TabulatedLaw& t, double v) {
    const std::size_t i = table_segment(t, v);
    const double w = (v - t.v[i]) / (t.v[i + 1] - t.v[i]);
    return t.f[i] + w * (t.f[i + 1] - t.f[i]);
  }

  static double table_cdf(const TabulatedLaw& t, double v) {
    const std::size_t i = table_segment(t, v);
    const double h = t.v[i + 1] - t.v[i];
    const double dv = v - t.v[i];
    const double c = t.cum[i] + t.f[i] * dv + 0.5 * (t.f[i + 1] - t.f[i]) * dv * dv / h;
    return std::clamp(c, 0.0, 1.0);
  }

  Law law_;
};

/// f(v) / (1 - F(v)).
inline double hazard_rate(const ValueDistribution& d, double v) {
  const double s = d.survival(v);
  if (!(s > 0.0)) throw DomainError("hazard rate undefined where F(v) = 1 (v = " + std::to_string(v) + ")");
  return d.pdf(v) / s;
}

/// v - (1 - F(v)) / f(v).
inline double virtual_value(const ValueDistribution& d, double v) {
  const double f = d.pdf(v);
  if (!(f > 0.0)) throw DomainError("virtual value undefined where f(v) = 0 (v = " + std::to_string(v) + ")");
  return v - d.survival(v) / f;
}

/// Upper end of the interval on which grid-based checks are run: the support
/// top when bounded, otherwise the 1 - 1e-9 quantile.
inline double effective_upper(const ValueDistribution& d) {
  return d.bounded() ? d.upper() : d.quantile(1.0 - 1e-9);
}

/// Monotone hazard rate test on a uniform grid of `grid_points` nodes
/// covering [lower, upper). Successive hazard values may dip by at most
/// 1e-12 (relative to their magnitude when above one).
inline bool is_mhr(const ValueDistribution& d, int grid_points = 1024) {
  if (grid_points < 3) throw ValidationError("is_mhr needs at least 3 grid points");
  const double lo = d.lower();
  const double hi = effective_upper(d);
  double prev = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid_points; ++i) {
    const double v = lo + (hi - lo) * i / grid_points;
    const double s = d.survival(v);
    if (!(s > 0.0)) break;
    const double h = d.pdf(v) / s;
    if (h < prev - 1e-12 * std::max(1.0, std::abs(prev))) return false;
    prev = h;
  }
  return true;
}

/// Integrates a raw integrand h(v) over the support of `d`, splitting at
/// the law's kinks and the given breakpoints.
template <class H>
double integrate_support(const ValueDistribution& d, H&& h, std::vector<double> breaks = {}) {
  auto k = d.kinks();
  breaks.insert(breaks.end(), k.begin(), k.end());
  if (d.bounded()) {
    return numerics::integrate(h, d.lower(), d.upper(), std::move(breaks));
  }
  return numerics::integrate_to_infinity(h, d.lower(), std::move(breaks));
}

/// E[g(v)] for v ~ d.
template <class G>
double expectation(const ValueDistribution& d, G&& g, std::vector<double> breaks = {}) {
  return integrate_support(d, [&](double v) { return d.pdf(v) * g(v); }, std::move(breaks));
}

inline std::string kind_name(ValueDistribution::Kind k) {
  switch (k) {
    case ValueDistribution::Kind::uniform: return "uniform";
    case ValueDistribution::Kind::exponential: return "exponential";
    case ValueDistribution::Kind::polynomial: return "poly";
    case ValueDistribution::Kind::tabulated: return "table";
  }
  return "unknown";
}

}  // namespace calibra
