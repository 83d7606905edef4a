#pragma once

// Signaling schemes as sparse mass tables x(r, s) = lambda(r) pi(s | r),
// calibration and validity audits, revenue evaluation, the geometric
// two-bidder construction, and baseline schemes.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "calibra/distributions.hpp"
#include "calibra/error.hpp"
#include "calibra/prior.hpp"
#include "calibra/ratio.hpp"
#include "calibra/revenue.hpp"

namespace calibra {

/// Tolerance at which two signal (or CTR) coordinates are the same value.
inline constexpr double kSignalTol = 1e-12;

struct SchemeEntry {
  std::vector<double> r;
  std::vector<double> s;
  double mass = 0.0;
};

/// Sparse list of (CTR vector, signal vector, mass) records. Records with
/// the same (r, s) key are merged on insertion.
class SignalingScheme {
 public:
  SignalingScheme() = default;
  explicit SignalingScheme(std::size_t bidders) : n_(bidders) {}

  void add(std::vector<double> r, std::vector<double> s, double mass) {
    if (n_ == 0) n_ = r.size();
    if (r.size() != n_ || s.size() != n_) {
      throw ValidationError("scheme entry has " + std::to_string(r.size()) + "/" + std::to_string(s.size()) +
                            " coordinates, expected " + std::to_string(n_));
    }
    if (!(mass >= 0.0) || !std::isfinite(mass)) throw ValidationError("scheme masses must be finite and >= 0");
    for (auto& e : entries_) {
      if (same_point(e.r, r, kSignalTol) && same_point(e.s, s, kSignalTol)) {
        e.mass += mass;
        return;
      }
    }
    entries_.push_back({std::move(r), std::move(s), mass});
  }

  /// Drops entries whose mass is at most `tol`.
  void prune(double tol = 0.0) {
    std::erase_if(entries_, [tol](const SchemeEntry& e) { return e.mass <= tol; });
  }

  std::size_t bidders() const { return n_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<SchemeEntry>& entries() const { return entries_; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  double total_mass() const {
    double t = 0.0;
    for (const auto& e : entries_) t += e.mass;
    return t;
  }

  /// Total mass sent from states equal to `r`.
  double state_mass(std::span<const double> r) const {
    double t = 0.0;
    for (const auto& e : entries_) {
      if (same_point(e.r, r, kSignalTol)) t += e.mass;
    }
    return t;
  }

 private:
  std::size_t n_ = 0;
  std::vector<SchemeEntry> entries_;
};

/// Calibration residual for one (bidder, signal value):
/// sum over entries with s_i = signal of mass * (r_i - signal).
struct CalibrationResidual {
  std::size_t bidder = 0;
  double signal = 0.0;
  double residual = 0.0;
  double mass = 0.0;
};

inline std::vector<CalibrationResidual> calibration_residuals(const SignalingScheme& sch) {
  std::vector<CalibrationResidual> out;
  for (std::size_t i = 0; i < sch.bidders(); ++i) {
    std::vector<CalibrationResidual> rows;
    for (const auto& e : sch) {
      auto it = std::find_if(rows.begin(), rows.end(),
                             [&](const auto& c) { return std::abs(c.signal - e.s[i]) <= kSignalTol; });
      if (it == rows.end()) {
        rows.push_back({i, e.s[i], 0.0, 0.0});
        it = rows.end() - 1;
      }
      it->residual += e.mass * (e.r[i] - it->signal);
      it->mass += e.mass;
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.signal < b.signal; });
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

inline double max_calibration_residual(const SignalingScheme& sch) {
  double m = 0.0;
  for (const auto& c : calibration_residuals(sch)) m = std::max(m, std::abs(c.residual));
  return m;
}

inline bool is_calibrated(const SignalingScheme& sch, double tol = 1e-9) {
  return max_calibration_residual(sch) <= tol;
}

struct ValidityReport {
  bool valid = true;
  double max_state_error = 0.0;
  std::vector<std::string> problems;
};

/// Checks that every entry's CTR vector is a prior state, that per-state
/// masses reproduce the prior within `mass_tol`, and that signals lie in
/// [r_min, 1].
inline ValidityReport check_validity(const SignalingScheme& sch, const CtrPrior& prior,
                                     double mass_tol = 1e-12) {
  ValidityReport rep;
  const auto fail = [&](std::string msg) {
    rep.valid = false;
    rep.problems.push_back(std::move(msg));
  };
  if (sch.bidders() != prior.bidders()) {
    fail("scheme has " + std::to_string(sch.bidders()) + " bidders, prior has " + std::to_string(prior.bidders()));
    return rep;
  }
  std::vector<double> state_mass(prior.size(), 0.0);
  for (const auto& e : sch) {
    const auto k = prior.find(e.r);
    if (!k) {
      fail("entry uses a CTR vector that is not a prior state");
      continue;
    }
    state_mass[*k] += e.mass;
    for (double v : e.s) {
      if (v < prior.min_ctr() - kSignalTol || v > 1.0 + kSignalTol) {
        fail("signal " + std::to_string(v) + " lies outside [" + std::to_string(prior.min_ctr()) + ", 1]");
      }
    }
  }
  for (std::size_t k = 0; k < prior.size(); ++k) {
    const double err = std::abs(state_mass[k] - prior[k].prob);
    rep.max_state_error = std::max(rep.max_state_error, err);
    if (err > mass_tol) {
      fail("state " + std::to_string(k) + " carries mass " + std::to_string(state_mass[k]) + " instead of " +
           std::to_string(prior[k].prob));
    }
  }
  return rep;
}

/// Sum over entries of mass * R(r, s) (two bidders), with an optional
/// reserve price.
inline double scheme_revenue(const SignalingScheme& sch, const ValueDistribution& d, double reserve = 0.0) {
  if (sch.bidders() != 2) {
    throw ValidationError("analytic scheme revenue needs two bidders; use the simulator for more");
  }
  double total = 0.0;
  for (const auto& e : sch) {
    if (e.mass == 0.0) continue;
    total += e.mass * (reserve > 0.0 ? expected_revenue_reserve(e.r, e.s, reserve, d)
                                     : expected_revenue_two(e.r, e.s, d));
  }
  return total;
}

/// Ratio-relaxed revenue bound: each state is credited the revenue of its
/// best signal ratio, ignoring calibration. Two symmetric bidders.
inline double ratio_relaxed_bound(const CtrPrior& prior, const ValueDistribution& d) {
  if (prior.bidders() != 2) throw ValidationError("ratio-relaxed bound needs two bidders");
  double total = 0.0;
  for (const auto& st : prior.states()) {
    const double hi = std::max(st.r[0], st.r[1]);
    const double lo = std::min(st.r[0], st.r[1]);
    const double l = lo / hi;
    total += st.prob * hi * revenue_at_ratio(l, optimal_ratio(l, d), d);
  }
  return total;
}

/// Everything the geometric construction computes for one mirrored pair
/// {(1, l), (l, 1)}, each state carrying `pair_mass`.
struct ConstructionReport {
  double l = 0.0;
  double x = 1.0;
  int k = 0;
  std::vector<double> sigma;  // sigma_0 .. sigma_K, sigma_K = 1
  std::vector<double> p;      // p_0 .. p_{K-1}, per state
  double z = 0.0;             // per-state mass on (sigma_0, sigma_0)
  double s = std::numeric_limits<double>::infinity();  // S(K, l)
  double pair_mass = 0.5;
  double suboptimal_share = 0.0;  // z / pair_mass = 1 / S(K, l)
  double revenue = std::nan("");
  double upper_bound = std::nan("");
};

struct Construction {
  SignalingScheme scheme;
  ConstructionReport report;
};

/// Geometric construction for CTR states (1, l) and (l, 1) given the
/// optimal ratio x < 1. Signals are sigma_i = x^(K - i) with
/// K = floor(log_x l); state (l, 1) sends (sigma_k, sigma_{k+1}) and state
/// (1, l) sends (sigma_{k+1}, sigma_k) with mass p_k, and both send
/// (sigma_0, sigma_0) with mass z. Revenue fields are left unset.
inline Construction construct_simple_with_ratio(double l, double x, double pair_mass = 0.5) {
  if (!(l > 0.0 && l < 1.0)) throw ValidationError("construction needs 0 < l < 1");
  if (!(x > l)) throw ValidationError("construction needs the optimal ratio to exceed l");
  if (!(x < 1.0)) {
    throw ValidationError("optimal ratio is 1; the no-information scheme is the right construction");
  }
  if (!(pair_mass > 0.0 && pair_mass <= 0.5 + 1e-15)) throw ValidationError("pair mass must lie in (0, 1/2]");

  ConstructionReport rep;
  rep.l = l;
  rep.x = x;
  rep.pair_mass = pair_mass;
  // The guard keeps x^K == l (up to rounding) on the z = 0 side.
  rep.k = static_cast<int>(std::floor(std::log(l) / std::log(x) + 1e-12));
  const int k = rep.k;
  rep.sigma.resize(k + 1);
  for (int i = 0; i <= k; ++i) rep.sigma[i] = std::pow(x, k - i);
  rep.sigma[k] = 1.0;
  const double sigma0 = rep.sigma[0];

  const bool tight = sigma0 - l <= 1e-12;
  if (!tight && !(l + 1.0 - 2.0 * sigma0 > 0.0)) {
    throw NumericalError("construction breaks down: l + 1 - 2 sigma_0 is not positive");
  }
  rep.p.assign(k, 0.0);
  rep.p[0] = 1.0;
  for (int i = 1; i < k; ++i) {
    rep.p[i] = rep.p[i - 1] * (1.0 - rep.sigma[i]) / (rep.sigma[i] - l);
  }
  rep.z = tight ? 0.0 : rep.p[0] * (sigma0 - l) / (l + 1.0 - 2.0 * sigma0);
  double total = rep.z;
  for (double v : rep.p) total += v;
  const double scale = pair_mass / total;
  for (double& v : rep.p) v *= scale;
  rep.z *= scale;
  rep.suboptimal_share = rep.z / pair_mass;
  if (!tight) rep.s = s_quantity_from_ratio(k, l, x);

  Construction out{SignalingScheme(2), rep};
  for (int i = 0; i < k; ++i) {
    out.scheme.add({l, 1.0}, {rep.sigma[i], rep.sigma[i + 1]}, rep.p[i]);
    out.scheme.add({1.0, l}, {rep.sigma[i + 1], rep.sigma[i]}, rep.p[i]);
  }
  if (rep.z > 0.0) {
    out.scheme.add({l, 1.0}, {sigma0, sigma0}, rep.z);
    out.scheme.add({1.0, l}, {sigma0, sigma0}, rep.z);
  }
  return out;
}

/// Geometric construction with x = x(l) for the value law `d`, including
/// the scheme revenue and the ratio-relaxed upper bound of the pair.
inline Construction construct_simple(double l, const ValueDistribution& d, double pair_mass = 0.5) {
  if (!(l > 0.0 && l < 1.0)) throw ValidationError("construction needs 0 < l < 1");
  const double x = optimal_ratio(l, d);
  auto out = construct_simple_with_ratio(l, x, pair_mass);
  out.report.revenue = scheme_revenue(out.scheme, d);
  out.report.upper_bound = 2.0 * pair_mass * revenue_at_ratio(l, x, d);
  return out;
}

/// Single signal s = E[r] sent from every state.
inline SignalingScheme no_information_scheme(const CtrPrior& prior) {
  SignalingScheme sch(prior.bidders());
  const auto mean = prior.mean();
  for (const auto& st : prior.states()) sch.add(st.r, mean, st.prob);
  return sch;
}

/// Signal s = r sent from every state.
inline SignalingScheme full_revelation_scheme(const CtrPrior& prior) {
  SignalingScheme sch(prior.bidders());
  for (const auto& st : prior.states()) sch.add(st.r, st.r, st.prob);
  return sch;
}

/// Per-pair outcome of construct_symmetric. `report` is empty for pairs
/// handled without the geometric construction (x(l) = 1) and for diagonal
/// states.
struct PairConstruction {
  std::vector<double> high_state;  // (h, h l)
  double mass = 0.0;               // per state
  std::optional<ConstructionReport> report;
};

struct SymmetricConstruction {
  SignalingScheme scheme;
  std::vector<PairConstruction> pairs;
  double revenue = 0.0;
  double upper_bound = 0.0;
};

/// Builds the symmetric scheme for an exchangeable two-bidder prior: each
/// mirrored pair {(h, l'), (l', h)} gets the geometric construction for
/// l = l'/h with signals scaled back by h; pairs whose optimal ratio is 1
/// pool to the pair mean; diagonal states send their own CTRs.
inline SymmetricConstruction construct_symmetric(const CtrPrior& prior, const ValueDistribution& d) {
  if (prior.bidders() != 2) throw ValidationError("symmetric construction needs two bidders");
  if (!prior.exchangeable()) throw ValidationError("symmetric construction needs an exchangeable CTR prior");
  SymmetricConstruction out;
  out.scheme = SignalingScheme(2);
  for (const auto& st : prior.states()) {
    const double a = st.r[0];
    const double b = st.r[1];
    if (std::abs(a - b) <= kSignalTol) {
      out.scheme.add(st.r, st.r, st.prob);
      out.pairs.push_back({st.r, st.prob, std::nullopt});
      continue;
    }
    if (a < b) continue;  // handled with its mirror
    const double h = a;
    const double l = b / a;
    const double x = optimal_ratio(l, d);
    PairConstruction pc{st.r, st.prob, std::nullopt};
    if (x >= 1.0 - 1e-12) {
      const double m = 0.5 * (a + b);
      out.scheme.add({a, b}, {m, m}, st.prob);
      out.scheme.add({b, a}, {m, m}, st.prob);
    } else {
      // Build with unit pair mass scale, then rescale masses to the prior.
      auto c = construct_simple_with_ratio(l, x, 0.5);
      const double w = st.prob / 0.5;
      for (const auto& e : c.scheme) {
        out.scheme.add({e.r[0] * h, e.r[1] * h}, {e.s[0] * h, e.s[1] * h}, e.mass * w);
      }
      auto rep = c.report;
      rep.pair_mass = st.prob;
      for (double& v : rep.p) v *= w;
      rep.z *= w;
      rep.revenue = h * w * scheme_revenue(c.scheme, d);
      rep.upper_bound = h * 2.0 * st.prob * revenue_at_ratio(l, x, d);
      pc.report = rep;
    }
    out.pairs.push_back(std::move(pc));
  }
  out.revenue = scheme_revenue(out.scheme, d);
  out.upper_bound = ratio_relaxed_bound(prior, d);
  return out;
}

}  // namespace calibra
