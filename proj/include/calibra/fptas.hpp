#pragma once

// Discretised signaling LP. Each bidder's signal range [lo_i, hi_i] is cut
// into steps of length eps * (hi_i - lo_i), the midpoint and every CTR
// value are added, and the design problem becomes an LP over the masses
// x(r, s) for prior states r and grid signal vectors s:
//   maximise   sum x(r, s) R(r, s)
//   subject to sum_s x(r, s) = lambda(r)                          per state
//              sum_{(r, s): s_i = g} x(r, s) (r_i - g) = 0         per (i, g)
//              x >= 0.
// round_and_repair maps an arbitrary calibrated scheme onto the grid: it
// reserves a fraction of every state's mass, rounds signals toward the
// midpoint, repairs each broken calibration row with mass from states at
// the extreme CTR, and returns unused reserve as full-revelation mass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "calibra/diagnostics.hpp"
#include "calibra/distributions.hpp"
#include "calibra/error.hpp"
#include "calibra/lp.hpp"
#include "calibra/prior.hpp"
#include "calibra/revenue.hpp"
#include "calibra/scheme.hpp"

namespace calibra {

struct SignalGrid {
  double eps = 0.0;
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<double> step;
  std::vector<std::vector<double>> values;  // per bidder, sorted, duplicate-free

  std::size_t bidders() const { return values.size(); }
  const std::vector<double>& operator[](std::size_t i) const { return values[i]; }
  double midpoint(std::size_t i) const { return 0.5 * (lo[i] + hi[i]); }

  /// Product of the per-bidder grid sizes.
  std::size_t signal_count() const {
    std::size_t c = 1;
    for (const auto& v : values) c *= v.size();
    return c;
  }

  /// Index of `v` in bidder i's grid (within 1e-12), if present.
  std::optional<std::size_t> find(std::size_t i, double v) const {
    const auto& g = values[i];
    auto it = std::lower_bound(g.begin(), g.end(), v - kSignalTol);
    if (it != g.end() && std::abs(*it - v) <= kSignalTol) return static_cast<std::size_t>(it - g.begin());
    return std::nullopt;
  }
};

/// Clamps eps into (0, 1/2], warning when a larger value is supplied.
inline double checked_epsilon(double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw ValidationError("epsilon must be positive");
  if (eps > 0.5) {
    warn("epsilon " + std::to_string(eps) + " exceeds 1/2; clamped to 0.5");
    return 0.5;
  }
  return eps;
}

inline SignalGrid build_grid(const CtrPrior& prior, double eps) {
  eps = checked_epsilon(eps);
  SignalGrid g;
  g.eps = eps;
  const std::size_t n = prior.bidders();
  for (std::size_t i = 0; i < n; ++i) {
    const double lo = prior.bidder_min(i);
    const double hi = prior.bidder_max(i);
    g.lo.push_back(lo);
    g.hi.push_back(hi);
    g.step.push_back(eps * (hi - lo));
    // (value, exact?) — exact points win when two candidates coincide.
    std::vector<std::pair<double, bool>> pts;
    pts.emplace_back(lo, true);
    pts.emplace_back(hi, true);
    if (hi - lo > kSignalTol) {
      pts.emplace_back(0.5 * (lo + hi), true);
      // k * eps is formed before scaling so halving eps reproduces every
      // existing node bit for bit.
      for (std::size_t k = 1;; ++k) {
        const double t = static_cast<double>(k) * eps;
        if (t >= 1.0 - 1e-12) break;
        pts.emplace_back(lo + (hi - lo) * t, false);
      }
    }
    for (const auto& st : prior.states()) pts.emplace_back(st.r[i], true);
    std::sort(pts.begin(), pts.end());
    std::vector<double> vals;
    bool last_exact = false;
    for (const auto& [v, exact] : pts) {
      if (!vals.empty() && v - vals.back() <= kSignalTol) {
        if (exact && !last_exact) {
          vals.back() = v;
          last_exact = true;
        }
        continue;
      }
      vals.push_back(v);
      last_exact = exact;
    }
    g.values.push_back(std::move(vals));
  }
  return g;
}

/// Options shared by the LP-based solvers.
struct FptasOptions {
  double reserve = 0.0;
  /// Monte Carlo sample size and seed for objective coefficients when n >= 3.
  std::size_t mc_samples = 1000000;
  std::uint64_t mc_seed = 0x5eed5eedULL;
  SimplexOptions simplex{};
};

/// The assembled LP together with the meaning of each variable.
struct SignalingLp {
  LpProblem lp;
  SignalGrid grid;
  std::vector<std::size_t> state;                  // prior state of each variable
  std::vector<std::vector<std::size_t>> signal;    // grid indices per bidder
  std::size_t mass_rows = 0;

  std::vector<double> signal_vector(std::size_t var) const {
    std::vector<double> s(signal[var].size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = grid[i][signal[var][i]];
    return s;
  }
};

inline SignalingLp build_lp(const CtrPrior& prior, const ValueDistribution& d, const SignalGrid& grid,
                            const FptasOptions& opt = {}) {
  const std::size_t n = prior.bidders();
  if (grid.bidders() != n) throw ValidationError("grid and prior disagree on the number of bidders");
  for (const auto& g : grid.values) {
    if (g.empty()) throw ValidationError("signal grid is empty");
  }
  if (!(opt.reserve >= 0.0)) throw ValidationError("reserve price must be >= 0");

  SignalingLp out;
  out.grid = grid;
  const std::size_t cells = grid.signal_count();
  const std::size_t vars = prior.size() * cells;
  std::size_t cal_rows = 0;
  std::vector<std::size_t> row_offset(n);
  for (std::size_t i = 0; i < n; ++i) {
    row_offset[i] = prior.size() + cal_rows;
    cal_rows += grid[i].size();
  }
  out.mass_rows = prior.size();
  const std::size_t rows = prior.size() + cal_rows;
  out.lp.objective = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vars));
  out.lp.constraints = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(vars));
  out.lp.rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows));
  out.state.reserve(vars);
  out.signal.reserve(vars);

  std::vector<double> mc_values;
  if (n != 2) mc_values = sample_values(d, n, opt.mc_samples, opt.mc_seed);

  std::vector<std::size_t> idx(n, 0);
  std::vector<double> s(n);
  for (std::size_t k = 0; k < prior.size(); ++k) {
    const auto& r = prior[k].r;
    out.lp.rhs(static_cast<Eigen::Index>(k)) = prior[k].prob;
    std::fill(idx.begin(), idx.end(), 0);
    for (std::size_t c = 0; c < cells; ++c) {
      const auto var = static_cast<Eigen::Index>(out.state.size());
      for (std::size_t i = 0; i < n; ++i) s[i] = grid[i][idx[i]];
      double coef = 0.0;
      if (n == 2) {
        coef = opt.reserve > 0.0 ? expected_revenue_reserve(r, s, opt.reserve, d) : expected_revenue_two(r, s, d);
      } else {
        coef = revenue_on_sample(r, s, mc_values, opt.reserve);
      }
      out.lp.objective(var) = coef;
      out.lp.constraints(static_cast<Eigen::Index>(k), var) = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        out.lp.constraints(static_cast<Eigen::Index>(row_offset[i] + idx[i]), var) = r[i] - s[i];
      }
      out.state.push_back(k);
      out.signal.push_back(idx);
      // Odometer increment over the product grid (last bidder fastest).
      for (std::size_t i = n; i-- > 0;) {
        if (++idx[i] < grid[i].size()) break;
        idx[i] = 0;
      }
    }
  }
  return out;
}

struct FptasResult {
  SignalingScheme scheme;
  double objective = 0.0;
  SignalGrid grid;
  std::size_t variables = 0;
  std::size_t rows = 0;
  std::size_t iterations = 0;
  double max_calibration_residual = 0.0;
  double solve_ms = 0.0;
};

/// Converts an LP solution to a scheme: masses at or below 1e-15 are
/// dropped and each state's masses are rescaled to reproduce its prior
/// probability exactly.
inline SignalingScheme scheme_from_lp(const CtrPrior& prior, const SignalingLp& slp, const Eigen::VectorXd& x) {
  std::vector<double> state_total(prior.size(), 0.0);
  for (Eigen::Index v = 0; v < x.size(); ++v) {
    if (x(v) > 1e-15) state_total[slp.state[v]] += x(v);
  }
  SignalingScheme sch(prior.bidders());
  for (Eigen::Index v = 0; v < x.size(); ++v) {
    if (!(x(v) > 1e-15)) continue;
    const std::size_t k = slp.state[v];
    sch.add(prior[k].r, slp.signal_vector(v), x(v) * prior[k].prob / state_total[k]);
  }
  return sch;
}

/// Builds the grid and LP, solves it, and returns the optimal grid scheme.
/// Objective coefficients include the reserve price in `opt`.
inline FptasResult fptas_solve(const CtrPrior& prior, const ValueDistribution& d, double eps,
                               const FptasOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  FptasResult res;
  res.grid = build_grid(prior, eps);
  const auto slp = build_lp(prior, d, res.grid, opt);
  const auto sol = solve_lp(slp.lp, opt.simplex);
  res.variables = slp.lp.variables();
  res.rows = slp.lp.rows();
  res.iterations = sol.iterations;
  switch (sol.status) {
    case LpStatus::optimal: break;
    case LpStatus::iteration_limit:
      throw IterationLimitError("simplex hit its iteration limit after " + std::to_string(sol.iterations) +
                                " pivots");
    default:
      throw NumericalError("signaling LP reported " + status_name(sol.status) +
                           "; full revelation should always be feasible");
  }
  res.scheme = scheme_from_lp(prior, slp, sol.x);
  double obj = 0.0;
  for (Eigen::Index v = 0; v < sol.x.size(); ++v) {
    if (sol.x(v) > 1e-15) obj += slp.lp.objective(v) * sol.x(v);
  }
  res.objective = obj;
  res.max_calibration_residual = max_calibration_residual(res.scheme);
  res.solve_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

inline FptasResult fptas_solve_reserve(const CtrPrior& prior, const ValueDistribution& d, double eps, double reserve,
                                       FptasOptions opt = {}) {
  opt.reserve = reserve;
  return fptas_solve(prior, d, eps, opt);
}

struct RepairResult {
  SignalingScheme scheme;
  SignalGrid grid;
  double reservation = 0.0;   // fraction of every state's mass set aside
  double repair_mass = 0.0;   // total mass moved into repair entries
  double returned_mass = 0.0; // unused reserve sent back as s = r
  std::size_t repaired_rows = 0;
};

namespace detail {

/// Rounds a signal coordinate onto bidder i's grid: values on the grid are
/// kept, values above the midpoint go down, values at or below go up.
inline double round_signal(const SignalGrid& grid, std::size_t i, double v) {
  if (const auto k = grid.find(i, v)) return grid[i][*k];
  const auto& g = grid[i];
  if (v > grid.midpoint(i)) {
    auto it = std::upper_bound(g.begin(), g.end(), v);
    if (it == g.begin()) return g.front();
    return *(it - 1);
  }
  auto it = std::lower_bound(g.begin(), g.end(), v);
  if (it == g.end()) return g.back();
  return *it;
}

struct RepairAttempt {
  bool feasible = false;
  SignalingScheme scheme;
  double repair_mass = 0.0;
  double returned_mass = 0.0;
  std::size_t repaired_rows = 0;
};

inline RepairAttempt try_repair(const SignalingScheme& rounded, const CtrPrior& prior, const SignalGrid& grid,
                                double theta) {
  const std::size_t n = prior.bidders();
  RepairAttempt out;
  out.scheme = SignalingScheme(n);
  for (const auto& e : rounded) out.scheme.add(e.r, e.s, (1.0 - theta) * e.mass);

  std::vector<double> reserve(prior.size());
  for (std::size_t k = 0; k < prior.size(); ++k) reserve[k] = theta * prior[k].prob;

  const auto residuals = calibration_residuals(out.scheme);
  for (const auto& row : residuals) {
    const std::size_t i = row.bidder;
    const double g = row.signal;
    const double e = row.residual;
    if (std::abs(e) <= 1e-15) continue;
    // Positive residual: add mass whose CTR sits below g (donors at lo_i);
    // negative: mass whose CTR sits above g (donors at hi_i).
    const double donor_ctr = e > 0.0 ? grid.lo[i] : grid.hi[i];
    const double gap = e > 0.0 ? g - donor_ctr : donor_ctr - g;
    if (!(gap > kSignalTol)) return out;  // cannot be repaired from the extremes
    double need = std::abs(e) / gap;
    std::vector<std::size_t> donors;
    for (std::size_t k = 0; k < prior.size(); ++k) {
      if (std::abs(prior[k].r[i] - donor_ctr) <= kSignalTol) donors.push_back(k);
    }
    if (donors.empty()) {
      throw ValidationError("prior has no state with the extreme CTR needed for calibration repair");
    }
    ++out.repaired_rows;
    while (need > 0.0) {
      const auto best = *std::max_element(donors.begin(), donors.end(),
                                          [&](std::size_t a, std::size_t b) { return reserve[a] < reserve[b]; });
      const double take = std::min(need, reserve[best]);
      if (!(take > 0.0)) return out;
      auto s = prior[best].r;
      s[i] = g;
      out.scheme.add(prior[best].r, s, take);
      reserve[best] -= take;
      need -= take;
      out.repair_mass += take;
      if (need <= 1e-15 * std::max(1.0, std::abs(e))) break;
    }
  }
  for (std::size_t k = 0; k < prior.size(); ++k) {
    if (reserve[k] > 0.0) {
      out.scheme.add(prior[k].r, prior[k].r, reserve[k]);
      out.returned_mass += reserve[k];
    }
  }
  out.feasible = true;
  return out;
}

}  // namespace detail

/// Maps a valid calibrated scheme onto the eps-grid while keeping it
/// calibrated. The reserved fraction is 4 eps; when nothing needs repair it
/// is 0, and when 4 eps is not enough the smallest sufficient fraction is
/// found by bisection.
inline RepairResult round_and_repair(const SignalingScheme& sch, double eps, const CtrPrior& prior) {
  eps = checked_epsilon(eps);
  const auto validity = check_validity(sch, prior, 1e-9);
  if (!validity.valid) throw ValidationError("round_and_repair needs a valid scheme: " + validity.problems.front());
  RepairResult res;
  res.grid = build_grid(prior, eps);

  SignalingScheme rounded(prior.bidders());
  for (const auto& e : sch) {
    auto s = e.s;
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = detail::round_signal(res.grid, i, s[i]);
    rounded.add(e.r, std::move(s), e.mass);
  }

  // Nothing to repair when rounding left every row as calibrated as before.
  const double before = max_calibration_residual(sch);
  if (max_calibration_residual(rounded) <= std::max(1e-15, before)) {
    res.scheme = std::move(rounded);
    return res;
  }

  auto accept = [&](double theta, detail::RepairAttempt&& a) {
    res.scheme = std::move(a.scheme);
    res.reservation = theta;
    res.repair_mass = a.repair_mass;
    res.returned_mass = a.returned_mass;
    res.repaired_rows = a.repaired_rows;
    return res;
  };

  const double theta0 = std::min(1.0, 4.0 * eps);
  if (auto a = detail::try_repair(rounded, prior, res.grid, theta0); a.feasible) return accept(theta0, std::move(a));

  double lo = theta0;
  double hi = 1.0;
  auto best = detail::try_repair(rounded, prior, res.grid, hi);
  if (!best.feasible) throw NumericalError("calibration repair failed even with the whole mass reserved");
  while (hi - lo > 1e-9) {
    const double mid = 0.5 * (lo + hi);
    auto a = detail::try_repair(rounded, prior, res.grid, mid);
    if (a.feasible) {
      hi = mid;
      best = std::move(a);
    } else {
      lo = mid;
    }
  }
  warn("reservation 4*eps was insufficient for calibration repair; used " + std::to_string(hi));
  return accept(hi, std::move(best));
}

}  // namespace calibra
