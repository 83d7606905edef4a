#pragma once

// Monte Carlo execution of the click-through auction under a signaling
// scheme: draw r from the prior, s from the scheme's conditional table,
// values i.i.d. from the value law, then run the auction. Work is split
// over std::thread workers with seeds derived from (seed, worker id);
// per-worker aggregates are merged in worker order, so results depend only
// on (seed, workers, samples).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "calibra/distributions.hpp"
#include "calibra/error.hpp"
#include "calibra/prior.hpp"
#include "calibra/revenue.hpp"
#include "calibra/scheme.hpp"

namespace calibra {

struct SimulationConfig {
  std::size_t samples = 1000000;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool record_clicks = false;
  double reserve = 0.0;

  void validate() const {
    if (samples < 1) throw ValidationError("simulation needs at least one sample");
    if (workers < 1) throw ValidationError("simulation needs at least one worker");
    if (!(reserve >= 0.0)) throw ValidationError("reserve price must be >= 0");
  }
};

struct RoundOutcome {
  std::vector<double> r;
  std::vector<double> s;
  std::vector<double> v;
  std::size_t winner = 0;
  bool sold = false;
  double payment = 0.0;  // per click
  double revenue = 0.0;  // r_winner * payment
  std::optional<bool> clicked;
};

/// Seed of worker `w`'s private generator (splitmix64 finaliser).
inline std::uint64_t worker_seed(std::uint64_t seed, std::size_t worker) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(worker) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Running mean and sum of squared deviations, mergeable in a fixed order.
struct Moments {
  std::size_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }

  void merge(const Moments& o) {
    if (o.count == 0) return;
    if (count == 0) {
      *this = o;
      return;
    }
    const double total = static_cast<double>(count + o.count);
    const double delta = o.mean - mean;
    mean += delta * static_cast<double>(o.count) / total;
    m2 += o.m2 + delta * delta * static_cast<double>(count) * static_cast<double>(o.count) / total;
    count += o.count;
  }

  double variance() const { return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0; }
  double std_error() const { return count > 0 ? std::sqrt(variance() / static_cast<double>(count)) : 0.0; }
};

/// Precomputed two-stage sampling tables for a scheme: a state from the
/// prior, then one of that state's entries in proportion to its mass.
class SchemeSampler {
 public:
  SchemeSampler(const CtrPrior& prior, const SignalingScheme& sch) : prior_(&prior), sch_(&sch) {
    if (sch.bidders() != prior.bidders()) throw ValidationError("scheme and prior disagree on bidder count");
    double acc = 0.0;
    for (const auto& st : prior.states()) {
      acc += st.prob;
      state_cdf_.push_back(acc);
    }
    entries_.resize(prior.size());
    entry_cdf_.resize(prior.size());
    for (std::size_t e = 0; e < sch.size(); ++e) {
      const auto& ent = sch.entries()[e];
      const auto k = prior.find(ent.r);
      if (!k) throw ValidationError("scheme entry uses a CTR vector that is not a prior state");
      if (ent.mass <= 0.0) continue;
      entries_[*k].push_back(e);
      const double prev = entry_cdf_[*k].empty() ? 0.0 : entry_cdf_[*k].back();
      entry_cdf_[*k].push_back(prev + ent.mass);
    }
    for (std::size_t k = 0; k < prior.size(); ++k) {
      if (entries_[k].empty()) throw ValidationError("scheme sends no signal from a prior state");
    }
    // Distinct signal values per bidder, for calibration bookkeeping.
    const std::size_t n = prior.bidders();
    signal_values_.resize(n);
    signal_index_.assign(sch.size(), std::vector<std::size_t>(n, 0));
    for (std::size_t i = 0; i < n; ++i) {
      auto& vals = signal_values_[i];
      for (const auto& ent : sch) vals.push_back(ent.s[i]);
      std::sort(vals.begin(), vals.end());
      vals.erase(std::unique(vals.begin(), vals.end(),
                             [](double a, double b) { return std::abs(a - b) <= kSignalTol; }),
                 vals.end());
      for (std::size_t e = 0; e < sch.size(); ++e) {
        const double v = sch.entries()[e].s[i];
        auto it = std::lower_bound(vals.begin(), vals.end(), v - kSignalTol);
        signal_index_[e][i] = static_cast<std::size_t>(it - vals.begin());
      }
    }
  }

  const CtrPrior& prior() const { return *prior_; }
  const SignalingScheme& scheme() const { return *sch_; }

  /// Index of the sampled scheme entry.
  std::size_t draw(Rng& rng) const {
    const std::size_t k = pick(state_cdf_, uniform01(rng));
    return entries_[k][pick(entry_cdf_[k], uniform01(rng))];
  }

  const std::vector<std::vector<double>>& signal_values() const { return signal_values_; }
  std::size_t signal_index(std::size_t entry, std::size_t bidder) const { return signal_index_[entry][bidder]; }

 private:
  static std::size_t pick(const std::vector<double>& cdf, double u) {
    const double target = u * cdf.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
  }

  const CtrPrior* prior_;
  const SignalingScheme* sch_;
  std::vector<double> state_cdf_;
  std::vector<std::vector<std::size_t>> entries_;
  std::vector<std::vector<double>> entry_cdf_;
  std::vector<std::vector<double>> signal_values_;
  std::vector<std::vector<std::size_t>> signal_index_;
};

inline RoundOutcome run_round(const SchemeSampler& sampler, const ValueDistribution& d, Rng& rng,
                              bool record_clicks = false, double reserve = 0.0) {
  const auto& ent = sampler.scheme().entries()[sampler.draw(rng)];
  RoundOutcome out;
  out.r = ent.r;
  out.s = ent.s;
  out.v.resize(ent.r.size());
  for (double& v : out.v) v = d.sample(rng);
  const auto res = resolve_auction(out.v, out.s, reserve);
  out.winner = res.winner;
  out.sold = res.sold;
  out.payment = res.payment;
  out.revenue = res.sold ? out.r[res.winner] * res.payment : 0.0;
  if (record_clicks) out.clicked = res.sold && uniform01(rng) < out.r[res.winner];
  return out;
}

/// One round with freshly built sampling tables (convenient, not fast).
inline RoundOutcome run_round(const CtrPrior& prior, const SignalingScheme& sch, const ValueDistribution& d, Rng& rng,
                              bool record_clicks = false, double reserve = 0.0) {
  return run_round(SchemeSampler(prior, sch), d, rng, record_clicks, reserve);
}

struct RevenueEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
  double seconds = 0.0;
  std::size_t clicks = 0;       // realised clicks (record_clicks only)
  double realized_revenue = 0.0; // mean of payment * click (record_clicks only)
};

struct EmpiricalCalibration {
  std::size_t bidder = 0;
  double signal = 0.0;
  double mean_ctr = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;

  /// True when the empirical mean is within three standard errors of the
  /// signal value.
  bool consistent() const { return std::abs(mean_ctr - signal) <= 3.0 * std_error + 1e-12; }
};

struct SimulationReport {
  RevenueEstimate revenue;
  std::vector<EmpiricalCalibration> calibration;
};

namespace detail {

struct WorkerAggregate {
  Moments revenue;
  Moments realized;
  std::size_t clicks = 0;
  std::vector<std::vector<Moments>> ctr;  // [bidder][signal index]
};

inline std::vector<std::size_t> split_samples(std::size_t samples, std::size_t workers) {
  std::vector<std::size_t> out(workers, samples / workers);
  for (std::size_t w = 0; w < samples % workers; ++w) ++out[w];
  return out;
}

}  // namespace detail

/// Runs the full simulation: revenue mean/standard error plus per-signal
/// empirical calibration.
inline SimulationReport simulate(const CtrPrior& prior, const SignalingScheme& sch, const ValueDistribution& d,
                                 const SimulationConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const SchemeSampler sampler(prior, sch);
  const std::size_t n = prior.bidders();
  const auto counts = detail::split_samples(cfg.samples, cfg.workers);
  std::vector<detail::WorkerAggregate> agg(cfg.workers);

  auto work = [&](std::size_t w) {
    Rng rng(worker_seed(cfg.seed, w));
    auto& a = agg[w];
    a.ctr.resize(n);
    for (std::size_t i = 0; i < n; ++i) a.ctr[i].resize(sampler.signal_values()[i].size());
    std::vector<double> v(n);
    for (std::size_t t = 0; t < counts[w]; ++t) {
      const std::size_t e = sampler.draw(rng);
      const auto& ent = sch.entries()[e];
      for (double& x : v) x = d.sample(rng);
      const auto res = resolve_auction(v, ent.s, cfg.reserve);
      const double rev = res.sold ? ent.r[res.winner] * res.payment : 0.0;
      a.revenue.add(rev);
      if (cfg.record_clicks) {
        const bool click = res.sold && uniform01(rng) < ent.r[res.winner];
        a.clicks += click ? 1 : 0;
        a.realized.add(click ? res.payment : 0.0);
      }
      for (std::size_t i = 0; i < n; ++i) a.ctr[i][sampler.signal_index(e, i)].add(ent.r[i]);
    }
  };

  if (cfg.workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(cfg.workers);
    for (std::size_t w = 0; w < cfg.workers; ++w) threads.emplace_back(work, w);
    for (auto& t : threads) t.join();
  }

  detail::WorkerAggregate total;
  total.ctr.resize(n);
  for (std::size_t i = 0; i < n; ++i) total.ctr[i].resize(sampler.signal_values()[i].size());
  for (const auto& a : agg) {
    total.revenue.merge(a.revenue);
    total.realized.merge(a.realized);
    total.clicks += a.clicks;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < a.ctr[i].size(); ++j) total.ctr[i][j].merge(a.ctr[i][j]);
    }
  }

  SimulationReport rep;
  rep.revenue.mean = total.revenue.mean;
  rep.revenue.std_error = total.revenue.std_error();
  rep.revenue.samples = total.revenue.count;
  rep.revenue.clicks = total.clicks;
  rep.revenue.realized_revenue = total.realized.mean;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < total.ctr[i].size(); ++j) {
      const auto& m = total.ctr[i][j];
      if (m.count == 0) continue;
      rep.calibration.push_back({i, sampler.signal_values()[i][j], m.mean, m.std_error(), m.count});
    }
  }
  rep.revenue.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

inline RevenueEstimate estimate_revenue(const CtrPrior& prior, const SignalingScheme& sch, const ValueDistribution& d,
                                        const SimulationConfig& cfg) {
  return simulate(prior, sch, d, cfg).revenue;
}

inline std::vector<EmpiricalCalibration> empirical_calibration(const CtrPrior& prior, const SignalingScheme& sch,
                                                               const ValueDistribution& d,
                                                               const SimulationConfig& cfg) {
  return simulate(prior, sch, d, cfg).calibration;
}

/// Expected utility per impression, r_i * (v_i - payment) if bidder i wins,
/// when bidder i submits `bid` instead of its value and everyone else bids
/// truthfully.
inline double utility_with_bid(std::span<const double> v, std::span<const double> s, std::span<const double> r,
                               std::size_t bidder, double bid, double reserve = 0.0) {
  std::vector<double> bids(v.begin(), v.end());
  bids[bidder] = bid;
  const auto res = resolve_auction(bids, s, reserve);
  if (!res.sold || res.winner != bidder) return 0.0;
  return r[bidder] * (v[bidder] - res.payment);
}

}  // namespace calibra
