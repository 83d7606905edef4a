#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "calibra/error.hpp"
#include "calibra/simulator.hpp"

using namespace calibra;

namespace {

const auto kUniform = ValueDistribution::uniform(0.0, 1.0);
const auto kExp = ValueDistribution::exponential(1.0);
const auto kPoly = ValueDistribution::polynomial({0.0, 12.0, -12.0}, 0.0, 0.5);

CtrPrior pair_prior(double l) { return CtrPrior({{{1.0, l}, 0.5}, {{l, 1.0}, 0.5}}); }

SimulationConfig config(std::size_t samples, std::uint64_t seed, std::size_t workers = 1) {
  SimulationConfig c;
  c.samples = samples;
  c.seed = seed;
  c.workers = workers;
  return c;
}

void expect_within_three_se(const RevenueEstimate& est, double exact) {
  EXPECT_GT(est.std_error, 0.0);
  EXPECT_LE(std::abs(est.mean - exact), 3.0 * est.std_error)
      << "mean " << est.mean << " exact " << exact << " se " << est.std_error;
}

}  // namespace

TEST(Simulator, SingleRoundArithmetic) {
  // A point-mass scheme pins r and s; check the round's bookkeeping.
  const CtrPrior prior({{{1.0, 0.6}, 1.0}});
  SignalingScheme sch(2);
  sch.add({1.0, 0.6}, {1.0, 0.9}, 1.0);
  Rng rng(5);
  for (int t = 0; t < 1000; ++t) {
    const auto out = run_round(prior, sch, kUniform, rng, true);
    ASSERT_EQ(out.v.size(), 2u);
    const std::size_t w = out.v[0] * 1.0 >= out.v[1] * 0.9 ? 0u : 1u;
    EXPECT_EQ(out.winner, w);
    const std::size_t o = 1 - w;
    const double payment = out.v[o] * out.s[o] / out.s[w];
    EXPECT_NEAR(out.payment, payment, 1e-15);
    EXPECT_NEAR(out.revenue, out.r[w] * payment, 1e-15);
    EXPECT_LE(out.payment, out.v[w] + 1e-15);
    ASSERT_TRUE(out.clicked.has_value());
  }
}

TEST(Simulator, SingleBidderPaysNothing) {
  const CtrPrior prior({{{0.7}, 1.0}});
  const auto sch = full_revelation_scheme(prior);
  const auto est = estimate_revenue(prior, sch, kUniform, config(1000, 1));
  EXPECT_EQ(est.mean, 0.0);
  SimulationConfig c = config(20000, 2);
  c.reserve = 0.4;
  // With a reserve the lone bidder pays it whenever v >= 0.4.
  const auto with_reserve = estimate_revenue(prior, sch, kUniform, c);
  expect_within_three_se(with_reserve, 0.7 * 0.4 * 0.6);
}

TEST(Simulator, MatchesAnalyticRevenue) {
  const auto prior = pair_prior(0.6);
  const auto geometric = construct_simple(0.6, kUniform).scheme;
  expect_within_three_se(estimate_revenue(prior, geometric, kUniform, config(1000000, 7, 2)),
                         scheme_revenue(geometric, kUniform));
  const auto full = full_revelation_scheme(prior);
  expect_within_three_se(estimate_revenue(prior, full, kUniform, config(400000, 8)), scheme_revenue(full, kUniform));
  const auto none = no_information_scheme(prior);
  expect_within_three_se(estimate_revenue(prior, none, kExp, config(400000, 9)), scheme_revenue(none, kExp));
  expect_within_three_se(estimate_revenue(prior, full, kPoly, config(200000, 10)), scheme_revenue(full, kPoly));
}

TEST(Simulator, ThreeBidderExponential) {
  const CtrPrior prior({{{1.0, 1.0, 1.0}, 1.0}});
  const auto est = estimate_revenue(prior, full_revelation_scheme(prior), kExp, config(1000000, 11, 4));
  expect_within_three_se(est, 5.0 / 6.0);
}

TEST(Simulator, ReserveMatchesAnalyticRevenue) {
  const auto prior = pair_prior(0.6);
  const auto geometric = construct_simple(0.6, kUniform).scheme;
  SimulationConfig c = config(1000000, 12, 2);
  c.reserve = 0.3;
  expect_within_three_se(estimate_revenue(prior, geometric, kUniform, c), scheme_revenue(geometric, kUniform, 0.3));
}

TEST(Simulator, DeterministicForFixedSeedAndWorkers) {
  const auto prior = pair_prior(0.6);
  const auto sch = construct_simple(0.6, kUniform).scheme;
  for (std::size_t workers : {1u, 3u}) {
    const auto a = simulate(prior, sch, kUniform, config(100001, 99, workers));
    const auto b = simulate(prior, sch, kUniform, config(100001, 99, workers));
    EXPECT_EQ(a.revenue.mean, b.revenue.mean);
    EXPECT_EQ(a.revenue.std_error, b.revenue.std_error);
    EXPECT_EQ(a.revenue.samples, 100001u);
    ASSERT_EQ(a.calibration.size(), b.calibration.size());
    for (std::size_t k = 0; k < a.calibration.size(); ++k) {
      EXPECT_EQ(a.calibration[k].mean_ctr, b.calibration[k].mean_ctr);
      EXPECT_EQ(a.calibration[k].count, b.calibration[k].count);
    }
  }
  const auto other = simulate(prior, sch, kUniform, config(100001, 100));
  EXPECT_NE(other.revenue.mean, simulate(prior, sch, kUniform, config(100001, 99)).revenue.mean);
  EXPECT_NE(worker_seed(1, 0), worker_seed(1, 1));
}

TEST(Simulator, EmpiricalCalibration) {
  const auto prior = pair_prior(0.6);
  const auto full = empirical_calibration(prior, full_revelation_scheme(prior), kUniform, config(100000, 21));
  ASSERT_EQ(full.size(), 4u);
  for (const auto& c : full) {
    EXPECT_EQ(c.mean_ctr, c.signal);
    EXPECT_EQ(c.std_error, 0.0);
    EXPECT_TRUE(c.consistent());
  }

  const auto con = construct_simple(0.6, kUniform);
  const double sigma0 = con.report.sigma.front();
  const auto geometric = empirical_calibration(prior, con.scheme, kUniform, config(1000000, 22));
  bool saw_pool = false;
  for (const auto& c : geometric) {
    EXPECT_TRUE(c.consistent()) << "bidder " << c.bidder << " signal " << c.signal << " mean " << c.mean_ctr;
    if (std::abs(c.signal - sigma0) < 1e-12) {
      saw_pool = true;
      EXPECT_GT(c.count, 0u);
    }
  }
  EXPECT_TRUE(saw_pool);

  SignalingScheme wrong(2);
  wrong.add({1.0, 0.6}, {0.7, 0.7}, 0.5);
  wrong.add({0.6, 1.0}, {0.7, 0.7}, 0.5);
  const auto flagged = empirical_calibration(prior, wrong, kUniform, config(100000, 23));
  ASSERT_EQ(flagged.size(), 2u);
  for (const auto& c : flagged) {
    EXPECT_NEAR(c.mean_ctr, 0.8, 0.01);
    EXPECT_FALSE(c.consistent());
  }
}

TEST(Simulator, ClicksMatchCtrOnAverage) {
  const auto prior = pair_prior(0.6);
  const auto sch = construct_simple(0.6, kUniform).scheme;
  SimulationConfig c = config(400000, 31);
  c.record_clicks = true;
  const auto rep = simulate(prior, sch, kUniform, c);
  EXPECT_GT(rep.revenue.clicks, 0u);
  // Per-click payment times realised click averages to the expected revenue.
  EXPECT_NEAR(rep.revenue.realized_revenue, rep.revenue.mean, 6.0 * rep.revenue.std_error + 2e-3);
}

TEST(Simulator, TruthfulBiddingIsOptimal) {
  const auto prior = pair_prior(0.6);
  const auto sch = construct_simple(0.6, kUniform).scheme;
  const SchemeSampler sampler(prior, sch);
  Rng rng(41);
  const std::vector<double> shades{0.5, 0.8, 0.9, 1.1, 1.25, 2.0};
  std::vector<double> gain(shades.size(), 0.0);
  const int n = 100000;
  for (int t = 0; t < n; ++t) {
    const auto& e = sch.entries()[sampler.draw(rng)];
    const std::vector<double> v{kUniform.sample(rng), kUniform.sample(rng)};
    for (std::size_t bidder = 0; bidder < 2; ++bidder) {
      const double truthful = utility_with_bid(v, e.s, e.r, bidder, v[bidder]);
      for (std::size_t k = 0; k < shades.size(); ++k) {
        const double dev = utility_with_bid(v, e.s, e.r, bidder, v[bidder] * shades[k]);
        // Pointwise: no deviation ever beats truthful bidding.
        EXPECT_LE(dev, truthful + 1e-15);
        gain[k] += dev - truthful;
      }
    }
  }
  for (double g : gain) EXPECT_LE(g, 0.0);
}

TEST(Simulator, RejectsBadConfigurations) {
  const auto prior = pair_prior(0.6);
  const auto sch = full_revelation_scheme(prior);
  EXPECT_THROW(simulate(prior, sch, kUniform, config(0, 1)), ValidationError);
  EXPECT_THROW(simulate(prior, sch, kUniform, config(10, 1, 0)), ValidationError);
  SimulationConfig c = config(10, 1);
  c.reserve = -1.0;
  EXPECT_THROW(simulate(prior, sch, kUniform, c), ValidationError);
}
