#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "calibra/error.hpp"
#include "calibra/ratio.hpp"
#include "calibra/scheme.hpp"

using namespace calibra;

namespace {

const auto kUniform = ValueDistribution::uniform(0.0, 1.0);
const auto kExp = ValueDistribution::exponential(1.0);
const auto kPoly = ValueDistribution::polynomial({0.0, 12.0, -12.0}, 0.0, 0.5);

CtrPrior pair_prior(double l) { return CtrPrior({{{1.0, l}, 0.5}, {{l, 1.0}, 0.5}}); }

double max_abs_residual(const SignalingScheme& sch) {
  double m = 0.0;
  for (const auto& r : calibration_residuals(sch)) m = std::max(m, std::abs(r.residual));
  return m;
}

}  // namespace

TEST(Scheme, FullRevelationIsCalibrated) {
  const auto sch = full_revelation_scheme(pair_prior(0.6));
  EXPECT_EQ(sch.size(), 2u);
  for (const auto& e : sch) EXPECT_DOUBLE_EQ(e.mass, 0.5);
  for (const auto& r : calibration_residuals(sch)) EXPECT_EQ(r.residual, 0.0);
  EXPECT_TRUE(check_validity(sch, pair_prior(0.6)).valid);
}

TEST(Scheme, GeometricSchemeIsCalibrated) {
  const auto c = construct_simple(0.6, kUniform);
  EXPECT_LE(max_abs_residual(c.scheme), 1e-12);
  EXPECT_TRUE(check_validity(c.scheme, pair_prior(0.6)).valid);
}

TEST(Scheme, PooledWrongSignalIsMiscalibrated) {
  SignalingScheme sch(2);
  sch.add({1.0, 0.6}, {0.7, 0.7}, 0.5);
  sch.add({0.6, 1.0}, {0.7, 0.7}, 0.5);
  const auto res = calibration_residuals(sch);
  ASSERT_EQ(res.size(), 2u);
  for (const auto& r : res) {
    EXPECT_DOUBLE_EQ(r.signal, 0.7);
    EXPECT_NEAR(std::abs(r.residual), 0.1, 1e-12);
  }
  EXPECT_FALSE(is_calibrated(sch));
}

TEST(Scheme, RevenueOracleValues) {
  const auto c = construct_simple(0.6, kUniform);
  EXPECT_NEAR(scheme_revenue(c.scheme, kUniform), 0.2698, 1e-4);
  EXPECT_NEAR(scheme_revenue(c.scheme, kUniform), 0.2698885, 1e-7);  // regression constant
  EXPECT_NEAR(scheme_revenue(no_information_scheme(pair_prior(0.6)), kUniform), 1.6 / 6.0, 1e-12);
}

TEST(Scheme, DroppingThePooledSignalBreaksCalibration) {
  const auto c = construct_simple(0.6, kUniform);
  const double sigma0 = c.report.sigma.front();
  SignalingScheme cut(2);
  for (const auto& e : c.scheme) {
    if (e.s[0] == sigma0 && e.s[1] == sigma0) continue;
    cut.add(e.r, e.s, e.mass / (1.0 - 2.0 * c.report.z));
  }
  EXPECT_TRUE(std::isfinite(scheme_revenue(cut, kUniform)));
  EXPECT_FALSE(is_calibrated(cut));
}

TEST(Scheme, GeometricConstructionAtSixTenths) {
  const auto c = construct_simple(0.6, kUniform);
  const auto& r = c.report;
  ASSERT_EQ(r.k, 4);
  const double expected[] = {0.6561, 0.729, 0.81, 0.9, 1.0};
  for (int i = 0; i <= 4; ++i) EXPECT_NEAR(r.sigma[i], expected[i], 1e-9);
  EXPECT_NEAR(r.z, 0.0167, 5e-4);
  EXPECT_NEAR(r.z, 0.0167177, 1e-7);  // regression constant
  EXPECT_NEAR(r.revenue, 0.2698, 2e-4);
  EXPECT_NEAR(r.upper_bound, 0.27, 1e-12);
  EXPECT_LT((r.upper_bound - r.revenue) / r.upper_bound, 0.00075);
  EXPECT_NEAR(r.s, 29.9085, 1e-3);
  EXPECT_NEAR(r.z * r.s, 0.5, 1e-12);
}

TEST(Scheme, SecondConstructionExample) {
  const auto c = construct_simple(0.2, kUniform);
  EXPECT_EQ(c.report.k, 7);
  EXPECT_NEAR(c.report.suboptimal_share, 1.5e-5, 5e-6);
  EXPECT_LE(max_abs_residual(c.scheme), 1e-12);
}

TEST(Scheme, TightFixedPointHasNoSuboptimalMass) {
  // Fixed point of x(l)^5 = l, with l then taken as x^5 in floating point so
  // that sigma_0 = l holds exactly: z = 0 and every signal pair sits at x.
  const double l5 = RatioAnalysis(kUniform).intersection_point(5);
  const double x = (3.0 + l5) / 4.0;
  const double l = std::pow(x, 5);
  EXPECT_NEAR(l, l5, 1e-9);
  const auto c = construct_simple_with_ratio(l, x);
  EXPECT_EQ(c.report.k, 5);
  EXPECT_EQ(c.report.z, 0.0);
  for (const auto& e : c.scheme) {
    const double ratio = std::min(e.s[0], e.s[1]) / std::max(e.s[0], e.s[1]);
    EXPECT_NEAR(ratio, x, 1e-12);
  }
  EXPECT_LE(max_abs_residual(c.scheme), 1e-9);
}

TEST(Scheme, SuboptimalMassSignAndCalibrationAcrossL) {
  for (int i = 1; i < 40; ++i) {
    const double l = i / 40.0;
    for (const auto* d : {&kUniform, &kPoly}) {
      const auto c = construct_simple(l, *d);
      EXPECT_GE(c.report.z, 0.0);
      if (c.report.sigma.front() > l + 1e-12) {
        EXPECT_GT(c.report.z, 0.0);
      }
      EXPECT_LE(max_abs_residual(c.scheme), 1e-12) << "l=" << l;
      EXPECT_TRUE(check_validity(c.scheme, pair_prior(l)).valid);
    }
  }
}

TEST(Scheme, RevenueDecomposition) {
  for (double l : {0.2, 0.45, 0.6, 0.85}) {
    const auto c = construct_simple(l, kUniform);
    const double z = c.report.z;  // per state; both states together carry 2z
    const double opt = revenue_at_ratio(l, c.report.x, kUniform);
    const double pooled = revenue_at_ratio(l, 1.0, kUniform);  // R depends on s only through the ratio
    EXPECT_NEAR(c.report.revenue, (1.0 - 2.0 * z) * opt + 2.0 * z * pooled, 1e-9) << "l=" << l;
  }
}

TEST(Scheme, ConstructionMeetsWorstCaseBound) {
  for (const auto* d : {&kUniform, &kPoly}) {
    const double z_star = RatioAnalysis(*d).worst_case_bound().z_star;
    for (int i = 1; i <= 16; ++i) {
      const double l = i / 17.0;
      const auto c = construct_simple(l, *d);
      EXPECT_GE(c.report.revenue, (1.0 - z_star) * c.report.upper_bound - 1e-12) << "l=" << l;
    }
  }
}

TEST(Scheme, EightNinthsOrdering) {
  for (int i = 1; i < 20; ++i) {
    const double l = i / 20.0;
    const auto prior = pair_prior(l);
    const auto sym = construct_symmetric(prior, kUniform);
    const double noinfo = scheme_revenue(no_information_scheme(prior), kUniform);
    EXPECT_GE(sym.revenue, noinfo - 1e-12);
    EXPECT_GE(noinfo, 8.0 / 9.0 * sym.upper_bound - 1e-12);
  }
}

TEST(Scheme, SymmetricReproducesSimple) {
  const auto sym = construct_symmetric(pair_prior(0.6), kUniform);
  const auto simple = construct_simple(0.6, kUniform);
  EXPECT_EQ(sym.scheme.size(), simple.scheme.size());
  EXPECT_NEAR(sym.revenue, simple.report.revenue, 1e-12);
  EXPECT_NEAR(sym.upper_bound, 0.27, 1e-12);
  ASSERT_EQ(sym.pairs.size(), 1u);
  ASSERT_TRUE(sym.pairs[0].report.has_value());
  EXPECT_NEAR(sym.pairs[0].report->z, simple.report.z, 1e-15);
}

TEST(Scheme, SymmetricDiagonalState) {
  const CtrPrior prior({{{1.0, 1.0}, 1.0}});
  const auto sym = construct_symmetric(prior, kUniform);
  ASSERT_EQ(sym.scheme.size(), 1u);
  EXPECT_EQ(sym.scheme.entries()[0].s, (std::vector<double>{1.0, 1.0}));
  const std::vector<double> one{1.0, 1.0};
  EXPECT_NEAR(sym.revenue, expected_revenue_two(one, one, kUniform), 1e-15);
}

TEST(Scheme, SymmetricTwoPairs) {
  const CtrPrior prior({{{1.0, 0.6}, 0.25}, {{0.6, 1.0}, 0.25}, {{1.0, 0.2}, 0.25}, {{0.2, 1.0}, 0.25}});
  const auto sym = construct_symmetric(prior, kUniform);
  EXPECT_LE(max_abs_residual(sym.scheme), 1e-9);
  EXPECT_TRUE(check_validity(sym.scheme, prior).valid);
  ASSERT_EQ(sym.pairs.size(), 2u);
  double weighted = 0.0;
  for (const auto& p : sym.pairs) {
    ASSERT_TRUE(p.report.has_value());
    const double l = p.high_state[1] / p.high_state[0];
    const auto own = construct_simple(l, kUniform);
    EXPECT_NEAR(p.report->z, own.report.z * 0.5, 1e-15);  // half the pair mass
    EXPECT_NEAR(p.report->s, own.report.s, 1e-9);
    weighted += p.report->revenue;
  }
  EXPECT_NEAR(sym.revenue, weighted, 1e-12);
}

TEST(Scheme, SymmetricExponentialPools) {
  const CtrPrior prior({{{1.0, 0.5}, 0.5}, {{0.5, 1.0}, 0.5}});
  const auto sym = construct_symmetric(prior, kExp);
  ASSERT_EQ(sym.scheme.size(), 2u);
  for (const auto& e : sym.scheme) EXPECT_EQ(e.s, (std::vector<double>{0.75, 0.75}));
  EXPECT_NEAR(sym.revenue, 0.375, 1e-12);
}

TEST(Scheme, NoInformationOracleValues) {
  const auto sch = no_information_scheme(CtrPrior({{{1.0, 0.5}, 0.5}, {{0.5, 1.0}, 0.5}}));
  for (const auto& e : sch) EXPECT_EQ(e.s, (std::vector<double>{0.75, 0.75}));
  EXPECT_NEAR(scheme_revenue(sch, kExp), 0.375, 1e-12);
  const auto single = no_information_scheme(CtrPrior({{{1.0, 1.0}, 1.0}}));
  EXPECT_EQ(single.entries()[0].s, (std::vector<double>{1.0, 1.0}));
}

TEST(Scheme, FullRevelationLosesToConstruction) {
  const auto prior = pair_prior(0.6);
  EXPECT_LT(scheme_revenue(full_revelation_scheme(prior), kUniform),
            construct_symmetric(prior, kUniform).revenue);
}

TEST(Scheme, ValidityFlagsProblems) {
  const auto prior = pair_prior(0.6);
  SignalingScheme wrong_mass(2);
  wrong_mass.add({1.0, 0.6}, {1.0, 0.6}, 0.4);
  wrong_mass.add({0.6, 1.0}, {0.6, 1.0}, 0.5);
  EXPECT_FALSE(check_validity(wrong_mass, prior).valid);
  SignalingScheme foreign(2);
  foreign.add({0.9, 0.9}, {0.9, 0.9}, 1.0);
  EXPECT_FALSE(check_validity(foreign, prior).valid);
  SignalingScheme low_signal(2);
  low_signal.add({1.0, 0.6}, {1.0, 0.3}, 0.5);
  low_signal.add({0.6, 1.0}, {0.6, 1.0}, 0.5);
  EXPECT_FALSE(check_validity(low_signal, prior).valid);
  EXPECT_THROW(construct_symmetric(CtrPrior({{{1.0, 0.6}, 1.0}}), kUniform), ValidationError);
  EXPECT_THROW(construct_simple_with_ratio(0.6, 1.0), ValidationError);
}

TEST(Scheme, AddMergesIdenticalEntries) {
  SignalingScheme sch(2);
  sch.add({1.0, 0.6}, {0.9, 0.9}, 0.25);
  sch.add({1.0, 0.6}, {0.9, 0.9}, 0.25);
  EXPECT_EQ(sch.size(), 1u);
  EXPECT_DOUBLE_EQ(sch.total_mass(), 0.5);
  EXPECT_THROW(sch.add({1.0}, {1.0}, 0.1), ValidationError);
}
