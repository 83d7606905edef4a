// Walks through the main operations on the two-bidder uniform instance:
// optimal signal ratio, geometric construction, LP solution and a Monte
// Carlo check of the constructed scheme.

#include <cstdio>

#include "calibra/calibra.hpp"

int main() {
  using namespace calibra;
  const auto d = ValueDistribution::uniform(0.0, 1.0);
  const CtrPrior prior({{{1.0, 0.6}, 0.5}, {{0.6, 1.0}, 0.5}});

  std::printf("optimal ratio x(0.6) = %.6f\n", optimal_ratio(0.6, d));

  const auto c = construct_symmetric(prior, d);
  std::printf("geometric scheme: %zu signals, revenue %.7f (upper bound %.7f)\n", c.scheme.size(), c.revenue,
              c.upper_bound);

  const auto lp = fptas_solve(prior, d, 0.1);
  std::printf("LP at eps = 0.1: %zu variables, objective %.7f, max residual %.2e\n", lp.variables, lp.objective,
              lp.max_calibration_residual);

  SimulationConfig cfg;
  cfg.samples = 200000;
  cfg.seed = 7;
  const auto est = estimate_revenue(prior, c.scheme, d, cfg);
  std::printf("simulated revenue %.5f +- %.5f over %zu rounds\n", est.mean, est.std_error, est.samples);
  return 0;
}
