#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "mstree/calibration.hpp"
#include "mstree/errors.hpp"
#include "mstree/market_data.hpp"

namespace mstree {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

TEST(BinStates, Examples) {
  EXPECT_EQ(probability_bin(0.025, 20), 0u);
  EXPECT_EQ(probability_bin(1.0, 20), 19u);
  EXPECT_EQ(probability_bin(0.35, 20), 7u);
  const std::vector<double> p{0.0, 0.049999, 0.05, 0.5, 1.0};
  const BinAssignment b = bin_states(p, 20);
  EXPECT_EQ(b.state_ids, (std::vector<std::size_t>{0, 0, 1, 10, 19}));
  ASSERT_EQ(b.edges.size(), 21u);
  EXPECT_DOUBLE_EQ(b.edges.front(), 0.0);
  EXPECT_DOUBLE_EQ(b.edges.back(), 1.0);
}

TEST(BinStates, Errors) {
  EXPECT_THROW(bin_states(std::vector<double>{0.5}, 1), ConfigError);
  EXPECT_THROW(bin_states(std::vector<double>{1.2}, 20), DomainError);
  EXPECT_THROW(bin_states(std::vector<double>{-0.1}, 20), DomainError);
}

TEST(BinStates, UniformCountsConcentrate) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(20000);
  for (double& x : p) x = u(rng);
  std::vector<std::size_t> count(20, 0);
  for (std::size_t s : bin_states(p, 20).state_ids) ++count[s];
  for (std::size_t c : count) EXPECT_NEAR(static_cast<double>(c), 1000.0, 5.0 * std::sqrt(1000.0));
}

TEST(ConditionalMoments, TwoPointAndConstant) {
  const std::vector<double> r{0.001, -0.001, 0.002, 0.002, 0.002, 0.5};
  const std::vector<std::size_t> s{0, 0, 1, 1, 1, 2};
  const auto m = conditional_moments(r, s, 4, 2);
  EXPECT_NEAR(m[0].mu, 0.0, 1e-18);
  EXPECT_NEAR(m[0].sigma2, 2e-6, 1e-18);
  EXPECT_FALSE(m[0].sparse);
  EXPECT_EQ(m[1].sigma2, 0.0);
  EXPECT_TRUE(m[1].degenerate);
  EXPECT_TRUE(m[2].sparse);
  EXPECT_EQ(m[2].n, 1u);
  EXPECT_EQ(m[3].n, 0u);
  EXPECT_TRUE(m[3].sparse);
}

// The generator plants zero conditional mean in every probability bin.
TEST(ConditionalMoments, RecoversPlantedMean) {
  GeneratorConfig cfg;
  cfg.n_bars = 60000;
  cfg.zero_volume_prob = 0.0;
  const SyntheticData d = synthesize(cfg, 77);
  std::vector<double> probs, rets;
  for (std::size_t t = 0; t + 1 < d.series.size(); ++t) {
    probs.push_back(d.planted_up_probability[t]);
    rets.push_back(std::log(d.series[t + 1].close / d.series[t].close));
  }
  const BinAssignment bins = bin_states(probs, 20);
  const auto m = conditional_moments(rets, bins.state_ids, 20, 200);
  std::size_t checked = 0;
  for (const auto& s : m) {
    if (s.sparse) continue;
    ++checked;
    EXPECT_LT(std::abs(s.mu), 3.5 * std::sqrt(s.sigma2 / static_cast<double>(s.n)))
        << "n=" << s.n;
  }
  // The planted p piles up near the tanh saturation points, so only the
  // outer and middle bins fill up.
  EXPECT_GE(checked, 5u);
}

void expect_moments(double p, double mu, double sigma2, const Factors& f, double tol) {
  const double a = std::log(f.u), b = std::log(f.d);
  const double mean = p * a + (1.0 - p) * b;
  const double var = p * (a - mean) * (a - mean) + (1.0 - p) * (b - mean) * (b - mean);
  EXPECT_NEAR(mean, mu, tol);
  EXPECT_NEAR(var, sigma2, tol);
  EXPECT_GT(f.u, f.d);
}

TEST(SolveFactors, Examples) {
  Factors f = solve_factors(0.5, 0.0, 1e-4);
  EXPECT_NEAR(f.u, std::exp(0.01), 1e-15);
  EXPECT_NEAR(f.d, std::exp(-0.01), 1e-15);
  EXPECT_NEAR(f.u, 1.010050, 5e-7);
  EXPECT_NEAR(f.d, 0.990050, 5e-7);

  f = solve_factors(0.8, 0.0, 1e-4);
  EXPECT_NEAR(std::log(f.u), 0.005, 1e-15);
  EXPECT_NEAR(std::log(f.d), -0.02, 1e-15);
  expect_moments(0.8, 0.0, 1e-4, f, 1e-15);

  f = solve_factors(0.5, 0.001, 1e-4);
  EXPECT_NEAR(std::log(f.u), 0.011, 1e-15);
  EXPECT_NEAR(std::log(f.d), -0.009, 1e-15);
}

TEST(SolveFactors, Errors) {
  EXPECT_THROW(solve_factors(0.0, 0.0, 1e-4), DegenerateError);
  EXPECT_THROW(solve_factors(1.0, 0.0, 1e-4), DegenerateError);
  EXPECT_THROW(solve_factors(0.5, 0.0, 0.0), DegenerateError);
}

TEST(SolveFactors, MomentRoundTripProperty) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> up(0.01, 0.99), umu(-1e-3, 1e-3), us(1e-5, 1e-2);
  for (int i = 0; i < 2000; ++i) {
    const double p = up(rng), mu = umu(rng), s = us(rng);
    expect_moments(p, mu, s * s, solve_factors(p, mu, s * s), 1e-12);
  }
}

TEST(TimeScaling, MinuteToThreeDaySteps) {
  const TimeScaling k = time_scaling(0.00001018, 0.008219);
  EXPECT_NEAR(k.drift_multiplier, 807.4, 0.1);
  EXPECT_NEAR(k.vol_multiplier / std::sqrt(807.8), 1.0, 0.005);
  EXPECT_THROW(time_scaling(0.0, 1.0), DomainError);
  EXPECT_THROW(time_scaling(1.0, -1.0), DomainError);
}

MarketState minute_state(double p, double mu, double sigma2) {
  MarketState s;
  s.p_rf = p;
  s.mu = mu;
  s.sigma2 = sigma2;
  const Factors f = solve_factors(p, mu, sigma2);
  s.u = f.u;
  s.d = f.d;
  return s;
}

TEST(ScaleFactors, IdentityAndRoundTrip) {
  const MarketState s = minute_state(0.6, 2e-5, 4e-7);
  const MarketState same = scale_factors(s, 1e-5, 1e-5);
  EXPECT_NEAR(same.u, s.u, 1e-12);
  EXPECT_NEAR(same.d, s.d, 1e-12);
  EXPECT_TRUE(same.scaling_applied);
  const MarketState back = scale_factors(scale_factors(s, 1e-5, 8e-3), 8e-3, 1e-5);
  EXPECT_NEAR(back.u, s.u, 1e-10);
  EXPECT_NEAR(back.d, s.d, 1e-10);
  EXPECT_THROW(scale_factors(s, 0.0, 1.0), DomainError);
}

TEST(ScaleFactors, PureVolatilitySpreadGrowsWithRootRatio) {
  const MarketState s = minute_state(0.35, 0.0, 6.4e-7);
  const double rho = 807.8;
  const MarketState t = scale_factors(s, 1.0, rho);
  const double before = std::log(s.u) - std::log(s.d);
  const double after = std::log(t.u) - std::log(t.d);
  EXPECT_NEAR(after, std::sqrt(rho) * before, 1e-10);
  EXPECT_NEAR(t.mu, 0.0, 1e-18);
  EXPECT_NEAR(t.sigma2, rho * s.sigma2, 1e-18);
}

TEST(MmmProbability, Examples) {
  EXPECT_NEAR(mmm_probability(1.25, 0.8, 0.0, 1.0).p, 0.2 / 0.45, 1e-15);
  EXPECT_NEAR(mmm_probability(1.01, 1.0 / 1.01, 0.0, 1.0).p, 0.497512, 5e-7);
  const MmmProbability edge = mmm_probability(1.1, 1.0, 0.0, 0.37);
  EXPECT_EQ(edge.p, 0.0);
  EXPECT_TRUE(edge.boundary);
}

TEST(MmmProbability, Errors) {
  EXPECT_THROW(mmm_probability(1.1, 1.02, 0.0, 1.0), ArbitrageError);
  EXPECT_THROW(mmm_probability(0.99, 0.9, 0.05, 1.0), ArbitrageError);
  EXPECT_THROW(mmm_probability(0.9, 1.1, 0.0, 1.0), DomainError);
  EXPECT_THROW(mmm_probability(1.1, 0.0, 0.0, 1.0), DomainError);
}

TEST(KlDivergence, Examples) {
  EXPECT_EQ(kl_divergence_bernoulli(0.37, 0.37), 0.0);
  EXPECT_NEAR(kl_divergence_bernoulli(0.5, 0.25), 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0), 1e-15);
  EXPECT_NEAR(kl_divergence_bernoulli(0.5, 0.25), 0.143841, 5e-7);
  EXPECT_NEAR(kl_divergence_bernoulli(0.0, 0.5), std::log(2.0), 1e-15);
  EXPECT_EQ(kl_divergence_bernoulli(0.3, 0.0), kInf);
  EXPECT_EQ(kl_divergence_bernoulli(0.3, 1.0), kInf);
  EXPECT_EQ(kl_divergence_bernoulli(1.0, 1.0), 0.0);
}

TEST(KlDivergence, NonNegativeAndZeroOnlyAtEquality) {
  for (int i = 1; i < 100; ++i) {
    for (int j = 1; j < 100; ++j) {
      const double kl = kl_divergence_bernoulli(i / 100.0, j / 100.0);
      EXPECT_GE(kl, 0.0);
      if (i != j) EXPECT_GT(kl, 0.0);
    }
  }
}

void expect_state_invariants(const MarketState& s, double r, double dt) {
  const double g = std::exp(r * dt);
  EXPECT_GT(s.d, 0.0);
  EXPECT_LT(s.d, g);
  EXPECT_GT(s.u, g);
  EXPECT_NEAR(s.p_mmm, (g - s.d) / (s.u - s.d), 1e-12);
  EXPECT_NEAR(s.p_mmm * s.u + (1.0 - s.p_mmm) * s.d, g, 1e-12);
  EXPECT_NEAR(s.kl, kl_divergence_bernoulli(s.p_mmm, s.p_rf), 1e-15);
  EXPECT_GE(s.kl, 0.0);
}

TEST(CalibrateState, ConsistentInputIsUnchanged) {
  const double p = 0.62, sigma2 = 2.5e-5, r = 0.05, dt = 0.008219;
  const double s = std::sqrt(sigma2);
  // mu that makes the moment-matched pair a martingale under p itself.
  const double mu = r * dt - std::log(p * std::exp(s * std::sqrt((1 - p) / p)) +
                                      (1 - p) * std::exp(-s * std::sqrt(p / (1 - p))));
  const MarketState st = calibrate_state(p, mu, sigma2, r, dt);
  const Factors f = solve_factors(p, mu, sigma2);
  EXPECT_LT(st.objective, 1e-14);
  EXPECT_FALSE(st.optimized);
  EXPECT_DOUBLE_EQ(st.u, f.u);
  EXPECT_DOUBLE_EQ(st.d, f.d);
  EXPECT_NEAR(st.p_mmm, p, 1e-10);
  expect_state_invariants(st, r, dt);
}

// Drift-preserving family evaluated independently of the library.
struct Family {
  double p, mu, sigma2, r, dt;
  double log_d(double a) const { return (mu - p * a) / (1 - p); }
  double p_mmm(double a) const {
    const double b = log_d(a);
    return (std::exp(r * dt) - std::exp(b)) / (std::exp(a) - std::exp(b));
  }
  double kl(double a) const {
    const double q = p_mmm(a);
    if (!(q > 0 && q < 1)) return kInf;
    return q * std::log(q / p) + (1 - q) * std::log((1 - q) / (1 - p));
  }
  double rel_var(double a) const {
    const double q = p_mmm(a), w = a - log_d(a);
    return (q * (1 - q) * w * w - sigma2) / sigma2;
  }
};

TEST(CalibrateState, VolatilityOnlyWeightMatchesVariance) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> up(0.1, 0.9), umu(-2e-3, 2e-3), us(5e-3, 2e-2);
  for (int i = 0; i < 50; ++i) {
    const double p = up(rng), mu = umu(rng), s = us(rng), r = 0.05, dt = 0.008219;
    const MarketState st = calibrate_state(p, mu, s * s, r, dt, {0.0, 1.0});
    const Family fam{p, mu, s * s, r, dt};
    EXPECT_LT(std::abs(fam.rel_var(std::log(st.u))), 1e-6) << "p=" << p << " mu=" << mu;
    expect_state_invariants(st, r, dt);
  }
}

TEST(CalibrateState, KlOnlyWeightMatchesGridSearch) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> up(0.05, 0.95), umu(-3e-3, 3e-3), us(2e-3, 2e-2);
  for (int i = 0; i < 50; ++i) {
    const double p = up(rng), mu = umu(rng), s = us(rng), r = 0.05, dt = 0.008219;
    const Family fam{p, mu, s * s, r, dt};
    const StateSearch box = calibration_interval(p, mu, s * s, r, dt);
    double grid_best = kInf;
    const double step = (box.log_u_hi - box.log_u_lo) / 999.0;
    for (int k = 0; k < 1000; ++k) grid_best = std::min(grid_best, fam.kl(box.log_u_lo + step * k));
    const MarketState st = calibrate_state(p, mu, s * s, r, dt, {1.0, 0.0});
    EXPECT_LE(st.objective, grid_best + 1e-12);
    EXPECT_NEAR(fam.kl(std::log(st.u)), st.objective, 1e-12);
    EXPECT_NEAR(std::log(st.d), fam.log_d(std::log(st.u)), 1e-12);
    expect_state_invariants(st, r, dt);
  }
}

TEST(CalibrateState, Errors) {
  EXPECT_THROW(calibrate_state(0.5, 0.0, 1e-4, 0.05, 0.01, {0.0, 0.0}), ConfigError);
  EXPECT_THROW(calibrate_state(0.5, 0.0, 1e-4, 0.05, 0.01, {-1.0, 1.0}), ConfigError);
  EXPECT_THROW(calibrate_state(0.5, 0.0, 0.0, 0.05, 0.01), DegenerateError);
  EXPECT_THROW(calibrate_state(0.0, 0.0, 1e-4, 0.05, 0.01), DegenerateError);
}

TEST(CalibrateState, IntervalBracketsAdmissiblePoints) {
  const double p = 0.2, mu = 0.004, sigma2 = 1e-6, r = 0.05, dt = 0.01;
  const StateSearch box = calibration_interval(p, mu, sigma2, r, dt);
  const Family fam{p, mu, sigma2, r, dt};
  EXPECT_LT(fam.log_d(box.log_u_lo), r * dt);
  EXPECT_GT(box.log_u_lo, r * dt);
  EXPECT_GT(box.log_u_hi, std::log(solve_factors(p, mu, sigma2).u));
}

struct SyntheticRows {
  std::vector<double> probs, returns;
};

SyntheticRows planted_rows(std::size_t n_bars, std::uint64_t seed) {
  GeneratorConfig cfg;
  cfg.n_bars = n_bars;
  const SyntheticData d = synthesize(cfg, seed);
  SyntheticRows rows;
  for (std::size_t t = 0; t + 1 < d.series.size(); ++t) {
    const double r = std::log(d.series[t + 1].close / d.series[t].close);
    if (r == 0.0) continue;
    rows.probs.push_back(d.planted_up_probability[t]);
    rows.returns.push_back(r);
  }
  return rows;
}

TEST(CalibrateAll, TwentyStatesBracketTheGrowthFactor) {
  const SyntheticRows rows = planted_rows(20000, 3);
  CalibrationConfig cfg;
  cfg.dt_tree = 30.0 / 365.0 / 10.0;
  const StateTable t = calibrate_all(rows.probs, rows.returns, cfg);
  ASSERT_EQ(t.states.size(), 20u);
  EXPECT_TRUE(t.scaling_applied);
  for (std::size_t k = 0; k < 20; ++k) {
    const MarketState& s = t.states[k];
    EXPECT_EQ(s.state_id, k);
    EXPECT_DOUBLE_EQ(s.bin_lo, k / 20.0);
    expect_state_invariants(s, t.r, t.dt_tree);
    EXPECT_DOUBLE_EQ(s.dt, t.dt_tree);
  }
  const StateTableSummary sum = summarize_states(t);
  EXPECT_GE(sum.mean_abs_probability_gap, 0.0);
  EXPECT_GT(sum.gap_kl_spearman, 0.0);
}

TEST(CalibrateAll, InfiniteMinimumPoolsEveryState) {
  const SyntheticRows rows = planted_rows(3000, 4);
  CalibrationConfig cfg;
  cfg.min_samples = std::numeric_limits<std::size_t>::max();
  const StateTable t = calibrate_all(rows.probs, rows.returns, cfg);
  for (const MarketState& s : t.states) {
    EXPECT_TRUE(s.pooled);
    EXPECT_DOUBLE_EQ(s.u, t.states.front().u);
    EXPECT_DOUBLE_EQ(s.d, t.states.front().d);
  }
  EXPECT_FALSE(t.scaling_applied);
}

TEST(CalibrateAll, Errors) {
  const std::vector<double> p{0.5, 0.6}, r{0.001};
  EXPECT_THROW(calibrate_all(p, r, {}), ShapeError);
  const std::vector<double> flat{0.001, 0.001};
  EXPECT_THROW(calibrate_all(p, flat, {}), CalibrationError);
}

TEST(Spearman, HandExamples) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  EXPECT_DOUBLE_EQ(spearman_correlation(x, std::vector<double>{2, 4, 6, 8, 100}), 1.0);
  EXPECT_DOUBLE_EQ(spearman_correlation(x, std::vector<double>{5, 4, 3, 2, 1}), -1.0);
  // Ranks (1,2,3,4,5) against (2,1,4,3,5): 1 - 6*4/(5*24) = 0.8.
  EXPECT_NEAR(spearman_correlation(x, std::vector<double>{20, 10, 40, 30, 50}), 0.8, 1e-15);
  EXPECT_TRUE(std::isnan(spearman_correlation(x, std::vector<double>{1, 1, 1, 1, 1})));
}

TEST(SingleStateTable, CrrFactors) {
  const double dt = 0.01, u = std::exp(0.2 * std::sqrt(dt));
  const StateTable t = single_state_table(u, 1.0 / u, 0.05, dt);
  ASSERT_EQ(t.states.size(), 1u);
  expect_state_invariants(t.states[0], 0.05, dt);
  EXPECT_THROW(single_state_table(1.1, 1.0, 0.0, dt), ArbitrageError);
}

}  // namespace
}  // namespace mstree
