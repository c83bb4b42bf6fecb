#include <cmath>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "mstree/errors.hpp"
#include "mstree/market_data.hpp"
#include "test_support.hpp"

namespace mstree {
namespace {

constexpr const char* kThreeRows =
    "timestamp,open,high,low,close,volume,num_ticks\n"
    "2025-01-02T09:30:00,600,601,599,600.5,1000,12\n"
    "2025-01-02T09:31:00,600.5,602,600,601.5,800,9\n"
    "2025-01-02T09:32:00,601.5,601.5,599.5,600,0,0\n";

TEST(LoadBars, ThreeValidRows) {
  std::istringstream in(kThreeRows);
  const BarSeries s = load_bars(in, "SPY");
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.symbol(), "SPY");
  EXPECT_LT(s[0].timestamp, s[1].timestamp);
  EXPECT_LT(s[1].timestamp, s[2].timestamp);
  EXPECT_DOUBLE_EQ(s[1].close, 601.5);
  EXPECT_EQ(s[2].volume, 0);
  EXPECT_EQ(s[1].timestamp.hour(), 9);
  EXPECT_EQ(s[1].timestamp.minute(), 31);
}

TEST(LoadBars, HighBelowLowNamesRow) {
  std::istringstream in(
      "timestamp,open,high,low,close,volume,num_ticks\n"
      "2025-01-02T09:30:00,600,601,599,600.5,1000,12\n"
      "2025-01-02T09:31:00,600,598,599,600,10,1\n");
  try {
    load_bars(in, "X");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(LoadBars, DuplicateTimestampRejected) {
  std::istringstream in(
      "timestamp,open,high,low,close,volume,num_ticks\n"
      "2025-01-02T09:30:00,600,601,599,600.5,1000,12\n"
      "2025-01-02T09:30:00,600,601,599,600.5,1000,12\n");
  EXPECT_THROW(load_bars(in, "X"), ValidationError);
}

TEST(LoadBars, MalformedRowGivesLineNumber) {
  std::istringstream in(
      "timestamp,open,high,low,close,volume,num_ticks\n"
      "2025-01-02T09:30:00,600,601,599,600.5,1000,12\n"
      "2025-01-02T09:31:00,600,abc,599,600.5,1000,12\n");
  try {
    load_bars(in, "X");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(LoadBars, WrongFieldCountAndBadTimestamp) {
  std::istringstream short_row(
      "timestamp,open,high,low,close,volume,num_ticks\n2025-01-02T09:30:00,600,601,599\n");
  EXPECT_THROW(load_bars(short_row, "X"), ParseError);
  std::istringstream bad_ts(
      "timestamp,open,high,low,close,volume,num_ticks\n2025-13-02T09:30:00,600,601,599,600,1,1\n");
  EXPECT_THROW(load_bars(bad_ts, "X"), ParseError);
  std::istringstream bad_header("time,o,h,l,c,v,n\n");
  EXPECT_THROW(load_bars(bad_header, "X"), ParseError);
}

TEST(LoadBars, EmptyInput) {
  std::istringstream empty("");
  EXPECT_THROW(load_bars(empty, "X"), EmptyInputError);
  std::istringstream header_only("timestamp,open,high,low,close,volume,num_ticks\n");
  EXPECT_THROW(load_bars(header_only, "X"), EmptyInputError);
  EXPECT_THROW(load_bars(std::string("/nonexistent/bars.csv"), "X"), ValidationError);
}

TEST(LoadBars, NegativeVolumeAndNonPositivePriceRejected) {
  std::istringstream neg_vol(
      "timestamp,open,high,low,close,volume,num_ticks\n2025-01-02T09:30:00,600,601,599,600,-1,1\n");
  EXPECT_THROW(load_bars(neg_vol, "X"), Error);
  std::istringstream zero_price(
      "timestamp,open,high,low,close,volume,num_ticks\n2025-01-02T09:30:00,0,0,0,0,1,1\n");
  EXPECT_THROW(load_bars(zero_price, "X"), ValidationError);
}

TEST(LoadBars, WrittenCsvReadsBackExactly) {
  GeneratorConfig cfg;
  cfg.n_bars = 500;
  const BarSeries original = synthesize_bars(cfg, 3);
  std::stringstream buf;
  write_bars(buf, original);
  const BarSeries reread = load_bars(buf, original.symbol());
  EXPECT_EQ(reread, original);
}

TEST(BarCheck, OhlcInvariants) {
  Bar ok = testing::flat_bar(0, 100.0);
  EXPECT_FALSE(check_bar(ok).has_value());
  Bar open_above_high = ok;
  open_above_high.open = 101.0;
  EXPECT_TRUE(check_bar(open_above_high).has_value());
  Bar close_below_low = ok;
  close_below_low.close = 99.0;
  EXPECT_TRUE(check_bar(close_below_low).has_value());
}

TEST(BarSeries, OrderingEnforcedOnConstruction) {
  std::vector<Bar> bars{testing::flat_bar(1, 100.0), testing::flat_bar(0, 100.0)};
  EXPECT_THROW(BarSeries("X", bars), ValidationError);
  EXPECT_THROW(BarSeries("X", {}), EmptyInputError);
}

TEST(Timestamp, IsoParseAndFormat) {
  const auto ts = Timestamp::parse_iso("2025-01-02T09:30:00");
  ASSERT_TRUE(ts.has_value());
  EXPECT_EQ(ts->seconds, testing::kSessionOpen);
  EXPECT_EQ(ts->to_iso(), "2025-01-02T09:30:00");
  EXPECT_FALSE(Timestamp::parse_iso("2025-02-30T09:30:00").has_value());
  EXPECT_FALSE(Timestamp::parse_iso("2025-01-02 09:30").has_value());
}

TEST(Summarize, TwoReturnHandOracle) {
  const BarSeries s = testing::series_from_closes({100.0, 110.0, 99.0});
  const SummaryStats st = summarize(s);
  const double r1 = std::log(110.0 / 100.0);
  const double r2 = std::log(99.0 / 110.0);
  const double mean = 0.5 * (r1 + r2);
  EXPECT_NEAR(st.log_returns.mean, mean, 1e-15);
  EXPECT_NEAR(st.log_returns.std_dev, std::abs(r1 - r2) / std::sqrt(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(st.log_returns.min, r2);
  EXPECT_DOUBLE_EQ(st.log_returns.max, r1);
  // A symmetric two-point sample has zero skew and kurtosis exactly 1.
  ASSERT_TRUE(st.return_skewness.has_value());
  EXPECT_NEAR(*st.return_skewness, 0.0, 1e-12);
  EXPECT_NEAR(*st.return_excess_kurtosis, -2.0, 1e-12);
  EXPECT_DOUBLE_EQ(st.close.mean, (100.0 + 110.0 + 99.0) / 3.0);
  EXPECT_EQ(st.n_bars, 3u);
}

TEST(Summarize, ConstantCloseIsDegenerate) {
  const BarSeries s = testing::series_from_closes(std::vector<double>(10, 250.0));
  const SummaryStats st = summarize(s);
  EXPECT_EQ(st.log_returns.mean, 0.0);
  EXPECT_EQ(st.log_returns.std_dev, 0.0);
  EXPECT_FALSE(st.return_skewness.has_value());
  EXPECT_FALSE(st.return_excess_kurtosis.has_value());
}

TEST(Summarize, NeedsTwoBars) {
  EXPECT_THROW(summarize(testing::series_from_closes({100.0})), InsufficientDataError);
}

TEST(Summarize, QuantilesOrderedOnSyntheticData) {
  GeneratorConfig cfg;
  cfg.n_bars = 5000;
  const SummaryStats st = summarize(synthesize_bars(cfg, 11));
  for (const VariableStats* v :
       {&st.close, &st.volume, &st.log_returns, &st.spread_proxy, &st.num_ticks}) {
    EXPECT_LE(v->min, v->p25);
    EXPECT_LE(v->p25, v->p75);
    EXPECT_LE(v->p75, v->max);
    EXPECT_GE(v->std_dev, 0.0);
  }
}

TEST(Quantile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(quantile({4.0, 1.0, 3.0, 2.0}, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(quantile({4.0, 1.0, 3.0, 2.0}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({7.0}, 0.9), 7.0);
  EXPECT_THROW(quantile({}, 0.5), InsufficientDataError);
}

TEST(LogReturns, CrossSessionExclusion) {
  std::vector<Bar> bars{testing::flat_bar(0, 100.0), testing::flat_bar(1, 101.0)};
  Bar next_day = testing::flat_bar(24 * 60, 105.0);
  bars.push_back(next_day);
  const BarSeries s("X", bars);
  EXPECT_EQ(log_returns(s, true).size(), 2u);
  ASSERT_EQ(log_returns(s, false).size(), 1u);
  EXPECT_DOUBLE_EQ(log_returns(s, false)[0], std::log(101.0 / 100.0));
}

TEST(Generator, DeterministicPerSeed) {
  GeneratorConfig cfg;
  cfg.n_bars = 2000;
  EXPECT_EQ(synthesize_bars(cfg, 7), synthesize_bars(cfg, 7));
  EXPECT_NE(synthesize_bars(cfg, 7), synthesize_bars(cfg, 8));
}

TEST(Generator, RejectsBadConfig) {
  GeneratorConfig cfg;
  cfg.n_bars = 50;
  EXPECT_THROW(synthesize(cfg, 1), ConfigError);
  cfg = {};
  cfg.ofi_signal_strength = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.tail_dof = 2.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.u_shape_amplitude = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Generator, SessionsSkipWeekends) {
  GeneratorConfig cfg;
  cfg.n_bars = 390 * 3;
  const BarSeries s = synthesize_bars(cfg, 1);
  std::set<std::int64_t> days;
  for (const Bar& b : s.bars()) days.insert(b.timestamp.day());
  ASSERT_EQ(days.size(), 3u);
  // Thu 2 Jan, Fri 3 Jan, then Mon 6 Jan 2025.
  EXPECT_EQ(s[390 * 2].timestamp.to_iso(), "2025-01-06T09:30:00");
  EXPECT_EQ(s[389].timestamp.to_iso(), "2025-01-02T15:59:00");
}

TEST(Generator, PlantedProbabilityTracksStrength) {
  GeneratorConfig cfg;
  cfg.n_bars = 3000;
  cfg.ofi_signal_strength = 0.0;
  const SyntheticData flat = synthesize(cfg, 5);
  for (std::size_t t = 0; t + 1 < flat.planted_up_probability.size(); ++t) {
    ASSERT_DOUBLE_EQ(flat.planted_up_probability[t], 0.5);
  }
  EXPECT_TRUE(std::isnan(flat.planted_up_probability.back()));

  cfg.ofi_signal_strength = 0.8;
  const SyntheticData strong = synthesize(cfg, 5);
  for (std::size_t t = 0; t + 1 < strong.planted_up_probability.size(); ++t) {
    ASSERT_GE(strong.planted_up_probability[t], 0.1 - 1e-12);
    ASSERT_LE(strong.planted_up_probability[t], 0.9 + 1e-12);
  }
}

// With planted p known, the realized up frequency must agree with its mean.
TEST(Generator, RealizedDirectionMatchesPlantedProbability) {
  GeneratorConfig cfg;
  cfg.n_bars = 40000;
  cfg.zero_volume_prob = 0.0;
  const SyntheticData d = synthesize(cfg, 21);
  double expected = 0.0, var = 0.0, ups = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t + 1 < d.series.size(); ++t) {
    const double p = d.planted_up_probability[t];
    expected += p;
    var += p * (1.0 - p);
    ups += d.series[t + 1].close > d.series[t].close ? 1.0 : 0.0;
    ++n;
  }
  EXPECT_LT(std::abs(ups - expected), 4.0 * std::sqrt(var)) << "n=" << n;
}

// Skewed move sizes keep each return's conditional mean at zero.
TEST(Generator, StandardizedReturnsHaveZeroMean) {
  GeneratorConfig cfg;
  cfg.n_bars = 40000;
  cfg.zero_volume_prob = 0.0;
  const SyntheticData d = synthesize(cfg, 22);
  double sum = 0.0, sum2 = 0.0, sum4 = 0.0;
  const std::size_t n = d.series.size() - 1;
  for (std::size_t t = 0; t < n; ++t) {
    const double z = std::log(d.series[t + 1].close / d.series[t].close) / d.planted_volatility[t];
    sum += z;
    sum2 += z * z;
    sum4 += z * z * z * z;
  }
  const double nn = static_cast<double>(n);
  const double mean = sum / nn;
  const double var = sum2 / nn - mean * mean;
  EXPECT_LT(std::abs(mean), 4.0 * std::sqrt(var / nn));
  // Student-t tails make z^2 noisy; compare against its own standard error.
  const double se_var = std::sqrt((sum4 / nn - (sum2 / nn) * (sum2 / nn)) / nn);
  EXPECT_LT(std::abs(var - 1.0), 4.0 * se_var) << "se " << se_var;
}

TEST(Generator, IntradayVolumeIsUShaped) {
  GeneratorConfig cfg;
  cfg.n_bars = 390 * 20;
  const BarSeries s = synthesize_bars(cfg, 9);
  double edge = 0.0, mid = 0.0;
  std::size_t n_edge = 0, n_mid = 0;
  for (std::size_t t = 0; t < s.size(); ++t) {
    const std::size_t m = t % 390;
    if (m < 30 || m >= 360) {
      edge += static_cast<double>(s[t].volume);
      ++n_edge;
    } else if (m >= 165 && m < 225) {
      mid += static_cast<double>(s[t].volume);
      ++n_mid;
    }
  }
  EXPECT_GT(edge / n_edge, 1.5 * mid / n_mid);
}

TEST(Generator, ZeroVolumeBarsAtConfiguredRate) {
  GeneratorConfig cfg;
  cfg.n_bars = 50000;
  cfg.zero_volume_prob = 0.01;
  const BarSeries s = synthesize_bars(cfg, 4);
  double zeros = 0.0;
  for (const Bar& b : s.bars()) {
    if (b.volume == 0) {
      zeros += 1.0;
      EXPECT_EQ(b.high, b.low);
    }
  }
  const double n = static_cast<double>(s.size());
  EXPECT_NEAR(zeros / n, 0.01, 4.0 * std::sqrt(0.01 * 0.99 / n));
}

TEST(BarSeries, ScaledMultipliesPricesOnly) {
  const BarSeries s = testing::series_from_closes({100.0, 101.0, 102.0});
  const BarSeries t = s.scaled(2.5);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_DOUBLE_EQ(t[i].close, 2.5 * s[i].close);
    EXPECT_DOUBLE_EQ(t[i].high, 2.5 * s[i].high);
    EXPECT_EQ(t[i].volume, s[i].volume);
  }
  EXPECT_EQ(s.head(2).size(), 2u);
  EXPECT_THROW(s.scaled(0.0), DomainError);
}

}  // namespace
}  // namespace mstree
