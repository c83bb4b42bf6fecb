#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mstree {

/// Seconds since the Unix epoch, UTC, minute resolution in practice.
struct Timestamp {
  std::int64_t seconds = 0;

  auto operator<=>(const Timestamp&) const = default;

  /// Parses `YYYY-MM-DDTHH:MM:SS`. Returns nullopt on any malformation.
  static std::optional<Timestamp> parse_iso(std::string_view text);
  std::string to_iso() const;

  int hour() const;
  int minute() const;
  /// Days since the epoch; used to detect session boundaries.
  std::int64_t day() const;
};

/// One minute OHLCV record with tick count.
struct Bar {
  Timestamp timestamp;
  double open = 0.0;
  double high = 0.0;
  double low = 0.0;
  double close = 0.0;
  std::int64_t volume = 0;
  std::int64_t num_ticks = 0;

  bool operator==(const Bar&) const = default;
};

/// Empty when the bar satisfies every invariant, else a description of the
/// first violation.
std::optional<std::string> check_bar(const Bar& bar);

/// Validated, strictly time-ordered, non-empty bar sequence. Immutable.
class BarSeries {
 public:
  /// Validates every bar and the ordering; throws ValidationError or
  /// EmptyInputError.
  BarSeries(std::string symbol, std::vector<Bar> bars);

  const std::string& symbol() const noexcept { return symbol_; }
  const std::vector<Bar>& bars() const noexcept { return bars_; }
  std::size_t size() const noexcept { return bars_.size(); }
  const Bar& operator[](std::size_t i) const { return bars_[i]; }

  /// First `n` bars (n clamped to size, must be >= 1).
  BarSeries head(std::size_t n) const;
  /// Every price field multiplied by `factor` (> 0).
  BarSeries scaled(double factor) const;

  bool operator==(const BarSeries&) const = default;

 private:
  std::string symbol_;
  std::vector<Bar> bars_;
};

inline constexpr std::string_view kBarCsvHeader = "timestamp,open,high,low,close,volume,num_ticks";

/// Reads the bar CSV format. Throws ParseError (with line number),
/// ValidationError (naming the offending row) or EmptyInputError.
BarSeries load_bars(std::istream& in, std::string symbol);
BarSeries load_bars(const std::string& path, std::string symbol);

/// Writes the bar CSV format with round-trip precision.
void write_bars(std::ostream& out, const BarSeries& series);
void write_bars(const std::string& path, const BarSeries& series);

/// ln(C_t / C_{t-1}) for t = 1..n-1.
std::vector<double> log_returns(const BarSeries& series, bool include_cross_session = true);

// ---------------------------------------------------------------------------
// Summary statistics

/// Moment that may be undefined for degenerate (zero-variance) samples.
using MaybeMoment = std::optional<double>;

struct VariableStats {
  double mean = 0.0;
  double std_dev = 0.0;
  double min = 0.0;
  double p25 = 0.0;
  double p75 = 0.0;
  double max = 0.0;
};

struct SummaryStats {
  std::size_t n_bars = 0;
  VariableStats close;
  VariableStats volume;
  VariableStats log_returns;
  VariableStats spread_proxy;
  VariableStats num_ticks;
  MaybeMoment return_skewness;
  MaybeMoment return_excess_kurtosis;
};

struct SummaryOptions {
  bool include_cross_session_returns = true;
};

/// Throws InsufficientDataError for fewer than two bars.
SummaryStats summarize(const BarSeries& series, const SummaryOptions& options = {});

/// Linear-interpolated quantile of an unsorted sample (q in [0,1]).
double quantile(std::vector<double> values, double q);

// ---------------------------------------------------------------------------
// Synthetic generator

struct SessionTemplate {
  int open_minute_of_day = 9 * 60 + 30;
  int minutes_per_session = 390;
  int start_year = 2025;
  int start_month = 1;
  int start_day = 2;
};

struct GeneratorConfig {
  std::size_t n_bars = 50'000;
  double base_price = 600.0;
  double minute_vol = 8e-4;
  /// 0 = no relation between order flow and the next move; 1 = deterministic.
  double ofi_signal_strength = 0.8;
  /// Intraday activity multiplier is 1 + A(3(2x-1)^2 - 1); A in [0, 1).
  double u_shape_amplitude = 0.5;
  double base_volume = 50'000.0;
  double volume_log_sd = 0.5;
  double zero_volume_prob = 0.002;
  double mean_trade_size = 100.0;
  double tail_dof = 5.0;
  /// OFI saturation scale, in units of base_volume.
  double ofi_scale = 0.5;
  SessionTemplate session;

  /// Throws ConfigError describing the first bad field.
  void validate() const;
};

/// Bars plus the generator's own per-bar ground truth, for oracle tests.
struct SyntheticData {
  BarSeries series;
  /// Probability the move into bar t+1 is up, as planted when bar t+1 was
  /// generated. Entry t refers to the return from bar t to bar t+1; the last
  /// entry is NaN.
  std::vector<double> planted_up_probability;
  /// Volatility of the return from bar t to t+1 before idle bars are drawn
  /// (NaN last). The generator keeps that return's conditional mean at zero.
  std::vector<double> planted_volatility;
};

/// Deterministic given (config, seed).
SyntheticData synthesize(const GeneratorConfig& config, std::uint64_t seed);
BarSeries synthesize_bars(const GeneratorConfig& config, std::uint64_t seed);

}  // namespace mstree
