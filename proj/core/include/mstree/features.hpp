#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "mstree/market_data.hpp"

namespace mstree {

/// Session bucket, numerically encoded as a feature.
enum class SessionBucket : int { kMidday = 0, kClose30 = 1, kOpen30 = 2 };

struct SessionClock {
  int open_minute_of_day = 9 * 60 + 30;
  int close_minute_of_day = 16 * 60;

  SessionBucket bucket(const Timestamp& ts) const;
};

/// Microstructure feature vector for one bar plus its next-move label.
///
/// Column order (with lag_k = 5 and window = 5, 17 predictors):
///   returns_lag_1..5, spread_proxy, spread_lag_1, spread_change, volume_ratio,
///   volume_relative, tick_intensity, realized_vol_5m, price_range_norm, ofi,
///   hour, minute, session_indicator
///
/// returns_lag_1 is the return ending at this bar, ln(C_t / C_{t-1}); the
/// label is the sign of the following return ln(C_{t+1} / C_t).
struct FeatureRow {
  Timestamp timestamp;
  std::size_t bar_index = 0;
  std::vector<double> predictors;
  int label = 0;
  double next_return = 0.0;

  bool operator==(const FeatureRow&) const = default;
};

struct FeatureMatrix {
  std::vector<std::string> feature_names;
  std::vector<FeatureRow> rows;
  /// Bars skipped at the start because a lookback window was incomplete.
  std::size_t warmup = 0;
  /// Rows discarded because the next return was exactly zero.
  std::size_t dropped_zero_return = 0;

  std::size_t n_features() const noexcept { return feature_names.size(); }
  std::size_t size() const noexcept { return rows.size(); }

  std::vector<int> labels() const;
  std::vector<double> next_returns() const;
  /// Copy of this matrix restricted to rows [begin, end).
  FeatureMatrix slice(std::size_t begin, std::size_t end) const;
};

struct FeatureOptions {
  std::size_t lag_k = 5;
  std::size_t window = 5;
  SessionClock clock;
};

inline constexpr std::size_t kDefaultFeatureCount = 17;

std::vector<std::string> feature_names(std::size_t lag_k = 5);

/// (H - L) / C. Throws DomainError if close <= 0.
double spread_proxy(const Bar& bar);

/// Trailing-inclusive sum of sign(r_i) * V_i over `window` bars; NaN where
/// the window reaches before the first return. Throws ConfigError when
/// window == 0.
std::vector<double> order_flow_imbalance(const BarSeries& series, std::size_t window = 5);

/// Builds the predictor matrix. Throws InsufficientDataError if the series
/// is not longer than warmup + 1 bars.
FeatureMatrix build_features(const BarSeries& series, const FeatureOptions& options = {});

/// CSV with header feature_names + `label`.
void write_features_csv(std::ostream& out, const FeatureMatrix& matrix);

}  // namespace mstree
