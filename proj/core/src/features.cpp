#include "mstree/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>

#include "mstree/errors.hpp"

namespace mstree {

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// x / y, or 1.0 when the denominator is zero.
double ratio_or_one(double x, double y) { return y > 0.0 ? x / y : 1.0; }

}  // namespace

SessionBucket SessionClock::bucket(const Timestamp& ts) const {
  const int m = ts.hour() * 60 + ts.minute();
  if (m >= open_minute_of_day && m < open_minute_of_day + 30) return SessionBucket::kOpen30;
  if (m < close_minute_of_day && m >= close_minute_of_day - 30) return SessionBucket::kClose30;
  return SessionBucket::kMidday;
}

std::vector<int> FeatureMatrix::labels() const {
  std::vector<int> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.label);
  return out;
}

std::vector<double> FeatureMatrix::next_returns() const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.next_return);
  return out;
}

FeatureMatrix FeatureMatrix::slice(std::size_t begin, std::size_t end) const {
  end = std::min(end, rows.size());
  begin = std::min(begin, end);
  FeatureMatrix out;
  out.feature_names = feature_names;
  out.warmup = warmup;
  out.rows.assign(rows.begin() + static_cast<long>(begin), rows.begin() + static_cast<long>(end));
  return out;
}

std::vector<std::string> feature_names(std::size_t lag_k) {
  std::vector<std::string> names;
  for (std::size_t k = 1; k <= lag_k; ++k) names.push_back("returns_lag_" + std::to_string(k));
  for (const char* n : {"spread_proxy", "spread_lag_1", "spread_change", "volume_ratio",
                        "volume_relative", "tick_intensity", "realized_vol_5m", "price_range_norm",
                        "ofi", "hour", "minute", "session_indicator"}) {
    names.emplace_back(n);
  }
  return names;
}

double spread_proxy(const Bar& bar) {
  if (!(bar.close > 0.0)) throw DomainError("spread_proxy: close must be positive");
  return (bar.high - bar.low) / bar.close;
}

std::vector<double> order_flow_imbalance(const BarSeries& series, std::size_t window) {
  if (window == 0) throw ConfigError("order_flow_imbalance: window must be >= 1");
  const std::size_t n = series.size();
  std::vector<double> out(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> signed_volume(n, 0.0);
  for (std::size_t t = 1; t < n; ++t) {
    signed_volume[t] = sign(series[t].close - series[t - 1].close) *
                       static_cast<double>(series[t].volume);
  }
  for (std::size_t t = window; t < n; ++t) {
    double sum = 0.0;
    for (std::size_t i = t + 1 - window; i <= t; ++i) sum += signed_volume[i];
    out[t] = sum;
  }
  return out;
}

FeatureMatrix build_features(const BarSeries& series, const FeatureOptions& options) {
  const std::size_t k = options.lag_k;
  const std::size_t w = options.window;
  if (k == 0 || w < 2) throw ConfigError("build_features: lag_k >= 1 and window >= 2 required");
  const std::size_t warmup = std::max(k, w);
  const std::size_t n = series.size();
  if (n <= warmup + 1) {
    throw InsufficientDataError("build_features: need more than " + std::to_string(warmup + 1) +
                                " bars, got " + std::to_string(n));
  }

  std::vector<double> ret(n, 0.0), spread(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    spread[t] = spread_proxy(series[t]);
    if (t > 0) ret[t] = std::log(series[t].close / series[t - 1].close);
  }
  const std::vector<double> ofi = order_flow_imbalance(series, w);

  FeatureMatrix m;
  m.feature_names = feature_names(k);
  m.warmup = warmup;
  m.rows.reserve(n - warmup - 1);

  for (std::size_t t = warmup; t + 1 < n; ++t) {
    const double next = ret[t + 1];
    if (next == 0.0) {
      ++m.dropped_zero_return;
      continue;
    }
    const Bar& bar = series[t];
    FeatureRow row;
    row.timestamp = bar.timestamp;
    row.bar_index = t;
    row.label = next > 0.0 ? 1 : 0;
    row.next_return = next;
    auto& x = row.predictors;
    x.reserve(k + 12);

    for (std::size_t lag = 1; lag <= k; ++lag) x.push_back(ret[t + 1 - lag]);

    x.push_back(spread[t]);
    x.push_back(spread[t - 1]);
    x.push_back(spread[t] - spread[t - 1]);

    double vol_sum = 0.0, tick_sum = 0.0, hi = 0.0, lo = std::numeric_limits<double>::infinity();
    double ret_mean = 0.0;
    for (std::size_t i = t + 1 - w; i <= t; ++i) {
      vol_sum += static_cast<double>(series[i].volume);
      tick_sum += static_cast<double>(series[i].num_ticks);
      hi = std::max(hi, series[i].high);
      lo = std::min(lo, series[i].low);
      ret_mean += ret[i];
    }
    const double wd = static_cast<double>(w);
    ret_mean /= wd;
    double ret_ss = 0.0;
    for (std::size_t i = t + 1 - w; i <= t; ++i) ret_ss += (ret[i] - ret_mean) * (ret[i] - ret_mean);

    x.push_back(ratio_or_one(static_cast<double>(bar.volume),
                             static_cast<double>(series[t - 1].volume)));
    x.push_back(ratio_or_one(static_cast<double>(bar.volume), vol_sum / wd));
    x.push_back(ratio_or_one(static_cast<double>(bar.num_ticks), tick_sum / wd));
    x.push_back(std::sqrt(ret_ss / (wd - 1.0)));
    x.push_back((hi - lo) / bar.close);
    x.push_back(ofi[t]);
    x.push_back(static_cast<double>(bar.timestamp.hour()));
    x.push_back(static_cast<double>(bar.timestamp.minute()));
    x.push_back(static_cast<double>(static_cast<int>(options.clock.bucket(bar.timestamp))));

    m.rows.push_back(std::move(row));
  }
  return m;
}

void write_features_csv(std::ostream& out, const FeatureMatrix& matrix) {
  std::string buf;
  buf.append("timestamp");
  for (const auto& name : matrix.feature_names) {
    buf.push_back(',');
    buf.append(name);
  }
  buf.append(",label\n");
  char num[64];
  for (const auto& row : matrix.rows) {
    buf.append(row.timestamp.to_iso());
    for (double v : row.predictors) {
      auto [ptr, ec] = std::to_chars(num, num + sizeof(num), v);
      buf.push_back(',');
      buf.append(num, ptr);
    }
    buf.push_back(',');
    buf.push_back(row.label ? '1' : '0');
    buf.push_back('\n');
  }
  out << buf;
}

}  // namespace mstree
