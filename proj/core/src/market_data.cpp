#include "mstree/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "mstree/errors.hpp"
#include "mstree/random.hpp"

namespace mstree {

namespace {

constexpr std::int64_t kSecondsPerDay = 86'400;
constexpr std::uint64_t kGeneratorStream = 0x6a656e;

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

void append_double(std::string& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

VariableStats describe(const std::vector<double>& values) {
  VariableStats s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std_dev = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.min = *lo;
  s.max = *hi;
  s.p25 = quantile(values, 0.25);
  s.p75 = quantile(values, 0.75);
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Timestamp

std::optional<Timestamp> Timestamp::parse_iso(std::string_view text) {
  // YYYY-MM-DDTHH:MM:SS
  if (text.size() != 19 || text[4] != '-' || text[7] != '-' || text[10] != 'T' ||
      text[13] != ':' || text[16] != ':') {
    return std::nullopt;
  }
  int y = 0;
  unsigned mo = 0, d = 0, h = 0, mi = 0, s = 0;
  if (!parse_number(text.substr(0, 4), y) || !parse_number(text.substr(5, 2), mo) ||
      !parse_number(text.substr(8, 2), d) || !parse_number(text.substr(11, 2), h) ||
      !parse_number(text.substr(14, 2), mi) || !parse_number(text.substr(17, 2), s)) {
    return std::nullopt;
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{mo},
                                        std::chrono::day{d}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59) return std::nullopt;
  const auto days = std::chrono::sys_days{ymd}.time_since_epoch().count();
  return Timestamp{days * kSecondsPerDay + h * 3600 + mi * 60 + s};
}

std::string Timestamp::to_iso() const {
  const std::int64_t d = day();
  const std::int64_t secs = seconds - d * kSecondsPerDay;
  const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{d}}};
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(secs / 3600), static_cast<int>((secs / 60) % 60),
                static_cast<int>(secs % 60));
  return buf;
}

std::int64_t Timestamp::day() const {
  std::int64_t d = seconds / kSecondsPerDay;
  if (seconds % kSecondsPerDay < 0) --d;
  return d;
}

int Timestamp::hour() const {
  return static_cast<int>((seconds - day() * kSecondsPerDay) / 3600);
}

int Timestamp::minute() const {
  return static_cast<int>(((seconds - day() * kSecondsPerDay) / 60) % 60);
}

// ---------------------------------------------------------------------------
// Bar / BarSeries

std::optional<std::string> check_bar(const Bar& bar) {
  for (double p : {bar.open, bar.high, bar.low, bar.close}) {
    if (!std::isfinite(p) || p <= 0.0) return "prices must be finite and positive";
  }
  if (bar.volume < 0) return "volume must be non-negative";
  if (bar.num_ticks < 0) return "num_ticks must be non-negative";
  if (bar.low > bar.high) return "low exceeds high";
  if (bar.low > std::min(bar.open, bar.close)) return "low exceeds min(open, close)";
  if (bar.high < std::max(bar.open, bar.close)) return "high below max(open, close)";
  return std::nullopt;
}

BarSeries::BarSeries(std::string symbol, std::vector<Bar> bars)
    : symbol_(std::move(symbol)), bars_(std::move(bars)) {
  if (bars_.empty()) throw EmptyInputError("bar series is empty");
  for (std::size_t i = 0; i < bars_.size(); ++i) {
    if (auto problem = check_bar(bars_[i])) {
      throw ValidationError("row " + std::to_string(i) + " (" + bars_[i].timestamp.to_iso() +
                            "): " + *problem);
    }
    if (i > 0 && !(bars_[i - 1].timestamp < bars_[i].timestamp)) {
      throw ValidationError("row " + std::to_string(i) + " (" + bars_[i].timestamp.to_iso() +
                            "): timestamps not strictly increasing");
    }
  }
}

BarSeries BarSeries::head(std::size_t n) const {
  n = std::min(n, bars_.size());
  return BarSeries(symbol_, std::vector<Bar>(bars_.begin(), bars_.begin() + static_cast<long>(n)));
}

BarSeries BarSeries::scaled(double factor) const {
  if (!(factor > 0.0)) throw DomainError("scale factor must be positive");
  std::vector<Bar> out = bars_;
  for (Bar& b : out) {
    b.open *= factor;
    b.high *= factor;
    b.low *= factor;
    b.close *= factor;
  }
  return BarSeries(symbol_, std::move(out));
}

// ---------------------------------------------------------------------------
// CSV

BarSeries load_bars(std::istream& in, std::string symbol) {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      have_header = true;
      break;
    }
  }
  if (!have_header) throw EmptyInputError("bar CSV is empty");
  if (trim(line) != kBarCsvHeader) {
    throw ParseError(line_no, "expected header '" + std::string(kBarCsvHeader) + "'");
  }

  std::vector<Bar> bars;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) continue;

    std::string_view fields[7];
    std::size_t count = 0;
    while (true) {
      const auto comma = view.find(',');
      if (count == 7) throw ParseError(line_no, "too many fields");
      fields[count++] = trim(view.substr(0, comma));
      if (comma == std::string_view::npos) break;
      view.remove_prefix(comma + 1);
    }
    if (count != 7) throw ParseError(line_no, "expected 7 fields, got " + std::to_string(count));

    Bar bar;
    auto ts = Timestamp::parse_iso(fields[0]);
    if (!ts) throw ParseError(line_no, "bad timestamp '" + std::string(fields[0]) + "'");
    bar.timestamp = *ts;
    if (!parse_number(fields[1], bar.open) || !parse_number(fields[2], bar.high) ||
        !parse_number(fields[3], bar.low) || !parse_number(fields[4], bar.close)) {
      throw ParseError(line_no, "bad price field");
    }
    if (!parse_number(fields[5], bar.volume) || !parse_number(fields[6], bar.num_ticks)) {
      throw ParseError(line_no, "bad integer field");
    }
    if (auto problem = check_bar(bar)) {
      throw ValidationError("row " + std::to_string(bars.size()) + " (line " +
                            std::to_string(line_no) + ", " + bar.timestamp.to_iso() +
                            "): " + *problem);
    }
    if (!bars.empty() && !(bars.back().timestamp < bar.timestamp)) {
      throw ValidationError("row " + std::to_string(bars.size()) + " (line " +
                            std::to_string(line_no) + ", " + bar.timestamp.to_iso() +
                            "): timestamps not strictly increasing");
    }
    bars.push_back(bar);
  }
  if (bars.empty()) throw EmptyInputError("bar CSV has a header but no rows");
  return BarSeries(std::move(symbol), std::move(bars));
}

BarSeries load_bars(const std::string& path, std::string symbol) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open bar file '" + path + "'");
  return load_bars(in, std::move(symbol));
}

void write_bars(std::ostream& out, const BarSeries& series) {
  std::string buf;
  buf.reserve(64 * (series.size() + 1));
  buf.append(kBarCsvHeader);
  buf.push_back('\n');
  for (const Bar& b : series.bars()) {
    buf.append(b.timestamp.to_iso());
    for (double p : {b.open, b.high, b.low, b.close}) {
      buf.push_back(',');
      append_double(buf, p);
    }
    buf.push_back(',');
    buf.append(std::to_string(b.volume));
    buf.push_back(',');
    buf.append(std::to_string(b.num_ticks));
    buf.push_back('\n');
  }
  out << buf;
}

void write_bars(const std::string& path, const BarSeries& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write bar file '" + path + "'");
  write_bars(out, series);
}

std::vector<double> log_returns(const BarSeries& series, bool include_cross_session) {
  std::vector<double> out;
  out.reserve(series.size());
  for (std::size_t t = 1; t < series.size(); ++t) {
    if (!include_cross_session && series[t].timestamp.day() != series[t - 1].timestamp.day()) {
      continue;
    }
    out.push_back(std::log(series[t].close / series[t - 1].close));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Summary

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InsufficientDataError("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

SummaryStats summarize(const BarSeries& series, const SummaryOptions& options) {
  if (series.size() < 2) throw InsufficientDataError("summarize needs at least 2 bars");

  std::vector<double> close, volume, spread, ticks;
  close.reserve(series.size());
  volume.reserve(series.size());
  spread.reserve(series.size());
  ticks.reserve(series.size());
  for (const Bar& b : series.bars()) {
    close.push_back(b.close);
    volume.push_back(static_cast<double>(b.volume));
    spread.push_back((b.high - b.low) / b.close);
    ticks.push_back(static_cast<double>(b.num_ticks));
  }
  const std::vector<double> returns = log_returns(series, options.include_cross_session_returns);
  if (returns.empty()) throw InsufficientDataError("no log returns inside sessions");

  SummaryStats s;
  s.n_bars = series.size();
  s.close = describe(close);
  s.volume = describe(volume);
  s.log_returns = describe(returns);
  s.spread_proxy = describe(spread);
  s.num_ticks = describe(ticks);

  // Population central moments for shape statistics.
  const double n = static_cast<double>(returns.size());
  const double mean = s.log_returns.mean;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double r : returns) {
    const double d = r - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (m2 > 0.0) {
    s.return_skewness = m3 / std::pow(m2, 1.5);
    s.return_excess_kurtosis = m4 / (m2 * m2) - 3.0;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Generator

void GeneratorConfig::validate() const {
  if (n_bars < 100) throw ConfigError("n_bars must be >= 100");
  if (!(base_price > 0.0) || !std::isfinite(base_price)) throw ConfigError("base_price must be > 0");
  if (!(minute_vol > 0.0) || !std::isfinite(minute_vol)) throw ConfigError("minute_vol must be > 0");
  if (!(ofi_signal_strength >= 0.0 && ofi_signal_strength <= 1.0)) {
    throw ConfigError("ofi_signal_strength must lie in [0, 1]");
  }
  if (!(u_shape_amplitude >= 0.0 && u_shape_amplitude < 1.0)) {
    throw ConfigError("u_shape_amplitude must lie in [0, 1)");
  }
  if (!(base_volume > 0.0)) throw ConfigError("base_volume must be > 0");
  if (!(volume_log_sd >= 0.0)) throw ConfigError("volume_log_sd must be >= 0");
  if (!(zero_volume_prob >= 0.0 && zero_volume_prob < 1.0)) {
    throw ConfigError("zero_volume_prob must lie in [0, 1)");
  }
  if (!(mean_trade_size > 0.0)) throw ConfigError("mean_trade_size must be > 0");
  if (!(tail_dof > 2.0)) throw ConfigError("tail_dof must be > 2");
  if (!(ofi_scale > 0.0)) throw ConfigError("ofi_scale must be > 0");
  if (session.minutes_per_session < 1 || session.open_minute_of_day < 0 ||
      session.open_minute_of_day + session.minutes_per_session > 24 * 60) {
    throw ConfigError("session template must fit inside one day");
  }
  const std::chrono::year_month_day start{std::chrono::year{session.start_year},
                                          std::chrono::month{static_cast<unsigned>(session.start_month)},
                                          std::chrono::day{static_cast<unsigned>(session.start_day)}};
  if (!start.ok()) throw ConfigError("session start date is invalid");
}

SyntheticData synthesize(const GeneratorConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng = make_stream(seed, kGeneratorStream, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::student_t_distribution<double> student(config.tail_dof);
  const double t_scale = std::sqrt((config.tail_dof - 2.0) / config.tail_dof);

  const std::size_t n = config.n_bars;
  const int mps = config.session.minutes_per_session;
  const double amp = config.u_shape_amplitude;
  auto activity = [&](int minute_of_session) {
    const double x = (minute_of_session + 0.5) / mps;
    return 1.0 + amp * (3.0 * (2.0 * x - 1.0) * (2.0 * x - 1.0) - 1.0);
  };

  // Trading-day calendar: weekdays only.
  using namespace std::chrono;
  sys_days session_day = sys_days{year_month_day{year{config.session.start_year},
                                         month{static_cast<unsigned>(config.session.start_month)},
                                         day{static_cast<unsigned>(config.session.start_day)}}};
  auto skip_weekend = [](sys_days d) {
    while (weekday{d} == Saturday || weekday{d} == Sunday) d += days{1};
    return d;
  };
  session_day = skip_weekend(session_day);

  std::vector<Bar> bars(n);
  std::vector<double> planted_p(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> planted_vol(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> signed_volume(n, 0.0);

  constexpr int kOfiWindow = 5;
  const double ofi_scale = config.ofi_scale * config.base_volume;
  double prev_close = config.base_price;

  for (std::size_t t = 0; t < n; ++t) {
    const int minute_of_session = static_cast<int>(t % static_cast<std::size_t>(mps));
    if (t > 0 && minute_of_session == 0) session_day = skip_weekend(session_day + days{1});
    const std::int64_t day_index = session_day.time_since_epoch().count();
    Bar& bar = bars[t];
    bar.timestamp.seconds =
        day_index * kSecondsPerDay + (config.session.open_minute_of_day + minute_of_session) * 60;

    const double act = activity(minute_of_session);
    const double vol_t = config.minute_vol * std::sqrt(act);

    // Up-move probability from trailing order flow up to bar t-1.
    double ofi = 0.0;
    for (std::size_t i = (t >= kOfiWindow ? t - kOfiWindow : 0); i < t; ++i) ofi += signed_volume[i];
    const double p_up =
        std::clamp(0.5 + 0.5 * config.ofi_signal_strength * std::tanh(ofi / ofi_scale), 1e-3, 1.0 - 1e-3);
    if (t > 0) {
      planted_p[t - 1] = p_up;
      planted_vol[t - 1] = vol_t;
    }

    const bool idle = t > 0 && uniform01(rng) < config.zero_volume_prob;
    if (t == 0 || idle) {
      bar.open = bar.high = bar.low = bar.close = prev_close;
      bar.volume = 0;
      bar.num_ticks = 0;
      if (t == 0) {
        bar.volume = static_cast<std::int64_t>(std::llround(config.base_volume * act));
        bar.num_ticks = static_cast<std::int64_t>(std::llround(bar.volume / config.mean_trade_size));
      }
      continue;
    }

    // Direction is predictable but the move sizes are skewed so the
    // conditional mean is zero and the conditional variance is vol_t^2.
    const bool up = uniform01(rng) < p_up;
    const double magnitude = vol_t * std::abs(student(rng) * t_scale);
    const double r = up ? magnitude * std::sqrt((1.0 - p_up) / p_up)
                        : -magnitude * std::sqrt(p_up / (1.0 - p_up));
    bar.open = prev_close;
    bar.close = prev_close * std::exp(r);
    const double wick_hi = std::abs(normal(rng)) * 0.3 * vol_t;
    const double wick_lo = std::abs(normal(rng)) * 0.3 * vol_t;
    bar.high = std::max(bar.open, bar.close) * std::exp(wick_hi);
    bar.low = std::min(bar.open, bar.close) * std::exp(-wick_lo);

    const double noise = std::exp(config.volume_log_sd * normal(rng) -
                                  0.5 * config.volume_log_sd * config.volume_log_sd);
    bar.volume = std::max<std::int64_t>(1, std::llround(config.base_volume * act * noise));
    std::poisson_distribution<std::int64_t> trades(static_cast<double>(bar.volume) /
                                                   config.mean_trade_size);
    bar.num_ticks = std::max<std::int64_t>(1, trades(rng));

    signed_volume[t] = (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0)) * static_cast<double>(bar.volume);
    prev_close = bar.close;
  }

  return SyntheticData{BarSeries("SYNTH", std::move(bars)), std::move(planted_p),
                       std::move(planted_vol)};
}

BarSeries synthesize_bars(const GeneratorConfig& config, std::uint64_t seed) {
  return synthesize(config, seed).series;
}

}  // namespace mstree
