#include "mstree/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mstree/errors.hpp"

namespace mstree {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kGridPoints = 2001;
constexpr double kSearchTolerance = 1e-10;
constexpr double kZeroObjective = 1e-14;

// The factor family searched by calibrate_state: ln u = a, and ln d chosen so
// the physical mean log return stays at mu.
struct DriftPreservingFamily {
  double p_rf, mu, sigma2, r, dt;
  CalibrationWeights w;

  double log_d(double a) const { return (mu - p_rf * a) / (1.0 - p_rf); }

  // p_mmm for ln u = a, or NaN when the pair does not bracket e^{r dt}.
  double p_mmm(double a) const {
    const double b = log_d(a);
    const double rdt = r * dt;
    if (!(b < rdt && rdt < a)) return std::numeric_limits<double>::quiet_NaN();
    // (e^{rdt} - e^b) / (e^a - e^b), written with expm1 for small moves.
    return std::expm1(rdt - b) / std::expm1(a - b);
  }

  double objective(double a) const {
    const double p = p_mmm(a);
    if (!(p > 0.0 && p < 1.0)) return kInf;
    const double spread = a - log_d(a);
    const double model_var = p * (1.0 - p) * spread * spread;
    const double rel = (model_var - sigma2) / sigma2;
    double j = 0.0;
    if (w.probability > 0.0) j += w.probability * kl_divergence_bernoulli(p, p_rf);
    if (w.volatility > 0.0) j += w.volatility * rel * rel;
    return j;
  }
};

double golden_section(const DriftPreservingFamily& f, double lo, double hi) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - inv_phi * (hi - lo);
  double d = lo + inv_phi * (hi - lo);
  double fc = f.objective(c);
  double fd = f.objective(d);
  for (int iter = 0; iter < 200 && (hi - lo) > kSearchTolerance * std::max(1.0, std::abs(lo)); ++iter) {
    if (fc <= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - inv_phi * (hi - lo);
      fc = f.objective(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + inv_phi * (hi - lo);
      fd = f.objective(d);
    }
  }
  return fc <= fd ? c : d;
}

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j - 1);
    for (std::size_t k = i; k < j; ++k) r[idx[k]] = mid;
    i = j;
  }
  return r;
}

void fill_derived(MarketState& s, double r) {
  const MmmProbability m = mmm_probability(s.u, s.d, r, s.dt);
  s.p_mmm = m.p;
  s.kl = kl_divergence_bernoulli(s.p_mmm, s.p_rf);
  const double spread = std::log(s.u) - std::log(s.d);
  s.implied_vol_step = std::sqrt(s.p_mmm * (1.0 - s.p_mmm)) * spread;
  s.implied_vol_annual = s.implied_vol_step / std::sqrt(s.dt);
}

}  // namespace

// ---------------------------------------------------------------------------

std::size_t probability_bin(double p, std::size_t n_bins) {
  const double clamped = std::clamp(std::isnan(p) ? 0.0 : p, 0.0, 1.0);
  return std::min(n_bins - 1, static_cast<std::size_t>(std::floor(clamped * static_cast<double>(n_bins))));
}

BinAssignment bin_states(std::span<const double> probs, std::size_t n_bins) {
  if (n_bins < 2) throw ConfigError("bin_states: n_bins must be >= 2");
  BinAssignment out;
  out.edges.resize(n_bins + 1);
  for (std::size_t k = 0; k <= n_bins; ++k) {
    out.edges[k] = static_cast<double>(k) / static_cast<double>(n_bins);
  }
  out.state_ids.reserve(probs.size());
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("bin_states: probability outside [0, 1]");
    out.state_ids.push_back(probability_bin(p, n_bins));
  }
  return out;
}

std::vector<StateMoments> conditional_moments(std::span<const double> returns,
                                              std::span<const std::size_t> assignments,
                                              std::size_t n_states, std::size_t min_samples) {
  if (returns.size() != assignments.size()) {
    throw ShapeError("conditional_moments: returns and assignments differ in length");
  }
  std::vector<StateMoments> out(n_states);
  std::vector<double> sum(n_states, 0.0);
  for (std::size_t i = 0; i < returns.size(); ++i) {
    const std::size_t s = assignments[i];
    if (s >= n_states) throw ShapeError("conditional_moments: state id out of range");
    sum[s] += returns[i];
    ++out[s].n;
  }
  for (std::size_t s = 0; s < n_states; ++s) {
    if (out[s].n > 0) out[s].mu = sum[s] / static_cast<double>(out[s].n);
  }
  std::vector<double> ss(n_states, 0.0);
  for (std::size_t i = 0; i < returns.size(); ++i) {
    const double dev = returns[i] - out[assignments[i]].mu;
    ss[assignments[i]] += dev * dev;
  }
  for (std::size_t s = 0; s < n_states; ++s) {
    StateMoments& m = out[s];
    if (m.n > 1) m.sigma2 = ss[s] / static_cast<double>(m.n - 1);
    m.sparse = m.n <= 1 || m.n < min_samples;
    m.degenerate = m.n > 0 && m.sigma2 == 0.0;
  }
  return out;
}

Factors solve_factors(double p, double mu, double sigma2) {
  if (!(p > 0.0 && p < 1.0)) throw DegenerateError("solve_factors: p must lie strictly inside (0, 1)");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
    throw DegenerateError("solve_factors: variance must be positive");
  }
  if (!std::isfinite(mu)) throw DegenerateError("solve_factors: mean must be finite");
  const double sigma = std::sqrt(sigma2);
  return {std::exp(mu + sigma * std::sqrt((1.0 - p) / p)),
          std::exp(mu - sigma * std::sqrt(p / (1.0 - p)))};
}

TimeScaling time_scaling(double dt_from, double dt_to) {
  if (!(dt_from > 0.0) || !(dt_to > 0.0)) throw DomainError("time step lengths must be positive");
  const double ratio = dt_to / dt_from;
  return {ratio, std::sqrt(ratio)};
}

MmmProbability mmm_probability(double u, double d, double r, double dt) {
  if (!(d > 0.0) || !(u > d)) throw DomainError("mmm_probability: requires u > d > 0");
  const double growth = std::exp(r * dt);
  if (growth < d || growth > u) {
    throw ArbitrageError("mmm_probability: e^{r dt} = " + std::to_string(growth) +
                         " outside [d, u] = [" + std::to_string(d) + ", " + std::to_string(u) + "]");
  }
  if (growth == d) return {0.0, true};
  if (growth == u) return {1.0, true};
  return {(growth - d) / (u - d), false};
}

double kl_divergence_bernoulli(double p, double q) {
  auto term = [](double a, double b) {
    if (a == 0.0) return 0.0;
    if (b == 0.0) return kInf;
    return a * std::log(a / b);
  };
  // Rounding can leave -1e-17 when p and q nearly coincide.
  return std::max(0.0, term(p, q) + term(1.0 - p, 1.0 - q));
}

MarketState scale_factors(const MarketState& state, double dt_from, double dt_to) {
  const TimeScaling k = time_scaling(dt_from, dt_to);
  MarketState out = state;
  out.mu = state.mu * k.drift_multiplier;
  out.sigma2 = state.sigma2 * k.drift_multiplier;
  const Factors f = solve_factors(out.p_rf, out.mu, out.sigma2);
  out.u = f.u;
  out.d = f.d;
  out.dt = dt_to;
  out.scaling_applied = true;
  return out;
}

StateSearch calibration_interval(double p_rf, double mu, double sigma2, double r, double dt) {
  const double rdt = r * dt;
  const double sigma = std::sqrt(sigma2);
  // ln d(a) < r dt  <=>  a > (mu - (1 - p) r dt) / p
  const double lo = std::max(rdt, (mu - (1.0 - p_rf) * rdt) / p_rf) + 1e-8;
  const double hi = std::max(mu, lo) + sigma * (6.0 + std::sqrt((1.0 - p_rf) / p_rf));
  return {lo, hi};
}

MarketState calibrate_state(double p_rf, double mu, double sigma2, double r, double dt,
                            const CalibrationWeights& weights) {
  if (!(weights.probability >= 0.0) || !(weights.volatility >= 0.0) ||
      (weights.probability == 0.0 && weights.volatility == 0.0)) {
    throw ConfigError("calibrate_state: weights must be >= 0 and not both zero");
  }
  if (!(dt > 0.0)) throw DomainError("calibrate_state: dt must be positive");
  const Factors matched = solve_factors(p_rf, mu, sigma2);

  MarketState s;
  s.p_rf = p_rf;
  s.mu = mu;
  s.sigma2 = sigma2;
  s.dt = dt;

  const DriftPreservingFamily family{p_rf, mu, sigma2, r, dt, weights};
  const double a0 = std::log(matched.u);
  const double j0 = family.objective(a0);
  if (j0 <= kZeroObjective) {
    s.u = matched.u;
    s.d = matched.d;
    s.objective = j0;
    fill_derived(s, r);
    return s;
  }

  const StateSearch range = calibration_interval(p_rf, mu, sigma2, r, dt);
  const double step = (range.log_u_hi - range.log_u_lo) / static_cast<double>(kGridPoints - 1);
  std::size_t best = kGridPoints;
  double best_j = kInf;
  for (std::size_t i = 0; i < kGridPoints; ++i) {
    const double j = family.objective(range.log_u_lo + step * static_cast<double>(i));
    if (j < best_j) {
      best_j = j;
      best = i;
    }
  }
  if (best == kGridPoints && !std::isfinite(j0)) {
    throw CalibrationError("calibrate_state: no admissible factor pair (p_rf=" +
                           std::to_string(p_rf) + ", mu=" + std::to_string(mu) +
                           ", sigma2=" + std::to_string(sigma2) + ")");
  }

  double a = a0;
  double j = j0;
  if (best < kGridPoints) {
    const double lo = range.log_u_lo + step * static_cast<double>(best == 0 ? 0 : best - 1);
    const double hi = range.log_u_lo + step * static_cast<double>(std::min(best + 1, kGridPoints - 1));
    double refined = golden_section(family, lo, hi);
    double jr = family.objective(refined);
    if (!(jr <= best_j)) {
      refined = range.log_u_lo + step * static_cast<double>(best);
      jr = best_j;
    }
    if (jr < j) {
      a = refined;
      j = jr;
    }
  }

  s.u = std::exp(a);
  s.d = std::exp(family.log_d(a));
  s.objective = j;
  s.optimized = a != a0;
  fill_derived(s, r);
  if (!(s.p_mmm > 0.0 && s.p_mmm < 1.0)) {
    throw CalibrationError("calibrate_state: optimum lies on the arbitrage boundary");
  }
  return s;
}

StateTable calibrate_all(std::span<const double> probs, std::span<const double> next_returns,
                         const CalibrationConfig& config) {
  if (probs.size() != next_returns.size()) {
    throw ShapeError("calibrate_all: probabilities and returns differ in length");
  }
  if (probs.size() < 2) throw CalibrationError("calibrate_all: fewer than two observations");
  if (config.probability_floor <= 0.0 || config.probability_floor >= 0.5) {
    throw ConfigError("calibrate_all: probability_floor must lie in (0, 0.5)");
  }
  if (!(config.minutes_per_year > 0.0)) throw ConfigError("minutes_per_year must be positive");

  const BinAssignment bins = bin_states(probs, config.n_bins);
  const auto moments =
      conditional_moments(next_returns, bins.state_ids, config.n_bins, config.min_samples);

  StateTable table;
  table.n_bins = config.n_bins;
  table.r = config.r;
  table.dt_minute = config.dt_minute();
  table.dt_tree = config.resolved_dt_tree();
  table.minutes_per_year = config.minutes_per_year;
  table.scaling_applied = table.dt_tree != table.dt_minute;
  table.weights = config.weights;
  table.min_samples = config.min_samples;

  const double n = static_cast<double>(probs.size());
  const double floor = config.probability_floor;
  auto clamp_p = [&](double p) { return std::clamp(p, floor, 1.0 - floor); };

  table.pooled_n = probs.size();
  table.pooled_p = clamp_p(std::accumulate(probs.begin(), probs.end(), 0.0) / n);
  table.pooled_mu = std::accumulate(next_returns.begin(), next_returns.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : next_returns) ss += (x - table.pooled_mu) * (x - table.pooled_mu);
  table.pooled_sigma2 = ss / (n - 1.0);
  if (!(table.pooled_sigma2 > 0.0)) {
    throw CalibrationError("calibrate_all: pooled return variance is zero");
  }

  std::vector<double> prob_sum(config.n_bins, 0.0);
  for (std::size_t i = 0; i < probs.size(); ++i) prob_sum[bins.state_ids[i]] += probs[i];

  for (std::size_t k = 0; k < config.n_bins; ++k) {
    const StateMoments& m = moments[k];
    MarketState base;
    base.state_id = k;
    base.bin_lo = bins.edges[k];
    base.bin_hi = bins.edges[k + 1];
    base.n_samples = m.n;
    base.dt = table.dt_minute;
    if (m.sparse || m.degenerate) {
      base.pooled = true;
      base.p_rf = table.pooled_p;
      base.mu = table.pooled_mu;
      base.sigma2 = table.pooled_sigma2;
    } else {
      base.p_rf = clamp_p(prob_sum[k] / static_cast<double>(m.n));
      base.mu = m.mu;
      base.sigma2 = m.sigma2;
    }
    const Factors minute = solve_factors(base.p_rf, base.mu, base.sigma2);
    base.u_minute = base.u = minute.u;
    base.d_minute = base.d = minute.d;

    MarketState scaled = table.scaling_applied
                             ? scale_factors(base, table.dt_minute, table.dt_tree)
                             : base;
    MarketState s;
    try {
      s = calibrate_state(scaled.p_rf, scaled.mu, scaled.sigma2, table.r, table.dt_tree,
                          config.weights);
    } catch (const CalibrationError& e) {
      throw CalibrationError("state " + std::to_string(k) + ": " + e.what());
    }
    s.state_id = k;
    s.bin_lo = base.bin_lo;
    s.bin_hi = base.bin_hi;
    s.n_samples = m.n;
    s.pooled = base.pooled;
    s.u_minute = base.u_minute;
    s.d_minute = base.d_minute;
    s.scaling_applied = table.scaling_applied;
    table.states.push_back(s);
  }
  return table;
}

StateTable single_state_table(double u, double d, double r, double dt) {
  StateTable table;
  table.n_bins = 1;
  table.r = r;
  table.dt_minute = dt;
  table.dt_tree = dt;
  table.minutes_per_year = 1.0 / dt;
  MarketState s;
  s.u = s.u_minute = u;
  s.d = s.d_minute = d;
  s.dt = dt;
  const MmmProbability m = mmm_probability(u, d, r, dt);
  if (m.boundary) throw ArbitrageError("single_state_table: p_mmm on the boundary");
  s.p_rf = m.p;
  const double a = std::log(u), b = std::log(d);
  s.mu = m.p * a + (1.0 - m.p) * b;
  s.sigma2 = m.p * (1.0 - m.p) * (a - b) * (a - b);
  fill_derived(s, r);
  table.states.push_back(s);
  table.pooled_p = s.p_rf;
  table.pooled_mu = s.mu;
  table.pooled_sigma2 = s.sigma2;
  return table;
}

double spearman_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("spearman_correlation: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double mean = 0.5 * static_cast<double>(n - 1);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

StateTableSummary summarize_states(const StateTable& table) {
  StateTableSummary s;
  if (table.states.empty()) return s;
  std::vector<double> gap, kl;
  for (const auto& st : table.states) {
    gap.push_back(std::abs(st.p_rf - st.p_mmm));
    kl.push_back(st.kl);
    s.n_pooled += st.pooled;
    s.n_optimized += st.optimized;
    s.max_kl = std::max(s.max_kl, st.kl);
  }
  const double n = static_cast<double>(table.states.size());
  s.mean_abs_probability_gap = std::accumulate(gap.begin(), gap.end(), 0.0) / n;
  s.mean_kl = std::accumulate(kl.begin(), kl.end(), 0.0) / n;
  s.gap_kl_spearman = spearman_correlation(gap, kl);
  return s;
}

}  // namespace mstree
