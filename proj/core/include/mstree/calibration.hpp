#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mstree {

// ---------------------------------------------------------------------------
// Probability bins

/// Equal-width bin of p over [0,1] with half-open bins [k/n, (k+1)/n); p is
/// clamped to [0,1] and p = 1 falls in the top bin.
std::size_t probability_bin(double p, std::size_t n_bins);

struct BinAssignment {
  std::vector<std::size_t> state_ids;
  /// n_bins + 1 edges, 0 ... 1.
  std::vector<double> edges;
};

/// Throws ConfigError if n_bins < 2 and DomainError for p outside [0,1].
BinAssignment bin_states(std::span<const double> probs, std::size_t n_bins = 20);

// ---------------------------------------------------------------------------
// Conditional moments

struct StateMoments {
  double mu = 0.0;
  /// Unbiased (n - 1) sample variance; 0 when n <= 1.
  double sigma2 = 0.0;
  std::size_t n = 0;
  /// n below the requested minimum (always set when n <= 1).
  bool sparse = false;
  /// All returns identical, so sigma2 == 0.
  bool degenerate = false;
};

std::vector<StateMoments> conditional_moments(std::span<const double> returns,
                                              std::span<const std::size_t> assignments,
                                              std::size_t n_states, std::size_t min_samples = 2);

// ---------------------------------------------------------------------------
// Factors and measures

struct Factors {
  double u = 1.0;
  double d = 1.0;
};

/// Two-point log-return distribution with up-probability p matching mean mu
/// and variance sigma2:
///   ln u = mu + sigma sqrt((1-p)/p),  ln d = mu - sigma sqrt(p/(1-p)).
/// Throws DegenerateError for p outside (0,1) or sigma2 <= 0.
Factors solve_factors(double p, double mu, double sigma2);

struct TimeScaling {
  double drift_multiplier = 1.0;  // dt_to / dt_from
  double vol_multiplier = 1.0;    // sqrt(dt_to / dt_from)
};

/// Throws DomainError unless both steps are positive.
TimeScaling time_scaling(double dt_from, double dt_to);

struct MmmProbability {
  double p = 0.0;
  /// e^{r dt} coincides with d or u, so p is exactly 0 or 1.
  bool boundary = false;
};

/// (e^{r dt} - d) / (u - d). Throws DomainError unless u > d > 0 and
/// ArbitrageError when e^{r dt} lies outside [d, u].
MmmProbability mmm_probability(double u, double d, double r, double dt);

/// Bernoulli KL divergence D(p || q) with 0 ln 0 = 0. Returns +infinity when
/// q is 0 or 1 and p differs from it.
double kl_divergence_bernoulli(double p, double q);

// ---------------------------------------------------------------------------
// Market states

struct CalibrationWeights {
  double probability = 1.0;  // w1, on KL(p_mmm || p_rf)
  double volatility = 1.0;   // w2, on squared relative variance error
};

struct MarketState {
  std::size_t state_id = 0;
  double bin_lo = 0.0;
  double bin_hi = 1.0;
  double p_rf = 0.5;
  /// Conditional log-return moments per tree step (per minute before scaling).
  double mu = 0.0;
  double sigma2 = 0.0;
  /// Moment-matched factors at the minute scale, before scaling.
  double u_minute = 1.0;
  double d_minute = 1.0;
  double u = 1.0;
  double d = 1.0;
  double p_mmm = 0.5;
  double kl = 0.0;
  double implied_vol_step = 0.0;
  double implied_vol_annual = 0.0;
  std::size_t n_samples = 0;
  /// Moments replaced by the pooled sample.
  bool pooled = false;
  bool scaling_applied = false;
  /// The constrained search moved the factors away from moment matching.
  bool optimized = false;
  double objective = 0.0;
  /// Step length in years the factors refer to.
  double dt = 0.0;
};

/// Re-expresses a state's moments at a new step length (drift linear in time,
/// volatility with its square root) and re-solves the moment-matched
/// factors. Throws DomainError for non-positive steps.
MarketState scale_factors(const MarketState& state, double dt_from, double dt_to);

struct StateSearch {
  double log_u_lo = 0.0;
  double log_u_hi = 0.0;
};

/// Interval of ln u searched by calibrate_state. Every admissible point has
/// ln d < r dt < ln u.
StateSearch calibration_interval(double p_rf, double mu, double sigma2, double r, double dt);

/// Moment-matched factors, then the risk-neutral adjustment that minimises
///   w1 KL(p_mmm || p_rf) + w2 ((sigma2_model - sigma2) / sigma2)^2
/// over factor pairs that keep the physical mean p_rf ln u + (1-p_rf) ln d = mu.
/// Throws ConfigError for bad weights, DegenerateError for bad inputs and
/// CalibrationError if no admissible pair exists.
MarketState calibrate_state(double p_rf, double mu, double sigma2, double r, double dt,
                            const CalibrationWeights& weights = {});

// ---------------------------------------------------------------------------
// State table

struct CalibrationConfig {
  std::size_t n_bins = 20;
  double r = 0.05;
  double minutes_per_year = 252.0 * 390.0;
  /// Years per tree step; 0 means "same as one bar" (no scaling).
  double dt_tree = 0.0;
  CalibrationWeights weights;
  std::size_t min_samples = 30;
  /// Probabilities are clamped into [eps, 1 - eps] before factor solving.
  double probability_floor = 1e-3;

  double dt_minute() const { return 1.0 / minutes_per_year; }
  double resolved_dt_tree() const { return dt_tree > 0.0 ? dt_tree : dt_minute(); }
};

struct StateTable {
  std::vector<MarketState> states;
  std::size_t n_bins = 0;
  double r = 0.0;
  double dt_minute = 0.0;
  double dt_tree = 0.0;
  double minutes_per_year = 0.0;
  bool scaling_applied = false;
  CalibrationWeights weights;
  std::size_t min_samples = 0;
  double pooled_p = 0.5;
  double pooled_mu = 0.0;
  double pooled_sigma2 = 0.0;
  std::size_t pooled_n = 0;

  const MarketState& state(std::size_t id) const { return states.at(id); }
};

/// Bin, estimate, solve, scale and calibrate every state. Sparse states
/// (n < min_samples or zero variance) take the pooled moments and flag it.
/// Throws ShapeError on length mismatch and CalibrationError when even the
/// pooled sample cannot be calibrated.
StateTable calibrate_all(std::span<const double> probs, std::span<const double> next_returns,
                         const CalibrationConfig& config);

/// Single-state table with fixed factors, mainly for benchmarks and tests
/// (e.g. CRR factors). p_mmm is derived from (u, d, r, dt).
StateTable single_state_table(double u, double d, double r, double dt);

struct StateTableSummary {
  double mean_abs_probability_gap = 0.0;
  double mean_kl = 0.0;
  double max_kl = 0.0;
  /// Spearman rank correlation between |p_rf - p_mmm| and kl; NaN when
  /// either series is constant.
  double gap_kl_spearman = 0.0;
  std::size_t n_pooled = 0;
  std::size_t n_optimized = 0;
};

StateTableSummary summarize_states(const StateTable& table);

double spearman_correlation(std::span<const double> x, std::span<const double> y);

}  // namespace mstree
