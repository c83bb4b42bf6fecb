#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mstree/tree.hpp"

namespace mstree {

enum class OptionKind { kCall, kPut };

struct OptionSpec {
  OptionKind kind = OptionKind::kCall;
  /// Zero is accepted as the degenerate forward contract.
  double strike = 0.0;
  double maturity = 0.0;  // years
  double rate = 0.0;      // annual, continuous

  /// Throws ConfigError unless strike >= 0, maturity > 0 and rate is finite.
  void validate() const;
};

/// Calendar days to years (days / 365).
inline double days_to_years(double days) { return days / 365.0; }

double payoff(const OptionSpec& spec, double spot);

enum class PricingMethod { kTree, kMonteCarlo, kCrr, kBlackScholes };

std::string to_string(PricingMethod m);
std::string to_string(OptionKind k);

struct PricingDiagnostics {
  std::size_t node_count = 0;
  double build_seconds = 0.0;
  double price_seconds = 0.0;
};

struct PricingResult {
  double price = 0.0;
  PricingMethod method = PricingMethod::kBlackScholes;
  std::size_t n_steps = 0;
  std::size_t n_paths = 0;
  std::optional<double> std_error;
  PricingDiagnostics diagnostics;
};

/// Backward induction on the tree. Throws SpecMismatchError when
/// |N dt - T| > dt / 2 or the rates differ.
PricingResult price_tree(const PricingTree& tree, const OptionSpec& spec);

/// Recombining Cox-Ross-Rubinstein lattice, u = e^{sigma sqrt(dt)}, d = 1/u.
/// Throws ConfigError for sigma <= 0 or n_steps < 1 and ArbitrageError when
/// the risk-neutral probability leaves (0,1).
PricingResult price_crr(double spot, const OptionSpec& spec, double sigma, std::size_t n_steps);

/// Standard normal CDF, 0.5 erfc(-x / sqrt 2); relative error near machine
/// precision, far inside 1e-7.
double normal_cdf(double x);

/// Closed form. Throws ConfigError for sigma <= 0 or spot <= 0.
PricingResult black_scholes(double spot, const OptionSpec& spec, double sigma);

struct MonteCarloOptions {
  std::size_t n_paths = 200000;
  std::uint64_t seed = 42;
  double momentum = 0.0;
  std::size_t history_length = 5;
  /// Refuse runs with n_paths * n_steps above this.
  std::uint64_t max_path_steps = 2'000'000'000ULL;
  /// 0 means hardware concurrency.
  std::size_t n_threads = 0;
};

/// Simulates paths with the same transition rule as the tree, drawing moves
/// with the state's p_mmm. Path i uses the RNG stream (seed, i), so the
/// estimate does not depend on the thread count. Throws ConfigError for
/// n_paths < 100 or n_steps < 1, SpecMismatchError if the table step
/// differs from T / N and ResourceLimitError above max_path_steps.
PricingResult price_monte_carlo(std::shared_ptr<const StateTable> table, double spot,
                                const OptionSpec& spec, std::size_t n_steps, double root_p_hint,
                                const MonteCarloOptions& options = {});

struct ComparisonRow {
  PricingMethod method = PricingMethod::kBlackScholes;
  double price = 0.0;
  double absolute_difference = 0.0;
  /// Empty when the benchmark price is 0.
  std::optional<double> relative_difference;
  std::optional<double> std_error;
  PricingDiagnostics diagnostics;
};

struct Comparison {
  std::size_t benchmark_index = 0;
  double benchmark_price = 0.0;
  std::vector<ComparisonRow> rows;
};

/// Differences of every result against results[benchmark_index]. Throws
/// ConfigError for fewer than two results or a bad index.
Comparison compare_report(const std::vector<PricingResult>& results, std::size_t benchmark_index);

}  // namespace mstree
