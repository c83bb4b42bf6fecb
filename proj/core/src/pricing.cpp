#include "mstree/pricing.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numbers>
#include <thread>

#include "mstree/errors.hpp"
#include "mstree/random.hpp"

namespace mstree {

namespace {

constexpr std::uint64_t kMonteCarloStream = 0x4d43'5041'5448'5331ULL;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void OptionSpec::validate() const {
  if (!(strike >= 0.0) || !std::isfinite(strike)) throw ConfigError("option strike must be >= 0");
  if (!(maturity > 0.0) || !std::isfinite(maturity)) throw ConfigError("option maturity must be > 0");
  if (!std::isfinite(rate)) throw ConfigError("option rate must be finite");
}

double payoff(const OptionSpec& spec, double spot) {
  return spec.kind == OptionKind::kCall ? std::max(0.0, spot - spec.strike)
                                        : std::max(0.0, spec.strike - spot);
}

std::string to_string(PricingMethod m) {
  switch (m) {
    case PricingMethod::kTree: return "tree";
    case PricingMethod::kMonteCarlo: return "mc";
    case PricingMethod::kCrr: return "crr";
    case PricingMethod::kBlackScholes: return "black_scholes";
  }
  return "unknown";
}

std::string to_string(OptionKind k) { return k == OptionKind::kCall ? "call" : "put"; }

PricingResult price_tree(const PricingTree& tree, const OptionSpec& spec) {
  const auto start = std::chrono::steady_clock::now();
  spec.validate();
  if (tree.levels.empty()) throw ConfigError("price_tree: empty tree");
  const double horizon = static_cast<double>(tree.n_steps) * tree.dt;
  if (std::abs(horizon - spec.maturity) > 0.5 * tree.dt) {
    throw SpecMismatchError("tree covers " + std::to_string(horizon) + " years but the option matures in " +
                            std::to_string(spec.maturity));
  }
  if (std::abs(tree.r - spec.rate) > 1e-12) {
    throw SpecMismatchError("tree rate " + std::to_string(tree.r) + " differs from option rate " +
                            std::to_string(spec.rate));
  }
  const double discount = std::exp(-tree.r * tree.dt);
  std::vector<double> values;
  values.reserve(tree.levels.back().size());
  for (const auto& node : tree.levels.back()) values.push_back(payoff(spec, node.price));
  for (std::size_t level = tree.levels.size() - 1; level-- > 0;) {
    const auto& nodes = tree.levels[level];
    std::vector<double> parent(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const TreeNode& n = nodes[i];
      parent[i] = discount * (n.p_up * values[static_cast<std::size_t>(n.up_child)] +
                              (1.0 - n.p_up) * values[static_cast<std::size_t>(n.down_child)]);
    }
    values = std::move(parent);
  }
  PricingResult result;
  result.price = values.front();
  result.method = PricingMethod::kTree;
  result.n_steps = tree.n_steps;
  result.diagnostics.node_count = tree.node_count();
  result.diagnostics.build_seconds = tree.build_seconds;
  result.diagnostics.price_seconds = seconds_since(start);
  return result;
}

PricingResult price_crr(double spot, const OptionSpec& spec, double sigma, std::size_t n_steps) {
  const auto start = std::chrono::steady_clock::now();
  spec.validate();
  if (!(spot > 0.0)) throw ConfigError("price_crr: spot must be positive");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("price_crr: sigma must be positive");
  if (n_steps < 1) throw ConfigError("price_crr: need at least one step");

  const double dt = spec.maturity / static_cast<double>(n_steps);
  const double u = std::exp(sigma * std::sqrt(dt));
  const double d = 1.0 / u;
  const MmmProbability m = mmm_probability(u, d, spec.rate, dt);
  if (m.boundary) throw ArbitrageError("price_crr: risk-neutral probability is 0 or 1");
  const double p = m.p;
  const double discount = std::exp(-spec.rate * dt);

  std::vector<double> values(n_steps + 1);
  for (std::size_t j = 0; j <= n_steps; ++j) {
    // j up moves, n - j down moves.
    const double s = spot * std::exp(sigma * std::sqrt(dt) *
                                     (2.0 * static_cast<double>(j) - static_cast<double>(n_steps)));
    values[j] = payoff(spec, s);
  }
  for (std::size_t level = n_steps; level-- > 0;) {
    for (std::size_t j = 0; j <= level; ++j) {
      values[j] = discount * (p * values[j + 1] + (1.0 - p) * values[j]);
    }
  }
  PricingResult result;
  result.price = values.front();
  result.method = PricingMethod::kCrr;
  result.n_steps = n_steps;
  result.diagnostics.node_count = (n_steps + 1) * (n_steps + 2) / 2;
  result.diagnostics.price_seconds = seconds_since(start);
  return result;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

PricingResult black_scholes(double spot, const OptionSpec& spec, double sigma) {
  const auto start = std::chrono::steady_clock::now();
  spec.validate();
  if (!(spot > 0.0)) throw ConfigError("black_scholes: spot must be positive");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("black_scholes: sigma must be positive");

  const double t = spec.maturity;
  const double df = std::exp(-spec.rate * t);
  double price = 0.0;
  if (spec.strike == 0.0) {
    price = spec.kind == OptionKind::kCall ? spot : 0.0;
  } else {
    const double vol = sigma * std::sqrt(t);
    const double d1 = (std::log(spot / spec.strike) + (spec.rate + 0.5 * sigma * sigma) * t) / vol;
    const double d2 = d1 - vol;
    price = spec.kind == OptionKind::kCall
                ? spot * normal_cdf(d1) - spec.strike * df * normal_cdf(d2)
                : spec.strike * df * normal_cdf(-d2) - spot * normal_cdf(-d1);
  }
  PricingResult result;
  result.price = std::max(0.0, price);
  result.method = PricingMethod::kBlackScholes;
  result.diagnostics.price_seconds = seconds_since(start);
  return result;
}

PricingResult price_monte_carlo(std::shared_ptr<const StateTable> table, double spot,
                                const OptionSpec& spec, std::size_t n_steps, double root_p_hint,
                                const MonteCarloOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  spec.validate();
  if (!(spot > 0.0)) throw ConfigError("price_monte_carlo: spot must be positive");
  if (n_steps < 1) throw ConfigError("price_monte_carlo: need at least one step");
  if (options.n_paths < 100) throw ConfigError("price_monte_carlo: need at least 100 paths");
  if (!table || table->states.empty()) throw ConfigError("price_monte_carlo: state table is empty");
  const double dt = spec.maturity / static_cast<double>(n_steps);
  if (std::abs(table->dt_tree - dt) > 1e-9 * dt) {
    throw SpecMismatchError("state table is calibrated for dt = " + std::to_string(table->dt_tree) +
                            " but T / N = " + std::to_string(dt));
  }
  if (std::abs(table->r - spec.rate) > 1e-12) {
    throw SpecMismatchError("state table rate differs from option rate");
  }
  const auto path_steps = static_cast<std::uint64_t>(options.n_paths) * n_steps;
  if (path_steps / n_steps != options.n_paths || path_steps > options.max_path_steps) {
    throw ResourceLimitError("Monte Carlo run of " + std::to_string(options.n_paths) + " paths x " +
                             std::to_string(n_steps) + " steps exceeds the cap of " +
                             std::to_string(options.max_path_steps));
  }

  const StateTransition rule(table, options.momentum, options.history_length);
  const std::size_t root_state = rule.root_state(root_p_hint);
  std::vector<double> payoffs(options.n_paths);

  auto simulate = [&](std::size_t path) {
    Rng rng = make_stream(options.seed, kMonteCarloStream, path);
    std::size_t state = root_state;
    MoveHistory history;
    double s = spot;
    for (std::size_t step = 0; step < n_steps; ++step) {
      const MarketState& ms = table->state(state);
      const Move move = uniform01(rng) < ms.p_mmm ? Move::kUp : Move::kDown;
      s *= move == Move::kUp ? ms.u : ms.d;
      const auto t = rule.next(state, history, move);
      state = t.state_id;
      history = t.history;
    }
    payoffs[path] = payoff(spec, s);
  };

  std::size_t threads = options.n_threads ? options.n_threads : std::thread::hardware_concurrency();
  threads = std::clamp<std::size_t>(threads, 1, 64);
  constexpr std::size_t kChunk = 4096;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t begin = next.fetch_add(kChunk);
      if (begin >= options.n_paths) return;
      const std::size_t end = std::min(options.n_paths, begin + kChunk);
      for (std::size_t i = begin; i < end; ++i) simulate(i);
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  // Serial reduction in path order keeps the sum independent of threading.
  double sum = 0.0;
  for (double v : payoffs) sum += v;
  const double m = static_cast<double>(options.n_paths);
  const double mean = sum / m;
  double ss = 0.0;
  for (double v : payoffs) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (m - 1.0));
  const double discount = std::exp(-spec.rate * spec.maturity);

  PricingResult result;
  result.price = discount * mean;
  result.method = PricingMethod::kMonteCarlo;
  result.n_steps = n_steps;
  result.n_paths = options.n_paths;
  result.std_error = discount * sd / std::sqrt(m);
  result.diagnostics.price_seconds = seconds_since(start);
  return result;
}

Comparison compare_report(const std::vector<PricingResult>& results, std::size_t benchmark_index) {
  if (results.size() < 2) throw ConfigError("compare_report: need at least two results");
  if (benchmark_index >= results.size()) throw ConfigError("compare_report: benchmark index out of range");
  Comparison c;
  c.benchmark_index = benchmark_index;
  c.benchmark_price = results[benchmark_index].price;
  for (const auto& r : results) {
    ComparisonRow row;
    row.method = r.method;
    row.price = r.price;
    row.absolute_difference = r.price - c.benchmark_price;
    if (c.benchmark_price != 0.0) row.relative_difference = row.absolute_difference / c.benchmark_price;
    row.std_error = r.std_error;
    row.diagnostics = r.diagnostics;
    c.rows.push_back(row);
  }
  return c;
}

}  // namespace mstree
