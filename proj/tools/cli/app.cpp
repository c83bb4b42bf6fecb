#include "app.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>

#include <CLI11.hpp>

#include "mstree/calibration.hpp"
#include "mstree/errors.hpp"
#include "mstree/features.hpp"
#include "mstree/forest.hpp"
#include "mstree/json_io.hpp"
#include "mstree/market_data.hpp"
#include "mstree/metrics.hpp"
#include "mstree/pricing.hpp"
#include "mstree/random.hpp"
#include "mstree/tree.hpp"

namespace mstree::cli {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348'5546'464c'4531ULL;

std::string num(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ValidationError("missing " + what + " path");
  if (!std::filesystem::is_regular_file(path)) throw ValidationError(what + " not found: " + path);
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  return out;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  GeneratorConfig gen;
  std::string out = "bars.csv";
  std::string symbol = "SYN";
};

struct IngestArgs {
  std::string in;
  std::string symbol = "SPY";
  std::string out;
  std::string bars_out;
  bool within_session_returns = false;
};

struct FeatureArgs {
  std::string bars;
  std::string symbol = "SYN";
  std::size_t lag_k = 5;
  std::size_t window = 5;
  std::string out = "features.csv";
};

struct TrainArgs {
  std::string bars;
  std::string symbol = "SYN";
  std::string model = "model.json";
  std::string report = "eval.json";
  ForestConfig forest;
  double train_fraction = 0.7;
  std::size_t folds = 5;
  std::size_t calibration_bins = 10;
  bool shuffle_labels = false;
};

struct CalibrateArgs {
  std::string bars;
  std::string symbol = "SYN";
  std::string model;
  std::string out = "states.json";
  CalibrationConfig config;
  double days = 30.0;
  std::size_t steps = 10;
  bool no_scaling = false;
  bool in_sample = false;
};

struct TreeArgs {
  std::string states;
  std::string out = "tree.json";
  double spot = 600.0;
  double days = 30.0;
  double rate = 0.05;
  std::size_t steps = 10;
  double root_p = 0.5;
  double momentum = 0.0;
  std::size_t max_nodes = std::size_t{1} << 21;
  std::size_t aggregate = 0;
  double w_price = 1.0;
  double w_hist = 1.0;
};

struct PriceArgs {
  std::string method = "all";
  std::string kind = "call";
  double spot = 600.0;
  double strike = 600.0;
  double days = 30.0;
  double rate = 0.05;
  std::optional<double> vol;
  std::size_t steps = 10;
  std::size_t crr_steps = 1000;
  std::size_t paths = 200000;
  std::size_t mc_threads = 0;
  std::string states;
  double root_p = 0.5;
  double momentum = 0.0;
  std::size_t max_nodes = std::size_t{1} << 21;
  std::size_t aggregate = 0;
  std::string out;
};

struct ReportArgs {
  std::string bars;
  std::string symbol = "SYN";
  std::string eval;
  std::string states;
  std::string out_dir = "panels";
  std::size_t bins = 50;
};

// ---------------------------------------------------------------------------

int cmd_synth(const SynthArgs& a, std::uint64_t seed, std::ostream& out) {
  a.gen.validate();
  const BarSeries series = [&] {
    auto data = synthesize(a.gen, seed);
    return BarSeries(a.symbol, data.series.bars());
  }();
  write_bars(a.out, series);
  out << "wrote " << series.size() << " bars to " << a.out << '\n';
  return kOk;
}

int cmd_ingest(const IngestArgs& a, std::ostream& out) {
  require_file(a.in, "bar file");
  const BarSeries series = load_bars(a.in, a.symbol);
  SummaryOptions opts;
  opts.include_cross_session_returns = !a.within_session_returns;
  const Json summary = Json{{"symbol", series.symbol()}, {"summary", to_json(summarize(series, opts))}};
  if (!a.bars_out.empty()) write_bars(a.bars_out, series);
  if (a.out.empty()) {
    out << summary.dump(2) << '\n';
  } else {
    write_json_file(a.out, summary);
    out << "validated " << series.size() << " bars; summary written to " << a.out << '\n';
  }
  return kOk;
}

int cmd_features(const FeatureArgs& a, std::ostream& out) {
  require_file(a.bars, "bar file");
  FeatureOptions opts;
  opts.lag_k = a.lag_k;
  opts.window = a.window;
  const FeatureMatrix m = build_features(load_bars(a.bars, a.symbol), opts);
  auto file = open_output(a.out);
  write_features_csv(file, m);
  out << "wrote " << m.size() << " rows x " << m.n_features() << " features to " << a.out
      << " (warmup " << m.warmup << ", dropped " << m.dropped_zero_return << " zero-return rows)\n";
  return kOk;
}

int cmd_train(TrainArgs a, std::uint64_t seed, std::ostream& out) {
  require_file(a.bars, "bar file");
  if (!(a.train_fraction > 0.0 && a.train_fraction < 1.0)) {
    throw ConfigError("--train-fraction must lie in (0, 1)");
  }
  a.forest.seed = seed;
  a.forest.validate(kDefaultFeatureCount);

  FeatureMatrix m = build_features(load_bars(a.bars, a.symbol));
  if (a.shuffle_labels) {
    std::vector<int> labels = m.labels();
    Rng rng = make_stream(seed, kShuffleStream, 0);
    std::shuffle(labels.begin(), labels.end(), rng);
    for (std::size_t i = 0; i < labels.size(); ++i) m.rows[i].label = labels[i];
  }
  const auto split = static_cast<std::size_t>(a.train_fraction * static_cast<double>(m.size()));
  const FeatureMatrix train_part = m.slice(0, split);
  const FeatureMatrix test_part = m.slice(split, m.size());

  const Forest forest = train(train_part, a.forest);
  const auto scores = predict_proba(forest, test_part);
  EvalReport report = evaluate(scores, test_part.labels(), a.calibration_bins);
  report.n_train = train_part.size();
  if (a.folds > 0) report.cv = cross_validate(m, a.forest, a.folds);

  write_json_file(a.model, to_json(forest));
  Json j = to_json(report, forest.feature_names(), feature_importance_vector(forest));
  j["shuffled_labels"] = a.shuffle_labels;
  j["forest"] = to_json(a.forest);
  write_json_file(a.report, j);
  out << "test AUC " << num(report.auc);
  if (a.folds > 0) out << ", walk-forward CV AUC " << num(report.cv.mean_auc) << " +/- " << num(report.cv.std_auc);
  out << "\nwrote " << a.model << " and " << a.report << '\n';
  return kOk;
}

int cmd_calibrate(CalibrateArgs a, std::ostream& out) {
  require_file(a.bars, "bar file");
  require_file(a.model, "model file");
  if (a.steps < 1) throw ConfigError("--steps must be >= 1");
  if (!(a.days > 0.0)) throw ConfigError("--days must be > 0");
  a.config.dt_tree = a.no_scaling ? 0.0 : days_to_years(a.days) / static_cast<double>(a.steps);

  const Forest forest = forest_from_json(read_json_file(a.model));
  const FeatureMatrix m = build_features(load_bars(a.bars, a.symbol));
  if (m.n_features() != forest.n_features()) {
    throw ShapeError("model expects " + std::to_string(forest.n_features()) + " features, bars give " +
                     std::to_string(m.n_features()));
  }
  // The forest has seen the labels of its chronological training prefix, so
  // by default only the rows after it are used.
  const std::size_t first = a.in_sample ? 0 : std::min(forest.n_training_samples(), m.size());
  const FeatureMatrix rows = m.slice(first, m.size());
  if (rows.size() < 2) {
    throw InsufficientDataError("no rows after the model's " + std::to_string(first) +
                                " training rows; pass --in-sample or supply more bars");
  }
  const auto probs = predict_proba(forest, rows);
  const StateTable table = calibrate_all(probs, rows.next_returns(), a.config);
  write_json_file(a.out, to_json(table));
  const StateTableSummary s = summarize_states(table);
  out << "calibrated " << table.states.size() << " states from " << rows.size() << " rows (" << s.n_pooled << " pooled, " << s.n_optimized
      << " adjusted); mean KL " << num(s.mean_kl) << "; wrote " << a.out << '\n';
  return kOk;
}

std::shared_ptr<const StateTable> load_states(const std::string& path) {
  require_file(path, "state table");
  return std::make_shared<const StateTable>(state_table_from_json(read_json_file(path)));
}

TreeOptions tree_options(double momentum, std::size_t max_nodes, std::size_t aggregate, double w_price,
                         double w_hist) {
  TreeOptions t;
  t.momentum = momentum;
  t.max_total_nodes = max_nodes;
  if (aggregate > 0) t.aggregation = AggregationOptions{aggregate, w_price, w_hist};
  return t;
}

int cmd_build_tree(const TreeArgs& a, std::ostream& out) {
  if (a.steps < 1) throw ConfigError("--steps must be >= 1");
  if (!(a.days > 0.0)) throw ConfigError("--days must be > 0");
  const auto table = load_states(a.states);
  const double dt = days_to_years(a.days) / static_cast<double>(a.steps);
  const PricingTree tree =
      build_tree(a.spot, a.steps, a.rate, dt, table, a.root_p,
                 tree_options(a.momentum, a.max_nodes, a.aggregate, a.w_price, a.w_hist));
  write_json_file(a.out, to_json(tree));
  const MartingaleCheck mc = check_martingale(tree);
  out << "built " << tree.node_count() << " nodes over " << a.steps << " steps; max local martingale error "
      << num(mc.max_local_error) << "; wrote " << a.out << '\n';
  return kOk;
}

int cmd_price(const PriceArgs& a, std::uint64_t seed, std::ostream& out) {
  if (!(a.days > 0.0)) throw ConfigError("--days must be > 0");
  if (a.steps < 1) throw ConfigError("--steps must be >= 1");
  OptionSpec spec;
  spec.kind = a.kind == "put" ? OptionKind::kPut : OptionKind::kCall;
  spec.strike = a.strike;
  spec.maturity = days_to_years(a.days);
  spec.rate = a.rate;
  spec.validate();

  const bool all = a.method == "all";
  const bool want_bs = all || a.method == "bs";
  const bool want_crr = all || a.method == "crr";
  const bool want_tree = a.method == "tree" || (all && !a.states.empty());
  const bool want_mc = a.method == "mc" || (all && !a.states.empty());
  if ((want_bs || want_crr) && !a.vol) throw ConfigError("--vol is required for the bs and crr methods");
  std::shared_ptr<const StateTable> table;
  if (want_tree || want_mc) table = load_states(a.states);

  std::vector<PricingResult> results;
  if (want_bs) results.push_back(black_scholes(a.spot, spec, *a.vol));
  if (want_crr) results.push_back(price_crr(a.spot, spec, *a.vol, a.crr_steps));
  const double dt = spec.maturity / static_cast<double>(a.steps);
  if (want_tree) {
    const PricingTree tree = build_tree(a.spot, a.steps, a.rate, dt, table, a.root_p,
                                        tree_options(a.momentum, a.max_nodes, a.aggregate, 1.0, 1.0));
    results.push_back(price_tree(tree, spec));
  }
  if (want_mc) {
    MonteCarloOptions mo;
    mo.n_paths = a.paths;
    mo.seed = seed;
    mo.momentum = a.momentum;
    mo.n_threads = a.mc_threads;
    results.push_back(price_monte_carlo(table, a.spot, spec, a.steps, a.root_p, mo));
  }

  Json report;
  report["option"] = to_json(spec);
  report["spot"] = a.spot;
  report["time_to_expiration_days"] = a.days;
  if (want_tree || want_mc) {
    report["tree_time_steps"] = a.steps;
    report["time_per_step_days"] = a.days / static_cast<double>(a.steps);
    report["dt"] = dt;
  }
  if (a.vol) report["historical_volatility"] = *a.vol;
  Json rows = Json::array();
  for (const auto& r : results) rows.push_back(to_json(r));
  report["results"] = rows;
  if (results.size() >= 2) report["comparison"] = to_json(compare_report(results, 0));

  if (a.out.empty()) {
    out << report.dump(2) << '\n';
  } else {
    write_json_file(a.out, report);
    for (const auto& r : results) out << to_string(r.method) << ' ' << num(r.price) << '\n';
    out << "wrote " << a.out << '\n';
  }
  return kOk;
}

void write_histogram(const std::string& path, std::vector<double> values, std::size_t bins,
                     bool with_normal) {
  values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return !std::isfinite(v); }),
               values.end());
  if (values.empty()) throw InsufficientDataError("no finite values for " + path);
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it > lo ? *hi_it : lo + 1.0;
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<std::size_t> counts(bins, 0);
  double mean = 0.0;
  for (double v : values) {
    const auto b = std::min(bins - 1, static_cast<std::size_t>((v - lo) / width));
    ++counts[b];
    mean += v;
  }
  const double n = static_cast<double>(values.size());
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / std::max(1.0, n - 1.0));

  auto f = open_output(path);
  f << "bin_lo,bin_hi,count,density" << (with_normal ? ",normal_density" : "") << '\n';
  for (std::size_t b = 0; b < bins; ++b) {
    const double a = lo + width * static_cast<double>(b);
    f << num(a) << ',' << num(a + width) << ',' << counts[b] << ','
      << num(static_cast<double>(counts[b]) / (n * width));
    if (with_normal) {
      const double mid = a + 0.5 * width;
      const double z = sd > 0.0 ? (mid - mean) / sd : 0.0;
      f << ',' << num(sd > 0.0 ? std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi)) : 0.0);
    }
    f << '\n';
  }
}

int cmd_report(const ReportArgs& a, std::ostream& out) {
  require_file(a.bars, "bar file");
  require_file(a.eval, "evaluation report");
  require_file(a.states, "state table");
  if (a.bins < 2) throw ConfigError("--bins must be >= 2");
  std::filesystem::create_directories(a.out_dir);
  const auto path = [&](const char* name) { return (std::filesystem::path(a.out_dir) / name).string(); };

  const BarSeries series = load_bars(a.bars, a.symbol);
  write_histogram(path("return_histogram.csv"), log_returns(series), a.bins, true);
  write_histogram(path("ofi_histogram.csv"), order_flow_imbalance(series), a.bins, false);

  std::map<int, std::pair<double, std::size_t>> by_minute;
  for (const Bar& b : series.bars()) {
    auto& slot = by_minute[b.timestamp.hour() * 60 + b.timestamp.minute()];
    slot.first += static_cast<double>(b.volume);
    ++slot.second;
  }
  {
    auto f = open_output(path("intraday_volume.csv"));
    f << "minute_of_day,time,mean_volume,n_bars\n";
    for (const auto& [minute, slot] : by_minute) {
      const std::string hhmm = std::string(minute / 60 < 10 ? "0" : "") + std::to_string(minute / 60) + ':' +
                               (minute % 60 < 10 ? "0" : "") + std::to_string(minute % 60);
      f << minute << ',' << hhmm << ',' << num(slot.first / static_cast<double>(slot.second)) << ','
        << slot.second << '\n';
    }
  }

  const Json eval = read_json_file(a.eval);
  {
    auto f = open_output(path("roc.csv"));
    f << "fpr,tpr,threshold\n";
    for (const auto& p : eval.at("roc")) {
      f << num(p.at("fpr").get<double>()) << ',' << num(p.at("tpr").get<double>()) << ','
        << (p.at("threshold").is_null() ? std::string("inf") : num(p.at("threshold").get<double>())) << '\n';
    }
  }
  {
    auto f = open_output(path("calibration.csv"));
    f << "mean_predicted,observed_frequency,count\n";
    for (const auto& p : eval.at("calibration")) {
      f << num(p.at("mean_predicted").get<double>()) << ',' << num(p.at("observed_frequency").get<double>())
        << ',' << p.at("count").get<std::size_t>() << '\n';
    }
  }

  const StateTable table = state_table_from_json(read_json_file(a.states));
  {
    auto f = open_output(path("factor_scatter.csv"));
    f << "state_id,p_rf,p_mmm,u,d,implied_vol,n_samples,pooled\n";
    for (const auto& s : table.states) {
      f << s.state_id << ',' << num(s.p_rf) << ',' << num(s.p_mmm) << ',' << num(s.u) << ',' << num(s.d)
        << ',' << num(s.implied_vol_annual) << ',' << s.n_samples << ',' << (s.pooled ? 1 : 0) << '\n';
    }
  }
  {
    auto f = open_output(path("kl_scatter.csv"));
    f << "state_id,abs_probability_gap,kl\n";
    for (const auto& s : table.states) {
      f << s.state_id << ',' << num(std::abs(s.p_rf - s.p_mmm)) << ',' << num(s.kl) << '\n';
    }
  }
  out << "wrote 7 panel files to " << a.out_dir << '\n';
  return kOk;
}

int exit_code_for(const Error& e) {
  switch (e.category()) {
    case ErrorCategory::kValidation: return kValidation;
    case ErrorCategory::kResource: return kResource;
    case ErrorCategory::kNumerical: return kNumerical;
  }
  return kInternal;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"State-dependent binomial tree option pricing from minute bars"};
  app.set_config("--config", "", "TOML/INI file; [subcommand] sections hold that command's flags");
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 42;
  app.add_option("--seed", seed, "Seed for data synthesis, forest training and Monte Carlo")
      ->capture_default_str();

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate synthetic minute bars with a planted order-flow signal");
  s->add_option("--bars", synth.gen.n_bars, "Number of bars (>= 100)")->capture_default_str();
  s->add_option("--out", synth.out, "Output CSV")->capture_default_str();
  s->add_option("--symbol", synth.symbol)->capture_default_str();
  s->add_option("--base-price", synth.gen.base_price)->capture_default_str();
  s->add_option("--minute-vol", synth.gen.minute_vol)->capture_default_str();
  s->add_option("--signal-strength", synth.gen.ofi_signal_strength, "Planted OFI signal in [0, 1]")
      ->capture_default_str();
  s->add_option("--u-shape", synth.gen.u_shape_amplitude, "Intraday activity amplitude in [0, 1)")
      ->capture_default_str();
  s->add_option("--zero-volume-prob", synth.gen.zero_volume_prob)->capture_default_str();
  s->add_option("--tail-dof", synth.gen.tail_dof, "Student-t degrees of freedom (> 2)")->capture_default_str();

  IngestArgs ingest;
  auto* in = app.add_subcommand("ingest", "Validate a bar CSV and print summary statistics");
  in->add_option("--in", ingest.in, "Input bar CSV")->required();
  in->add_option("--symbol", ingest.symbol)->capture_default_str();
  in->add_option("--out", ingest.out, "Summary JSON (stdout if omitted)");
  in->add_option("--bars-out", ingest.bars_out, "Re-emit the validated bars in canonical CSV form");
  in->add_flag("--within-session-returns", ingest.within_session_returns,
               "Exclude overnight returns from the statistics");

  FeatureArgs feat;
  auto* fe = app.add_subcommand("features", "Write the predictor matrix as CSV");
  fe->add_option("--bars", feat.bars, "Input bar CSV")->required();
  fe->add_option("--symbol", feat.symbol)->capture_default_str();
  fe->add_option("--lag-k", feat.lag_k)->capture_default_str();
  fe->add_option("--window", feat.window, "OFI window in bars")->capture_default_str();
  fe->add_option("--out", feat.out)->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the random forest and write model and evaluation JSON");
  t->add_option("--bars", tr.bars, "Input bar CSV")->required();
  t->add_option("--symbol", tr.symbol)->capture_default_str();
  t->add_option("--model", tr.model)->capture_default_str();
  t->add_option("--report", tr.report)->capture_default_str();
  t->add_option("--trees", tr.forest.n_trees)->capture_default_str();
  t->add_option("--max-depth", tr.forest.max_depth)->capture_default_str();
  t->add_option("--min-leaf", tr.forest.min_samples_leaf)->capture_default_str();
  t->add_option("--mtry", tr.forest.features_per_split, "Features per split (0: ceil sqrt F)")
      ->capture_default_str();
  t->add_option("--max-bins", tr.forest.max_bins)->capture_default_str();
  t->add_option("--threads", tr.forest.n_threads, "0: all cores")->capture_default_str();
  t->add_option("--train-fraction", tr.train_fraction, "Chronological train share for the test report")
      ->capture_default_str();
  t->add_option("--folds", tr.folds, "Walk-forward CV folds (0 disables)")->capture_default_str();
  t->add_option("--calibration-bins", tr.calibration_bins)->capture_default_str();
  t->add_flag("--shuffle-labels", tr.shuffle_labels, "Permute labels (permutation baseline)");

  CalibrateArgs cal;
  auto* c = app.add_subcommand("calibrate", "Bin forest probabilities into states and calibrate factors");
  c->add_option("--bars", cal.bars, "Input bar CSV")->required();
  c->add_option("--symbol", cal.symbol)->capture_default_str();
  c->add_option("--model", cal.model, "Forest model JSON")->required();
  c->add_option("--out", cal.out)->capture_default_str();
  c->add_option("--bins", cal.config.n_bins)->capture_default_str();
  c->add_option("--rate", cal.config.r, "Annual continuously compounded rate")->capture_default_str();
  c->add_option("--w1", cal.config.weights.probability, "Weight on KL(p_mmm || p_rf)")->capture_default_str();
  c->add_option("--w2", cal.config.weights.volatility, "Weight on relative variance error")
      ->capture_default_str();
  c->add_option("--min-samples", cal.config.min_samples)->capture_default_str();
  c->add_option("--minutes-per-year", cal.config.minutes_per_year)->capture_default_str();
  c->add_option("--days", cal.days, "Option horizon in calendar days")->capture_default_str();
  c->add_option("--steps", cal.steps, "Tree steps over the horizon")->capture_default_str();
  c->add_flag("--no-scaling", cal.no_scaling, "Keep per-minute factors (tree step = one bar)");
  c->add_flag("--in-sample", cal.in_sample, "Also use the rows the model was trained on");

  TreeArgs tree;
  auto* b = app.add_subcommand("build-tree", "Build the pricing tree and dump it as JSON");
  b->add_option("--states", tree.states, "State table JSON")->required();
  b->add_option("--out", tree.out)->capture_default_str();
  b->add_option("--spot", tree.spot)->capture_default_str();
  b->add_option("--days", tree.days)->capture_default_str();
  b->add_option("--rate", tree.rate)->capture_default_str();
  b->add_option("--steps", tree.steps)->capture_default_str();
  b->add_option("--root-p", tree.root_p, "Forest probability that selects the root state")
      ->capture_default_str();
  b->add_option("--momentum", tree.momentum, "Child hint shift after up/down moves")->capture_default_str();
  b->add_option("--max-nodes", tree.max_nodes, "Hard cap on total nodes")->capture_default_str();
  b->add_option("--aggregate", tree.aggregate, "Max nodes per level (0: no aggregation)")
      ->capture_default_str();
  b->add_option("--w-price", tree.w_price)->capture_default_str();
  b->add_option("--w-hist", tree.w_hist)->capture_default_str();

  PriceArgs pr;
  auto* p = app.add_subcommand("price", "Price a European option");
  p->add_option("--method", pr.method)
      ->check(CLI::IsMember({"bs", "crr", "tree", "mc", "all"}))
      ->capture_default_str();
  p->add_option("--kind", pr.kind)->check(CLI::IsMember({"call", "put"}))->capture_default_str();
  p->add_option("--spot", pr.spot)->capture_default_str();
  p->add_option("--strike", pr.strike)->capture_default_str();
  p->add_option("--days", pr.days, "Calendar days to expiry (years = days / 365)")->capture_default_str();
  p->add_option("--rate", pr.rate)->capture_default_str();
  p->add_option("--vol", pr.vol, "Annual volatility for bs and crr");
  p->add_option("--steps", pr.steps, "Tree / Monte Carlo steps")->capture_default_str();
  p->add_option("--crr-steps", pr.crr_steps)->capture_default_str();
  p->add_option("--paths", pr.paths)->capture_default_str();
  p->add_option("--mc-threads", pr.mc_threads, "0: all cores")->capture_default_str();
  p->add_option("--states", pr.states, "State table JSON (tree and mc)");
  p->add_option("--root-p", pr.root_p)->capture_default_str();
  p->add_option("--momentum", pr.momentum)->capture_default_str();
  p->add_option("--max-nodes", pr.max_nodes)->capture_default_str();
  p->add_option("--aggregate", pr.aggregate)->capture_default_str();
  p->add_option("--out", pr.out, "Report JSON (stdout if omitted)");

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "Emit CSV panel data from earlier artifacts");
  r->add_option("--bars", rep.bars)->required();
  r->add_option("--symbol", rep.symbol)->capture_default_str();
  r->add_option("--eval", rep.eval, "Evaluation report JSON from train")->required();
  r->add_option("--states", rep.states, "State table JSON from calibrate")->required();
  r->add_option("--out-dir", rep.out_dir)->capture_default_str();
  r->add_option("--bins", rep.bins)->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, seed, out);
    if (in->parsed()) return cmd_ingest(ingest, out);
    if (fe->parsed()) return cmd_features(feat, out);
    if (t->parsed()) return cmd_train(tr, seed, out);
    if (c->parsed()) return cmd_calibrate(cal, out);
    if (b->parsed()) return cmd_build_tree(tree, out);
    if (p->parsed()) return cmd_price(pr, seed, out);
    if (r->parsed()) return cmd_report(rep, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kInternal;
}

}  // namespace mstree::cli
