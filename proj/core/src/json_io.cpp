#include "mstree/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "mstree/errors.hpp"

namespace mstree {

namespace {

Json variable_json(const VariableStats& v) {
  return Json{{"mean", v.mean}, {"std_dev", v.std_dev}, {"min", v.min},
              {"p25", v.p25},   {"p75", v.p75},         {"max", v.max}};
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json class_json(const ClassStats& s) {
  return Json{{"precision", s.precision}, {"recall", s.recall}, {"f1_score", s.f1}, {"support", s.support}};
}

std::string history_string(const MoveHistory& h) {
  // Oldest move first.
  std::string s;
  for (std::size_t age = h.length; age-- > 0;) s += h.at(age) == Move::kUp ? 'u' : 'd';
  return s;
}

template <typename T>
T get_field(const Json& j, const char* key) {
  if (!j.contains(key)) throw ParseError(0, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace

Json to_json(const SummaryStats& stats) {
  Json j;
  j["n_bars"] = stats.n_bars;
  j["close"] = variable_json(stats.close);
  j["volume"] = variable_json(stats.volume);
  j["log_returns"] = variable_json(stats.log_returns);
  j["spread_proxy"] = variable_json(stats.spread_proxy);
  j["num_ticks"] = variable_json(stats.num_ticks);
  j["return_skewness"] = optional_json(stats.return_skewness);
  j["return_excess_kurtosis"] = optional_json(stats.return_excess_kurtosis);
  return j;
}

Json to_json(const ForestConfig& c) {
  return Json{{"n_trees", c.n_trees},
              {"max_depth", c.max_depth},
              {"min_samples_leaf", c.min_samples_leaf},
              {"features_per_split", c.features_per_split},
              {"bootstrap", c.bootstrap},
              {"seed", c.seed},
              {"max_bins", c.max_bins}};
}

ForestConfig forest_config_from_json(const Json& j) {
  ForestConfig c;
  c.n_trees = get_field<std::size_t>(j, "n_trees");
  c.max_depth = get_field<std::size_t>(j, "max_depth");
  c.min_samples_leaf = get_field<std::size_t>(j, "min_samples_leaf");
  c.features_per_split = get_field<std::size_t>(j, "features_per_split");
  c.bootstrap = get_field<bool>(j, "bootstrap");
  c.seed = get_field<std::uint64_t>(j, "seed");
  c.max_bins = get_field<std::size_t>(j, "max_bins");
  return c;
}

Json to_json(const Forest& forest) {
  Json trees = Json::array();
  for (const auto& t : forest.trees()) {
    trees.push_back(Json{{"feature", t.feature},
                         {"threshold", t.threshold},
                         {"left", t.left},
                         {"right", t.right},
                         {"value", t.value},
                         {"n_samples", t.n_samples},
                         {"impurity", t.impurity}});
  }
  return Json{{"format", "mstree-forest"},
              {"version", kForestFormatVersion},
              {"feature_names", forest.feature_names()},
              {"config", to_json(forest.config())},
              {"n_training_samples", forest.n_training_samples()},
              {"training_up_fraction", forest.training_up_fraction()},
              {"trees", trees}};
}

Forest forest_from_json(const Json& j) {
  if (!j.is_object() || j.value("format", std::string{}) != "mstree-forest") {
    throw ParseError(0, "not a forest model document");
  }
  const int version = get_field<int>(j, "version");
  if (version != kForestFormatVersion) {
    throw ParseError(0, "unsupported forest model version " + std::to_string(version));
  }
  std::vector<DecisionTree> trees;
  for (const auto& jt : get_field<Json>(j, "trees")) {
    DecisionTree t;
    t.feature = get_field<std::vector<int>>(jt, "feature");
    t.threshold = get_field<std::vector<double>>(jt, "threshold");
    t.left = get_field<std::vector<int>>(jt, "left");
    t.right = get_field<std::vector<int>>(jt, "right");
    t.value = get_field<std::vector<double>>(jt, "value");
    t.n_samples = get_field<std::vector<double>>(jt, "n_samples");
    t.impurity = get_field<std::vector<double>>(jt, "impurity");
    trees.push_back(std::move(t));
  }
  try {
    return Forest(std::move(trees), get_field<std::vector<std::string>>(j, "feature_names"),
                  forest_config_from_json(get_field<Json>(j, "config")),
                  get_field<std::size_t>(j, "n_training_samples"),
                  get_field<double>(j, "training_up_fraction"));
  } catch (const ShapeError& e) {
    throw ParseError(0, std::string("invalid forest structure: ") + e.what());
  }
}

Json to_json(const EvalReport& r, const std::vector<std::string>& feature_names,
             const std::vector<double>& importances) {
  Json j;
  j["auc_roc"] = r.auc;
  j["accuracy"] = r.accuracy;
  j["balanced_accuracy"] = r.balanced_accuracy;
  j["precision_up"] = r.up.precision;
  j["precision_down"] = r.down.precision;
  j["recall_up"] = r.up.recall;
  j["recall_down"] = r.down.recall;
  j["f1_score"] = 0.5 * (r.up.f1 + r.down.f1);
  j["up_moves"] = class_json(r.up);
  j["down_moves"] = class_json(r.down);
  j["mean_score_up"] = r.mean_score_up;
  j["mean_score_down"] = r.mean_score_down;
  j["n_train"] = r.n_train;
  j["n_test"] = r.n_test;

  Json cv;
  cv["mean_cv_auc"] = r.cv.mean_auc;
  cv["cv_standard_deviation"] = r.cv.std_auc;
  if (!r.cv.fold_aucs.empty()) {
    const auto [lo, hi] = std::minmax_element(r.cv.fold_aucs.begin(), r.cv.fold_aucs.end());
    cv["cv_range"] = Json::array({*lo, *hi});
  } else {
    cv["cv_range"] = nullptr;
  }
  cv["fold_aucs"] = r.cv.fold_aucs;
  j["cross_validation"] = cv;

  Json features;
  features["number_of_features"] = feature_names.size();
  Json imp = Json::object();
  std::size_t top = 0;
  for (std::size_t i = 0; i < feature_names.size() && i < importances.size(); ++i) {
    imp[feature_names[i]] = importances[i];
    if (importances[i] > importances[top]) top = i;
  }
  if (!importances.empty() && !feature_names.empty()) {
    features["top_feature"] = feature_names[top];
    features["top_feature_importance"] = importances[top];
  }
  features["importances"] = imp;
  j["feature_analysis"] = features;

  Json calibration = Json::array();
  for (const auto& p : r.calibration) {
    calibration.push_back(Json{{"mean_predicted", p.mean_predicted},
                               {"observed_frequency", p.observed_frequency},
                               {"count", p.count}});
  }
  j["calibration"] = calibration;
  Json roc = Json::array();
  for (const auto& p : r.roc) {
    roc.push_back(Json{{"fpr", p.fpr}, {"tpr", p.tpr},
                       {"threshold", std::isfinite(p.threshold) ? Json(p.threshold) : Json(nullptr)}});
  }
  j["roc"] = roc;
  return j;
}

Json to_json(const MarketState& s) {
  return Json{{"state_id", s.state_id},
              {"bin_lo", s.bin_lo},
              {"bin_hi", s.bin_hi},
              {"u", s.u},
              {"d", s.d},
              {"p_rf", s.p_rf},
              {"p_mmm", s.p_mmm},
              {"implied_vol", s.implied_vol_annual},
              {"implied_vol_step", s.implied_vol_step},
              {"kl", s.kl},
              {"n_samples", s.n_samples},
              {"mu", s.mu},
              {"sigma2", s.sigma2},
              {"u_minute", s.u_minute},
              {"d_minute", s.d_minute},
              {"pooled", s.pooled},
              {"scaling_applied", s.scaling_applied},
              {"optimized", s.optimized},
              {"objective", s.objective},
              {"dt", s.dt}};
}

Json to_json(const StateTable& t) {
  Json states = Json::array();
  for (const auto& s : t.states) states.push_back(to_json(s));
  const StateTableSummary summary = summarize_states(t);
  return Json{
      {"format", "mstree-state-table"},
      {"version", kStateTableFormatVersion},
      {"r", t.r},
      {"dt_minute", t.dt_minute},
      {"dt_tree", t.dt_tree},
      {"minutes_per_year", t.minutes_per_year},
      {"bins", t.n_bins},
      {"scaling_applied", t.scaling_applied},
      {"weights", Json{{"w1", t.weights.probability}, {"w2", t.weights.volatility}}},
      {"min_samples", t.min_samples},
      {"pooled", Json{{"p", t.pooled_p}, {"mu", t.pooled_mu}, {"sigma2", t.pooled_sigma2}, {"n", t.pooled_n}}},
      {"summary", Json{{"mean_abs_probability_gap", summary.mean_abs_probability_gap},
                       {"mean_kl", summary.mean_kl},
                       {"max_kl", summary.max_kl},
                       {"gap_kl_spearman", std::isfinite(summary.gap_kl_spearman)
                                               ? Json(summary.gap_kl_spearman)
                                               : Json(nullptr)},
                       {"n_pooled", summary.n_pooled},
                       {"n_optimized", summary.n_optimized}}},
      {"states", states}};
}

StateTable state_table_from_json(const Json& j) {
  if (!j.is_object() || j.value("format", std::string{}) != "mstree-state-table") {
    throw ParseError(0, "not a state table document");
  }
  const int version = get_field<int>(j, "version");
  if (version != kStateTableFormatVersion) {
    throw ParseError(0, "unsupported state table version " + std::to_string(version));
  }
  StateTable t;
  t.r = get_field<double>(j, "r");
  t.dt_minute = get_field<double>(j, "dt_minute");
  t.dt_tree = get_field<double>(j, "dt_tree");
  t.minutes_per_year = get_field<double>(j, "minutes_per_year");
  t.n_bins = get_field<std::size_t>(j, "bins");
  t.scaling_applied = get_field<bool>(j, "scaling_applied");
  const Json w = get_field<Json>(j, "weights");
  t.weights.probability = get_field<double>(w, "w1");
  t.weights.volatility = get_field<double>(w, "w2");
  t.min_samples = get_field<std::size_t>(j, "min_samples");
  const Json pooled = get_field<Json>(j, "pooled");
  t.pooled_p = get_field<double>(pooled, "p");
  t.pooled_mu = get_field<double>(pooled, "mu");
  t.pooled_sigma2 = get_field<double>(pooled, "sigma2");
  t.pooled_n = get_field<std::size_t>(pooled, "n");
  for (const auto& js : get_field<Json>(j, "states")) {
    MarketState s;
    s.state_id = get_field<std::size_t>(js, "state_id");
    s.bin_lo = get_field<double>(js, "bin_lo");
    s.bin_hi = get_field<double>(js, "bin_hi");
    s.u = get_field<double>(js, "u");
    s.d = get_field<double>(js, "d");
    s.p_rf = get_field<double>(js, "p_rf");
    s.p_mmm = get_field<double>(js, "p_mmm");
    s.implied_vol_annual = get_field<double>(js, "implied_vol");
    s.implied_vol_step = get_field<double>(js, "implied_vol_step");
    s.kl = get_field<double>(js, "kl");
    s.n_samples = get_field<std::size_t>(js, "n_samples");
    s.mu = get_field<double>(js, "mu");
    s.sigma2 = get_field<double>(js, "sigma2");
    s.u_minute = get_field<double>(js, "u_minute");
    s.d_minute = get_field<double>(js, "d_minute");
    s.pooled = get_field<bool>(js, "pooled");
    s.scaling_applied = get_field<bool>(js, "scaling_applied");
    s.optimized = get_field<bool>(js, "optimized");
    s.objective = get_field<double>(js, "objective");
    s.dt = get_field<double>(js, "dt");
    if (!(s.u > s.d && s.d > 0.0) || !(s.p_mmm > 0.0 && s.p_mmm < 1.0)) {
      throw ParseError(0, "state " + std::to_string(s.state_id) + " has invalid factors");
    }
    t.states.push_back(s);
  }
  if (t.states.empty()) throw ParseError(0, "state table has no states");
  if (t.n_bins != t.states.size()) throw ParseError(0, "state count differs from bin count");
  return t;
}

Json to_json(const PricingTree& tree) {
  Json levels = Json::array();
  for (std::size_t level = 0; level < tree.levels.size(); ++level) {
    const auto& nodes = tree.levels[level];
    Json jl = Json::array();
    for (const auto& n : nodes) {
      Json children = nullptr;
      if (n.up_child != kNoChild) {
        const auto& next = tree.levels[level + 1];
        children = Json{{"up", next[static_cast<std::size_t>(n.up_child)].node_id},
                        {"down", next[static_cast<std::size_t>(n.down_child)].node_id}};
      }
      jl.push_back(Json{{"id", n.node_id},
                        {"level", n.level},
                        {"price", n.price},
                        {"state_id", n.state_id},
                        {"p_up", n.p_up},
                        {"history", history_string(n.history)},
                        {"mass", n.mass},
                        {"children", children}});
    }
    levels.push_back(jl);
  }
  return Json{{"n_steps", tree.n_steps},
              {"dt", tree.dt},
              {"r", tree.r},
              {"spot", tree.spot},
              {"node_count", tree.node_count()},
              {"merges_per_level", tree.merges_per_level},
              {"levels", levels}};
}

Json to_json(const OptionSpec& spec) {
  return Json{{"type", to_string(spec.kind)},
              {"strike", spec.strike},
              {"time_to_expiration_years", spec.maturity},
              {"risk_free_rate", spec.rate}};
}

Json to_json(const PricingResult& r) {
  Json j{{"method", to_string(r.method)}, {"price", r.price}};
  if (r.n_steps) j["tree_time_steps"] = r.n_steps;
  if (r.n_paths) j["paths"] = r.n_paths;
  if (r.std_error) j["std_error"] = *r.std_error;
  j["computational_performance"] = Json{{"tree_nodes_generated", r.diagnostics.node_count},
                                        {"tree_construction_time_sec", r.diagnostics.build_seconds},
                                        {"pricing_time_sec", r.diagnostics.price_seconds}};
  return j;
}

Json to_json(const Comparison& c) {
  Json rows = Json::array();
  for (const auto& row : c.rows) {
    Json jr{{"method", to_string(row.method)},
            {"price", row.price},
            {"absolute_difference", row.absolute_difference},
            {"relative_difference", row.relative_difference ? Json(*row.relative_difference) : Json("undefined")}};
    if (row.std_error) jr["std_error"] = *row.std_error;
    jr["computational_performance"] = Json{{"tree_nodes_generated", row.diagnostics.node_count},
                                           {"tree_construction_time_sec", row.diagnostics.build_seconds},
                                           {"pricing_time_sec", row.diagnostics.price_seconds}};
    rows.push_back(jr);
  }
  return Json{{"benchmark_method", to_string(c.rows[c.benchmark_index].method)},
              {"benchmark_price", c.benchmark_price},
              {"rows", rows}};
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(0, path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw ValidationError("failed writing " + path);
}

}  // namespace mstree
