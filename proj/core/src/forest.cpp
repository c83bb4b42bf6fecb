#include "mstree/forest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>
#include <tuple>

#include "mstree/errors.hpp"
#include "mstree/random.hpp"

namespace mstree {

namespace {

constexpr std::uint64_t kForestStream = 0x666f72;

double gini(double pos, double n) {
  if (n <= 0.0) return 0.0;
  const double p = pos / n;
  return 2.0 * p * (1.0 - p);
}

// Column-major binned copy of the training matrix plus the cut points that
// define each bin. Bin b of feature f holds x with cuts[f][b-1] < x <= cuts[f][b].
struct BinnedData {
  std::size_t n_rows = 0;
  std::size_t n_features = 0;
  std::vector<std::vector<double>> cuts;
  std::vector<std::vector<std::uint16_t>> bins;
  std::vector<std::uint8_t> labels;
};

std::vector<double> make_cuts(std::vector<double> values, std::size_t max_bins) {
  std::sort(values.begin(), values.end());
  std::vector<double> unique = values;
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  std::vector<double> cuts;
  if (unique.size() <= max_bins) {
    for (std::size_t i = 0; i + 1 < unique.size(); ++i) {
      cuts.push_back(unique[i] + 0.5 * (unique[i + 1] - unique[i]));
    }
    return cuts;
  }
  const std::size_t n = values.size();
  for (std::size_t j = 1; j < max_bins; ++j) {
    const double v = values[std::min(n - 1, j * n / max_bins)];
    if (cuts.empty() || v > cuts.back()) cuts.push_back(v);
  }
  // The largest value never needs a cut above it.
  while (!cuts.empty() && cuts.back() >= unique.back()) cuts.pop_back();
  return cuts;
}

BinnedData bin_matrix(const FeatureMatrix& m, std::size_t max_bins) {
  BinnedData d;
  d.n_rows = m.size();
  d.n_features = m.n_features();
  d.cuts.resize(d.n_features);
  d.bins.resize(d.n_features);
  d.labels.resize(d.n_rows);
  for (std::size_t i = 0; i < d.n_rows; ++i) d.labels[i] = static_cast<std::uint8_t>(m.rows[i].label);
  std::vector<double> column(d.n_rows);
  for (std::size_t f = 0; f < d.n_features; ++f) {
    for (std::size_t i = 0; i < d.n_rows; ++i) column[i] = m.rows[i].predictors[f];
    d.cuts[f] = make_cuts(column, max_bins);
    auto& out = d.bins[f];
    out.resize(d.n_rows);
    for (std::size_t i = 0; i < d.n_rows; ++i) {
      const auto& c = d.cuts[f];
      out[i] = static_cast<std::uint16_t>(std::lower_bound(c.begin(), c.end(), column[i]) - c.begin());
    }
  }
  return d;
}

class TreeBuilder {
 public:
  TreeBuilder(const BinnedData& data, const ForestConfig& config, std::size_t features_per_split)
      : data_(data), config_(config), mtry_(features_per_split) {
    std::size_t widest = 1;
    for (const auto& c : data_.cuts) widest = std::max(widest, c.size() + 1);
    hist_n_.resize(widest);
    hist_pos_.resize(widest);
    feature_pool_.resize(data_.n_features);
  }

  DecisionTree build(std::size_t tree_index) {
    Rng rng = make_stream(config_.seed, kForestStream, tree_index);
    const std::size_t n = data_.n_rows;
    samples_.resize(n);
    if (config_.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (auto& s : samples_) s = pick(rng);
      std::sort(samples_.begin(), samples_.end());
    } else {
      std::iota(samples_.begin(), samples_.end(), std::size_t{0});
    }
    tree_ = DecisionTree{};
    grow(0, samples_.size(), 0, rng);
    return std::move(tree_);
  }

 private:
  struct Split {
    int feature = -1;
    std::size_t bin = 0;
    double child_impurity = 0.0;
  };

  int add_node(double pos, double count) {
    tree_.feature.push_back(-1);
    tree_.threshold.push_back(0.0);
    tree_.left.push_back(-1);
    tree_.right.push_back(-1);
    tree_.value.push_back(pos / count);
    tree_.n_samples.push_back(count);
    tree_.impurity.push_back(gini(pos, count));
    return static_cast<int>(tree_.feature.size() - 1);
  }

  int grow(std::size_t begin, std::size_t end, std::size_t depth, Rng& rng) {
    const double count = static_cast<double>(end - begin);
    double pos = 0.0;
    for (std::size_t i = begin; i < end; ++i) pos += data_.labels[samples_[i]];
    const int node = add_node(pos, count);

    const std::size_t min_leaf = config_.min_samples_leaf;
    if (depth >= config_.max_depth || end - begin < 2 * min_leaf || pos == 0.0 || pos == count) {
      return node;
    }

    const Split split = best_split(begin, end, pos, count, rng);
    if (split.feature < 0) return node;
    const double gain = count * gini(pos, count) - split.child_impurity;
    if (!(gain > 1e-12 * count)) return node;

    const auto& bins = data_.bins[static_cast<std::size_t>(split.feature)];
    const auto mid_it = std::stable_partition(
        samples_.begin() + static_cast<long>(begin), samples_.begin() + static_cast<long>(end),
        [&](std::size_t s) { return bins[s] <= split.bin; });
    const auto mid = static_cast<std::size_t>(mid_it - samples_.begin());

    tree_.feature[static_cast<std::size_t>(node)] = split.feature;
    tree_.threshold[static_cast<std::size_t>(node)] =
        data_.cuts[static_cast<std::size_t>(split.feature)][split.bin];
    const int l = grow(begin, mid, depth + 1, rng);
    tree_.left[static_cast<std::size_t>(node)] = l;
    const int r = grow(mid, end, depth + 1, rng);
    tree_.right[static_cast<std::size_t>(node)] = r;
    return node;
  }

  Split best_split(std::size_t begin, std::size_t end, double pos, double count, Rng& rng) {
    // Partial Fisher-Yates draw of mtry distinct candidate features.
    std::iota(feature_pool_.begin(), feature_pool_.end(), 0);
    for (std::size_t i = 0; i < mtry_; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, feature_pool_.size() - 1);
      std::swap(feature_pool_[i], feature_pool_[pick(rng)]);
    }
    std::vector<std::size_t> candidates(feature_pool_.begin(),
                                        feature_pool_.begin() + static_cast<long>(mtry_));
    std::sort(candidates.begin(), candidates.end());

    const double min_leaf = static_cast<double>(config_.min_samples_leaf);
    Split best;
    for (std::size_t f : candidates) {
      const std::size_t n_cuts = data_.cuts[f].size();
      if (n_cuts == 0) continue;
      std::fill_n(hist_n_.begin(), n_cuts + 1, 0.0);
      std::fill_n(hist_pos_.begin(), n_cuts + 1, 0.0);
      const auto& bins = data_.bins[f];
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t s = samples_[i];
        hist_n_[bins[s]] += 1.0;
        hist_pos_[bins[s]] += data_.labels[s];
      }
      double left_n = 0.0, left_pos = 0.0;
      for (std::size_t b = 0; b < n_cuts; ++b) {
        left_n += hist_n_[b];
        left_pos += hist_pos_[b];
        if (left_n < min_leaf) continue;
        const double right_n = count - left_n;
        if (right_n < min_leaf) break;
        if (hist_n_[b] == 0.0) continue;  // same partition as an earlier cut
        const double child = left_n * gini(left_pos, left_n) + right_n * gini(pos - left_pos, right_n);
        if (best.feature < 0 || child < best.child_impurity) {
          best.feature = static_cast<int>(f);
          best.bin = b;
          best.child_impurity = child;
        }
      }
    }
    return best;
  }

  const BinnedData& data_;
  const ForestConfig& config_;
  std::size_t mtry_;
  std::vector<std::size_t> samples_;
  std::vector<std::size_t> feature_pool_;
  std::vector<double> hist_n_;
  std::vector<double> hist_pos_;
  DecisionTree tree_;
};

void check_tree(const DecisionTree& t, std::size_t n_features) {
  const std::size_t n = t.feature.size();
  if (n == 0 || t.threshold.size() != n || t.left.size() != n || t.right.size() != n ||
      t.value.size() != n) {
    throw ShapeError("decision tree arrays are empty or of unequal length");
  }
  if (!t.n_samples.empty() && t.n_samples.size() != n) throw ShapeError("n_samples length mismatch");
  if (!t.impurity.empty() && t.impurity.size() != n) throw ShapeError("impurity length mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(t.value[i] >= 0.0 && t.value[i] <= 1.0)) throw ShapeError("leaf value outside [0, 1]");
    if (t.feature[i] < 0) continue;
    if (static_cast<std::size_t>(t.feature[i]) >= n_features) {
      throw ShapeError("node feature index out of range");
    }
    for (int child : {t.left[i], t.right[i]}) {
      if (child <= static_cast<int>(i) || static_cast<std::size_t>(child) >= n) {
        throw ShapeError("node child index out of range");
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------

std::size_t ForestConfig::resolved_features_per_split(std::size_t n_features) const {
  if (features_per_split != 0) return features_per_split;
  return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_features))));
}

void ForestConfig::validate(std::size_t n_features) const {
  if (n_trees < 1) throw ConfigError("n_trees must be >= 1");
  if (min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be >= 1");
  const std::size_t mtry = resolved_features_per_split(n_features);
  if (mtry < 1 || mtry > n_features) {
    throw ConfigError("features_per_split must lie in [1, " + std::to_string(n_features) + "]");
  }
  if (max_bins < 2 || max_bins > 65535) throw ConfigError("max_bins must lie in [2, 65535]");
}

double DecisionTree::predict(std::span<const double> x) const {
  std::size_t node = 0;
  while (feature[node] >= 0) {
    node = static_cast<std::size_t>(x[static_cast<std::size_t>(feature[node])] <= threshold[node]
                                        ? left[node]
                                        : right[node]);
  }
  return value[node];
}

std::size_t DecisionTree::depth() const {
  std::vector<std::size_t> d(feature.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < feature.size(); ++i) {
    deepest = std::max(deepest, d[i]);
    if (feature[i] >= 0) {
      d[static_cast<std::size_t>(left[i])] = d[i] + 1;
      d[static_cast<std::size_t>(right[i])] = d[i] + 1;
    }
  }
  return deepest;
}

Forest::Forest(std::vector<DecisionTree> trees, std::vector<std::string> feature_names,
               ForestConfig config, std::size_t n_training_samples, double training_up_fraction)
    : trees_(std::move(trees)),
      feature_names_(std::move(feature_names)),
      config_(config),
      n_training_samples_(n_training_samples),
      training_up_fraction_(training_up_fraction) {
  if (trees_.empty()) throw ShapeError("forest has no trees");
  for (const auto& t : trees_) check_tree(t, feature_names_.size());
}

bool Forest::operator==(const Forest& other) const {
  const auto key = [](const ForestConfig& c) {
    return std::tie(c.n_trees, c.max_depth, c.min_samples_leaf, c.features_per_split, c.bootstrap, c.seed,
                    c.max_bins);
  };
  return trees_ == other.trees_ && feature_names_ == other.feature_names_ &&
         key(config_) == key(other.config_) && n_training_samples_ == other.n_training_samples_ &&
         training_up_fraction_ == other.training_up_fraction_;
}

Forest train(const FeatureMatrix& matrix, const ForestConfig& config) {
  const std::size_t n_features = matrix.n_features();
  config.validate(n_features);
  if (matrix.size() < 2 * config.min_samples_leaf || matrix.size() < 2) {
    throw InsufficientDataError("train: need at least " +
                                std::to_string(2 * config.min_samples_leaf) + " rows, got " +
                                std::to_string(matrix.size()));
  }
  std::size_t ups = 0;
  for (const auto& row : matrix.rows) {
    if (row.predictors.size() != n_features) throw ShapeError("train: ragged feature matrix");
    ups += static_cast<std::size_t>(row.label);
  }
  if (ups == 0 || ups == matrix.size()) {
    throw DegenerateError("train: labels contain a single class");
  }

  const BinnedData data = bin_matrix(matrix, config.max_bins);
  const std::size_t mtry = config.resolved_features_per_split(n_features);

  std::vector<DecisionTree> trees(config.n_trees);
  std::size_t n_threads = config.n_threads ? config.n_threads : std::thread::hardware_concurrency();
  n_threads = std::clamp<std::size_t>(n_threads, 1, config.n_trees);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    TreeBuilder builder(data, config, mtry);
    for (std::size_t i = next++; i < config.n_trees; i = next++) trees[i] = builder.build(i);
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  return Forest(std::move(trees), matrix.feature_names, config, matrix.size(),
                static_cast<double>(ups) / static_cast<double>(matrix.size()));
}

double predict_proba(const Forest& forest, std::span<const double> x) {
  if (x.size() != forest.n_features()) {
    throw ShapeError("predict_proba: expected " + std::to_string(forest.n_features()) +
                     " features, got " + std::to_string(x.size()));
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw DomainError("predict_proba: non-finite feature value");
  }
  double sum = 0.0;
  for (const auto& t : forest.trees()) sum += t.predict(x);
  return std::clamp(sum / static_cast<double>(forest.trees().size()), 0.0, 1.0);
}

std::vector<double> predict_proba(const Forest& forest, const FeatureMatrix& matrix) {
  std::vector<double> out;
  out.reserve(matrix.size());
  for (const auto& row : matrix.rows) out.push_back(predict_proba(forest, row.predictors));
  return out;
}

std::vector<double> feature_importance_vector(const Forest& forest) {
  const std::size_t nf = forest.n_features();
  std::vector<double> imp(nf, 0.0);
  for (const auto& t : forest.trees()) {
    if (t.n_samples.empty() || t.impurity.empty()) continue;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t.feature[i] < 0) continue;
      const auto l = static_cast<std::size_t>(t.left[i]);
      const auto r = static_cast<std::size_t>(t.right[i]);
      const double decrease = t.n_samples[i] * t.impurity[i] - t.n_samples[l] * t.impurity[l] -
                              t.n_samples[r] * t.impurity[r];
      imp[static_cast<std::size_t>(t.feature[i])] += std::max(0.0, decrease);
    }
  }
  const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
  if (!(total > 0.0)) return std::vector<double>(nf, nf ? 1.0 / static_cast<double>(nf) : 0.0);
  for (double& v : imp) v /= total;
  return imp;
}

std::map<std::string, double> feature_importance(const Forest& forest) {
  const auto v = feature_importance_vector(forest);
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out[forest.feature_names()[i]] = v[i];
  return out;
}

}  // namespace mstree
