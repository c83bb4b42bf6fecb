#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mstree/features.hpp"

namespace mstree {

struct ForestConfig {
  std::size_t n_trees = 300;
  std::size_t max_depth = 12;
  std::size_t min_samples_leaf = 20;
  /// 0 means ceil(sqrt(n_features)).
  std::size_t features_per_split = 0;
  bool bootstrap = true;
  std::uint64_t seed = 42;
  /// Upper bound on candidate thresholds per feature. Features with more
  /// distinct values are cut at quantiles.
  std::size_t max_bins = 256;
  /// 0 means std::thread::hardware_concurrency(). Does not affect results.
  std::size_t n_threads = 0;

  std::size_t resolved_features_per_split(std::size_t n_features) const;
  /// Throws ConfigError.
  void validate(std::size_t n_features) const;
};

/// One binary decision tree in flat-array form. Node 0 is the root; a leaf
/// has feature == -1. Samples with x[feature] <= threshold go left.
struct DecisionTree {
  std::vector<int> feature;
  std::vector<double> threshold;
  std::vector<int> left;
  std::vector<int> right;
  /// Up-fraction of the training samples that reached the node.
  std::vector<double> value;
  /// Training samples (bootstrap multiplicity included) that reached the node.
  std::vector<double> n_samples;
  /// Gini impurity of the node.
  std::vector<double> impurity;

  std::size_t size() const noexcept { return feature.size(); }
  bool is_leaf(std::size_t node) const { return feature[node] < 0; }
  double predict(std::span<const double> x) const;
  std::size_t depth() const;

  bool operator==(const DecisionTree&) const = default;
};

class Forest {
 public:
  Forest() = default;
  /// Direct construction; validates tree structure. Throws ShapeError.
  Forest(std::vector<DecisionTree> trees, std::vector<std::string> feature_names,
         ForestConfig config = {}, std::size_t n_training_samples = 0,
         double training_up_fraction = 0.0);

  const std::vector<DecisionTree>& trees() const noexcept { return trees_; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  const ForestConfig& config() const noexcept { return config_; }
  std::size_t n_features() const noexcept { return feature_names_.size(); }
  std::size_t n_training_samples() const noexcept { return n_training_samples_; }
  double training_up_fraction() const noexcept { return training_up_fraction_; }

  /// Same trees, names, training summary and result-affecting settings
  /// (n_threads is ignored).
  bool operator==(const Forest& other) const;

 private:
  std::vector<DecisionTree> trees_;
  std::vector<std::string> feature_names_;
  ForestConfig config_;
  std::size_t n_training_samples_ = 0;
  double training_up_fraction_ = 0.0;
};

/// Grows a forest by Gini-minimising splits. Deterministic in
/// (matrix, config.seed) whatever the thread count. Throws
/// InsufficientDataError or DegenerateError (single class).
Forest train(const FeatureMatrix& matrix, const ForestConfig& config);

/// Mean leaf up-fraction over trees. Throws ShapeError on wrong length and
/// DomainError on non-finite input.
double predict_proba(const Forest& forest, std::span<const double> x);
std::vector<double> predict_proba(const Forest& forest, const FeatureMatrix& matrix);

/// Mean decrease in impurity per feature, normalised to sum to 1. A forest
/// with no splits reports the uniform distribution.
std::map<std::string, double> feature_importance(const Forest& forest);
/// Same values in column order.
std::vector<double> feature_importance_vector(const Forest& forest);

}  // namespace mstree
