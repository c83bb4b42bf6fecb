#include "mstree/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mstree/errors.hpp"

namespace mstree {

namespace {

void check_lengths(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ShapeError("scores and labels differ in length (" + std::to_string(scores.size()) +
                     " vs " + std::to_string(labels.size()) + ")");
  }
}

std::vector<std::size_t> order_by_score(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return idx;
}

ClassStats class_stats(std::size_t tp, std::size_t fp, std::size_t fn) {
  ClassStats s;
  s.support = tp + fn;
  s.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  s.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

}  // namespace

double evaluate_auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels);
  const auto idx = order_by_score(scores);
  // Sum of mid-ranks of positives (Mann-Whitney U).
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] == 1) {
        rank_sum += mid_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("AUC undefined: labels contain one class");
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels);
  auto idx = order_by_score(scores);
  std::reverse(idx.begin(), idx.end());
  std::size_t total_pos = 0;
  for (int l : labels) total_pos += (l == 1);
  const std::size_t total_neg = labels.size() - total_pos;
  if (total_pos == 0 || total_neg == 0) throw UndefinedMetricError("ROC undefined: one class");

  std::vector<RocPoint> roc;
  roc.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    const double threshold = scores[idx[i]];
    while (i < idx.size() && scores[idx[i]] == threshold) {
      (labels[idx[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    roc.push_back({static_cast<double>(fp) / static_cast<double>(total_neg),
                   static_cast<double>(tp) / static_cast<double>(total_pos), threshold});
  }
  return roc;
}

std::vector<CalibrationPoint> calibration_curve(std::span<const double> scores,
                                                std::span<const int> labels, std::size_t n_bins) {
  check_lengths(scores, labels);
  if (n_bins < 2) throw ConfigError("calibration_curve: n_bins must be >= 2");
  std::vector<double> sum_score(n_bins, 0.0), sum_label(n_bins, 0.0);
  std::vector<std::size_t> count(n_bins, 0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = std::clamp(scores[i], 0.0, 1.0);
    const auto b = std::min(n_bins - 1, static_cast<std::size_t>(s * static_cast<double>(n_bins)));
    sum_score[b] += s;
    sum_label[b] += labels[i] == 1 ? 1.0 : 0.0;
    ++count[b];
  }
  std::vector<CalibrationPoint> out;
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (count[b] == 0) continue;
    const double c = static_cast<double>(count[b]);
    out.push_back({sum_score[b] / c, sum_label[b] / c, count[b]});
  }
  return out;
}

EvalReport evaluate(std::span<const double> scores, std::span<const int> labels,
                    std::size_t calibration_bins) {
  check_lengths(scores, labels);
  EvalReport r;
  r.auc = evaluate_auc(scores, labels);
  r.roc = roc_curve(scores, labels);
  r.calibration = calibration_curve(scores, labels, calibration_bins);
  r.n_test = scores.size();

  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double sum_up = 0.0, sum_down = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted_up = scores[i] >= 0.5;
    if (labels[i] == 1) {
      sum_up += scores[i];
      (predicted_up ? tp : fn) += 1;
    } else {
      sum_down += scores[i];
      (predicted_up ? fp : tn) += 1;
    }
  }
  const double n = static_cast<double>(scores.size());
  r.accuracy = static_cast<double>(tp + tn) / n;
  r.up = class_stats(tp, fp, fn);
  r.down = class_stats(tn, fn, fp);
  r.balanced_accuracy = 0.5 * (r.up.recall + r.down.recall);
  r.mean_score_up = sum_up / static_cast<double>(tp + fn);
  r.mean_score_down = sum_down / static_cast<double>(tn + fp);
  return r;
}

CrossValidation cross_validate(const FeatureMatrix& matrix, const ForestConfig& config,
                               std::size_t n_folds) {
  if (n_folds < 2) throw ConfigError("cross_validate: n_folds must be >= 2");
  const std::size_t n = matrix.size();
  const std::size_t blocks = n_folds + 1;
  if (n / blocks < std::max<std::size_t>(2 * config.min_samples_leaf, 10)) {
    throw InsufficientDataError("cross_validate: " + std::to_string(n) + " rows is too few for " +
                                std::to_string(n_folds) + " walk-forward folds");
  }
  auto block_start = [&](std::size_t b) { return b * n / blocks; };

  CrossValidation cv;
  for (std::size_t fold = 0; fold < n_folds; ++fold) {
    const FeatureMatrix train_part = matrix.slice(0, block_start(fold + 1));
    const FeatureMatrix test_part = matrix.slice(block_start(fold + 1), block_start(fold + 2));
    const Forest forest = train(train_part, config);
    const auto scores = predict_proba(forest, test_part);
    const auto labels = test_part.labels();
    cv.fold_aucs.push_back(evaluate_auc(scores, labels));
  }
  const double k = static_cast<double>(n_folds);
  cv.mean_auc = std::accumulate(cv.fold_aucs.begin(), cv.fold_aucs.end(), 0.0) / k;
  double ss = 0.0;
  for (double a : cv.fold_aucs) ss += (a - cv.mean_auc) * (a - cv.mean_auc);
  cv.std_auc = std::sqrt(ss / k);
  return cv;
}

}  // namespace mstree
