#pragma once

#include <span>
#include <vector>

#include "mstree/forest.hpp"

namespace mstree {

struct CalibrationPoint {
  double mean_predicted = 0.0;
  double observed_frequency = 0.0;
  std::size_t count = 0;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct ClassStats {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct CrossValidation {
  std::vector<double> fold_aucs;
  double mean_auc = 0.0;
  double std_auc = 0.0;
};

struct EvalReport {
  double auc = 0.0;
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  ClassStats up;    // label 1
  ClassStats down;  // label 0
  double mean_score_up = 0.0;
  double mean_score_down = 0.0;
  CrossValidation cv;
  std::vector<CalibrationPoint> calibration;
  std::vector<RocPoint> roc;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

/// Mann-Whitney AUC with ties counted one half. Throws ShapeError on length
/// mismatch and UndefinedMetricError if only one class is present.
double evaluate_auc(std::span<const double> scores, std::span<const int> labels);

/// ROC points from (0,0) to (1,1), one per distinct score threshold,
/// in increasing FPR order.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);

/// Equal-width bins on [0,1]; empty bins are omitted. Throws ConfigError for
/// n_bins < 2.
std::vector<CalibrationPoint> calibration_curve(std::span<const double> scores,
                                                std::span<const int> labels,
                                                std::size_t n_bins = 10);

/// Accuracy, per-class precision/recall/F1 at a 0.5 threshold, AUC, ROC and
/// calibration points. CV fields are left empty.
EvalReport evaluate(std::span<const double> scores, std::span<const int> labels,
                    std::size_t calibration_bins = 10);

/// Walk-forward CV over n_folds + 1 contiguous blocks: fold i trains on
/// blocks [0, i] and tests on block i + 1. Throws ConfigError or
/// InsufficientDataError.
CrossValidation cross_validate(const FeatureMatrix& matrix, const ForestConfig& config,
                               std::size_t n_folds = 5);

}  // namespace mstree
