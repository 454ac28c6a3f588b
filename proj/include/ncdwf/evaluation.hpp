#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ncdwf/models.hpp"
#include "ncdwf/tensor.hpp"

namespace ncdwf {

// Maximum-weight perfect assignment on a square score matrix.
// Returns perm with perm[row] = assigned column.
std::vector<std::size_t> hungarian(const Tensor& score);

// Square zero-padded contingency matrix: counts(i, j) = #samples with
// predicted label i and true label j.
Tensor contingency(const std::vector<long>& y_pred, const std::vector<long>& y_true);

// Fraction correct under the best permutation matching of predicted labels
// to true labels.
double clustering_accuracy(const std::vector<long>& y_pred,
                           const std::vector<long>& y_true);

double plain_accuracy(const std::vector<long>& y_pred, const std::vector<long>& y_true);

// Rank-based ROC-AUC (midrank tie handling). labels are 0/1; higher scores
// should indicate label 1.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct MetricsReport {
  std::string protocol;  // "task_aware" or "generalized"
  double tau = -1.0;     // set for generalized reports
  double lab_acc = 0.0;
  double unlab_acc = 0.0;
  double all_acc = 0.0;  // (lab + unlab) / 2
};

struct PredictionRow {
  std::size_t sample_id;
  long true_label;
  std::string route;  // "lab" or "unlab"
  long pred_label;    // lab route: class index; unlab route: M + cluster index
  double kci_score;   // -1 when no identifier was involved
};

struct EvalSet {
  Tensor x;
  std::vector<long> y;
};

// Oracle routing: labeled samples scored by the labeled head, unlabeled
// samples scored as clusters from the unlabeled head.
MetricsReport evaluate_task_aware(const NcdwfModel& model, const EvalSet& test_lab,
                                  const EvalSet& test_unlab,
                                  std::vector<PredictionRow>* rows = nullptr);

// KCI routing at threshold tau; wrong-routed samples count against the
// accuracy of their true side.
MetricsReport evaluate_generalized(const NcdwfModel& model, const KciNet& kci, double tau,
                                   const EvalSet& test_lab, const EvalSet& test_unlab,
                                   std::vector<PredictionRow>* rows = nullptr);

void write_report_json(const MetricsReport& report, const std::string& path);
void write_predictions_csv(const std::vector<PredictionRow>& rows,
                           const std::string& path);

std::vector<long> argmax_rows(const Tensor& m);

}  // namespace ncdwf
