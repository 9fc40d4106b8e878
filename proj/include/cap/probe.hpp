// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "cap/extract.hpp"
#include "cap/synth.hpp"

namespace cap {

struct ProbeSpec {
  double l2 = 1e-3;
  double lda_shrinkage = 1e-2;
  int max_iterations = 2000;
  double tolerance = 1e-7;
};

// Multiclass linear model: scores = X * W + b (row-wise).
struct LinearModel {
  Matd weights;  // D x C
  Vecd bias;     // C
  std::vector<std::string> classes;

  Matd scores(const Matd& x) const;
  Matd posteriors(const Matd& x) const;  // row-wise softmax of scores
  std::vector<int> predict(const Matd& x) const;
};

// L2-regularized multinomial logistic regression, full-batch first-order
// solver; stops at gradient norm <= tolerance or max iterations. Balanced
// mode weights examples by N / (C * N_c).
LinearModel fit_logreg(const Matd& x, const std::vector<int>& y,
                       int num_classes, const ProbeSpec& spec,
                       bool balanced = false);
// Objective value at (W, b); exposed for oracle tests.
double logreg_objective(const Matd& x, const std::vector<int>& y,
                        int num_classes, double l2, bool balanced,
                        const Matd& w, const Vecd& b);

// LDA with shrinkage: pooled covariance + lambda * I.
LinearModel fit_lda(const Matd& x, const std::vector<int>& y, int num_classes,
                    double shrinkage);

double metric_accuracy(const std::vector<int>& pred,
                       const std::vector<int>& truth);
double metric_uar(const std::vector<int>& pred, const std::vector<int>& truth,
                  int num_classes);
// Equal error rate from positive-class scores; linear interpolation between
// adjacent operating points of the ROC staircase.
double metric_eer(const std::vector<double>& scores,
                  const std::vector<int>& positive_labels);

struct TaskDef {
  std::string task_id;
  MetricKind metric = MetricKind::kAccuracy;
  std::string positive_label;  // EER tasks: class treated as positive
};

struct ProbeResultRow {
  std::string task_id;
  int layer = 0;
  std::string policy;
  std::string classifier;  // logreg | balanced_logreg | lda
  double dev_metric = 0.0;
  double test_metric = 0.0;
  bool chosen = false;
};

struct TestPrediction {
  std::string clip_id;
  std::string true_label;
  std::string pred_label;
  double positive_score = 0.0;  // EER tasks only
};

struct ProbeReport {
  std::vector<ProbeResultRow> rows;
  // Chosen-classifier test predictions per (task, layer, policy).
  std::map<std::string, std::vector<TestPrediction>> predictions;
  // Accuracy-like aggregates (EER enters as 1 - EER) per (layer, policy).
  std::map<std::pair<int, std::string>, double> dev_aggregate;
  std::map<std::pair<int, std::string>, double> test_aggregate;

  static std::string key(const std::string& task, int layer,
                         const std::string& policy) {
    return task + "|" + std::to_string(layer) + "|" + policy;
  }
  // Best layer for a policy by dev aggregate.
  int best_layer(const std::string& policy) const;
  void save_csv(const std::string& path) const;
};

ProbeReport run_benchmark(const EmbeddingTable& table,
                          const std::vector<TaskDef>& tasks,
                          const ProbeSpec& spec);

// P[X][Y] = mean over tasks of the fraction of disagreeing test examples
// where model Y is correct; diagonal is NaN. Pairs with zero disagreements
// on a task skip that task; tasks skipped are listed in `excluded`.
struct DisagreementResult {
  std::vector<std::string> model_names;
  Matd matrix;  // NaN diagonal
  std::vector<std::string> excluded;  // "task|X|Y" entries
};

// predictions[model][task] = aligned (clip_id, true, pred) lists.
DisagreementResult disagreement_matrix(
    const std::vector<std::string>& model_names,
    const std::map<std::string, std::map<std::string, std::vector<TestPrediction>>>&
        predictions);

}  // namespace cap
