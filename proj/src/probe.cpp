// SPDX-License-Identifier: Apache-2.0
#include "cap/probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace cap {

Matd LinearModel::scores(const Matd& x) const {
  Matd s = x * weights;
  s.rowwise() += bias.transpose();
  return s;
}

Matd LinearModel::posteriors(const Matd& x) const {
  Matd s = scores(x);
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double m = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - m).exp();
    s.row(r) /= s.row(r).sum();
  }
  return s;
}

std::vector<int> LinearModel::predict(const Matd& x) const {
  const Matd s = scores(x);
  std::vector<int> out(s.rows());
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    Eigen::Index c;
    s.row(r).maxCoeff(&c);
    out[r] = static_cast<int>(c);
  }
  return out;
}

namespace {

Vecd class_weights(const std::vector<int>& y, int num_classes, bool balanced) {
  Vecd w = Vecd::Ones(num_classes);
  if (!balanced) return w;
  Vecd counts = Vecd::Zero(num_classes);
  for (int c : y) counts[c] += 1.0;
  for (int c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) throw Error("class absent from train split");
    w[c] = static_cast<double>(y.size()) / (num_classes * counts[c]);
  }
  return w;
}

// Weighted softmax cross-entropy and its gradient.
double logreg_eval(const Matd& x, const std::vector<int>& y, const Vecd& cw,
                   double l2, const Matd& w, const Vecd& b, Matd* gw,
                   Vecd* gb) {
  const auto n = static_cast<Eigen::Index>(y.size());
  Matd p = x * w;
  p.rowwise() += b.transpose();
  double loss = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const double m = p.row(r).maxCoeff();
    const double lse = m + std::log((p.row(r).array() - m).exp().sum());
    loss += cw[y[r]] * (lse - p(r, y[r]));
    p.row(r) = (p.row(r).array() - lse).exp();  // now the posterior row
    p.row(r) *= cw[y[r]];
    p(r, y[r]) -= cw[y[r]];
  }
  loss = loss / n + 0.5 * l2 * w.squaredNorm();
  if (gw) *gw = x.transpose() * p / double(n) + l2 * w;
  if (gb) *gb = p.colwise().sum().transpose() / double(n);
  return loss;
}

}  // namespace

double logreg_objective(const Matd& x, const std::vector<int>& y,
                        int num_classes, double l2, bool balanced,
                        const Matd& w, const Vecd& b) {
  return logreg_eval(x, y, class_weights(y, num_classes, balanced), l2, w, b,
                     nullptr, nullptr);
}

LinearModel fit_logreg(const Matd& x, const std::vector<int>& y,
                       int num_classes, const ProbeSpec& spec, bool balanced) {
  if (num_classes < 2) throw Error("fit_logreg: need >= 2 classes");
  if (x.rows() < num_classes) throw Error("fit_logreg: N < C");
  const Vecd cw = class_weights(y, num_classes, balanced);
  const Eigen::Index d = x.cols();

  Matd w = Matd::Zero(d, num_classes);
  Vecd b = Vecd::Zero(num_classes);
  Matd gw, gw_prev;
  Vecd gb, gb_prev;
  Matd w_prev;
  Vecd b_prev;
  double f = logreg_eval(x, y, cw, spec.l2, w, b, &gw, &gb);
  double step = 1.0;

  for (int it = 0; it < spec.max_iterations; ++it) {
    const double gnorm = std::sqrt(gw.squaredNorm() + gb.squaredNorm());
    if (gnorm <= spec.tolerance) break;

    if (it > 0) {
      // Barzilai-Borwein step length, clamped, with Armijo safeguard below.
      const Matd sw = w - w_prev;
      const Vecd sb = b - b_prev;
      const Matd yw = gw - gw_prev;
      const Vecd yb = gb - gb_prev;
      const double sy = (sw.array() * yw.array()).sum() + sb.dot(yb);
      const double ss = sw.squaredNorm() + sb.squaredNorm();
      if (sy > 1e-300) step = std::clamp(ss / sy, 1e-8, 1e8);
    }

    w_prev = w;
    b_prev = b;
    gw_prev = gw;
    gb_prev = gb;
    double trial_f = 0.0;
    Matd wt;
    Vecd bt;
    int halvings = 0;
    for (; halvings < 60; ++halvings) {
      wt = w - step * gw;
      bt = b - step * gb;
      trial_f = logreg_eval(x, y, cw, spec.l2, wt, bt, nullptr, nullptr);
      if (trial_f <= f - 1e-4 * step * gnorm * gnorm) break;
      step *= 0.5;
    }
    if (halvings == 60) break;  // no descent direction progress left
    w = wt;
    b = bt;
    f = logreg_eval(x, y, cw, spec.l2, w, b, &gw, &gb);
  }

  LinearModel model;
  model.weights = w;
  model.bias = b;
  return model;
}

LinearModel fit_lda(const Matd& x, const std::vector<int>& y, int num_classes,
                    double shrinkage) {
  if (shrinkage < 0) throw Error("fit_lda: shrinkage must be >= 0");
  const auto n = static_cast<Eigen::Index>(y.size());
  const Eigen::Index d = x.cols();
  Matd means = Matd::Zero(num_classes, d);
  Vecd counts = Vecd::Zero(num_classes);
  for (Eigen::Index r = 0; r < n; ++r) {
    means.row(y[r]) += x.row(r);
    counts[y[r]] += 1.0;
  }
  for (int c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) throw Error("class absent from train split");
    means.row(c) /= counts[c];
  }
  Matd sigma = Matd::Zero(d, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Vecd dev = (x.row(r) - means.row(y[r])).transpose();
    sigma += dev * dev.transpose();
  }
  sigma /= static_cast<double>(std::max<Eigen::Index>(n - num_classes, 1));
  sigma += shrinkage * Matd::Identity(d, d);

  if (shrinkage == 0.0) {
    const Eigen::FullPivLU<Matd> lu(sigma);
    if (lu.rank() < d)
      throw Error("singular pooled covariance; use shrinkage > 0");
  }
  const Eigen::LDLT<Matd> solver(sigma);

  LinearModel model;
  model.weights.resize(d, num_classes);
  model.bias.resize(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    const Vecd wc = solver.solve(means.row(c).transpose());
    model.weights.col(c) = wc;
    model.bias[c] = -0.5 * means.row(c).dot(wc) +
                    std::log(counts[c] / static_cast<double>(n));
  }
  return model;
}

double metric_accuracy(const std::vector<int>& pred,
                       const std::vector<int>& truth) {
  if (pred.size() != truth.size() || truth.empty())
    throw Error("metric_accuracy: size mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += pred[i] == truth[i];
  return static_cast<double>(correct) / truth.size();
}

double metric_uar(const std::vector<int>& pred, const std::vector<int>& truth,
                  int num_classes) {
  if (pred.size() != truth.size() || truth.empty())
    throw Error("metric_uar: size mismatch");
  std::vector<double> correct(num_classes, 0), support(num_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    support[truth[i]] += 1;
    correct[truth[i]] += pred[i] == truth[i];
  }
  double sum = 0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c)
    if (support[c] > 0) {
      sum += correct[c] / support[c];
      ++present;
    }
  return sum / present;
}

double metric_eer(const std::vector<double>& scores,
                  const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw Error("metric_eer: size mismatch");
  double n_pos = 0, n_neg = 0;
  for (int l : labels) (l ? n_pos : n_neg) += 1;
  if (n_pos == 0 || n_neg == 0)
    throw Error("eer requires both classes present");

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  // Operating points of the ROC staircase; score ties move as one group.
  double far_prev = 0.0, frr_prev = 1.0;
  double acc_pos = 0, acc_neg = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? acc_pos : acc_neg) += 1;
      ++j;
    }
    const double far = acc_neg / n_neg;
    const double frr = 1.0 - acc_pos / n_pos;
    if (far >= frr) {
      const double d_prev = far_prev - frr_prev;  // <= 0
      const double d_cur = far - frr;             // >= 0
      if (d_cur == d_prev) return far;
      const double alpha = -d_prev / (d_cur - d_prev);
      return far_prev + alpha * (far - far_prev);
    }
    far_prev = far;
    frr_prev = frr;
    i = j;
  }
  return far_prev;  // unreached: far hits 1 >= frr eventually
}

int ProbeReport::best_layer(const std::string& policy) const {
  int best = -1;
  double best_score = -1.0;
  for (const auto& [key, score] : dev_aggregate)
    if (key.second == policy && score > best_score) {
      best_score = score;
      best = key.first;
    }
  if (best < 0) throw Error("no aggregate for policy " + policy);
  return best;
}

void ProbeReport::save_csv(const std::string& path) const {
  std::ofstream out(path + ".tmp");
  if (!out) throw Error("cannot write probe report: " + path);
  out << "task,layer,policy,classifier,dev_metric,test_metric,chosen\n";
  for (const auto& r : rows)
    out << r.task_id << "," << r.layer << "," << r.policy << ","
        << r.classifier << "," << r.dev_metric << "," << r.test_metric << ","
        << (r.chosen ? 1 : 0) << "\n";
  out.close();
  if (std::rename((path + ".tmp").c_str(), path.c_str()) != 0)
    throw Error("cannot finalize probe report: " + path);
}

namespace {

struct TaskSlice {
  std::vector<std::string> classes;
  Matd x[3];                  // per split
  std::vector<int> y[3];
  std::vector<std::string> clip_ids[3];
  MetricKind metric;
  int positive_class = -1;
};

double evaluate(const LinearModel& model, const TaskSlice& s, int split,
                std::vector<int>* pred_out, std::vector<double>* score_out) {
  const std::vector<int> pred = model.predict(s.x[split]);
  if (pred_out) *pred_out = pred;
  if (s.metric == MetricKind::kEer) {
    const Matd post = model.posteriors(s.x[split]);
    std::vector<double> sc(post.rows());
    std::vector<int> pos(post.rows());
    for (Eigen::Index r = 0; r < post.rows(); ++r) {
      sc[r] = post(r, s.positive_class);
      pos[r] = s.y[split][r] == s.positive_class;
    }
    if (score_out) *score_out = sc;
    return metric_eer(sc, pos);
  }
  if (s.metric == MetricKind::kUar)
    return metric_uar(pred, s.y[split], static_cast<int>(s.classes.size()));
  return metric_accuracy(pred, s.y[split]);
}

// Higher is better for accuracy/UAR, lower for EER.
bool better(MetricKind m, double a, double b) {
  return m == MetricKind::kEer ? a < b : a > b;
}

double accuracy_like(MetricKind m, double v) {
  return m == MetricKind::kEer ? 1.0 - v : v;
}

}  // namespace

ProbeReport run_benchmark(const EmbeddingTable& table,
                          const std::vector<TaskDef>& tasks,
                          const ProbeSpec& spec) {
  // Enumerate (layer, policy) pairs present in the table.
  std::set<std::pair<int, std::string>> slots;
  for (const auto& r : table.rows) slots.insert({r.layer_index, r.window_policy});

  ProbeReport report;
  std::map<std::pair<int, std::string>, std::vector<double>> dev_parts,
      test_parts;

  for (const auto& task : tasks) {
    for (const auto& [layer, policy] : slots) {
      // Rows for this cell, ordered by clip id for cross-model alignment.
      std::vector<const EmbeddingRow*> cell;
      for (const auto& r : table.rows)
        if (r.task_id == task.task_id && r.layer_index == layer &&
            r.window_policy == policy)
          cell.push_back(&r);
      if (cell.empty())
        throw Error("task missing from embedding table: " + task.task_id);
      std::sort(cell.begin(), cell.end(),
                [](const EmbeddingRow* a, const EmbeddingRow* b) {
                  return a->clip_id < b->clip_id;
                });

      TaskSlice s;
      s.metric = task.metric;
      std::set<std::string> train_labels;
      for (const auto* r : cell)
        if (r->split == Split::kTrain) train_labels.insert(r->label);
      s.classes.assign(train_labels.begin(), train_labels.end());
      auto class_index = [&](const std::string& label) {
        const auto it =
            std::find(s.classes.begin(), s.classes.end(), label);
        if (it == s.classes.end())
          throw Error("class absent from train split: " + label);
        return static_cast<int>(it - s.classes.begin());
      };
      for (int split = 0; split < 3; ++split) {
        std::vector<const EmbeddingRow*> part;
        for (const auto* r : cell)
          if (static_cast<int>(r->split) == split) part.push_back(r);
        if (part.empty())
          throw Error("missing split for task " + task.task_id + ": " +
                      split_name(static_cast<Split>(split)));
        s.x[split].resize(static_cast<Eigen::Index>(part.size()),
                          table.dim);
        for (std::size_t i = 0; i < part.size(); ++i) {
          s.x[split].row(static_cast<Eigen::Index>(i)) =
              part[i]->vec.transpose().cast<double>();
          s.y[split].push_back(class_index(part[i]->label));
          s.clip_ids[split].push_back(part[i]->clip_id);
        }
      }
      if (task.metric == MetricKind::kEer) {
        std::string positive = task.positive_label;
        if (positive.empty())
          positive = train_labels.count("spoof") ? "spoof" : s.classes.back();
        s.positive_class = class_index(positive);
      }

      // Standardize per dimension with train statistics.
      const Eigen::RowVectorXd mean = s.x[0].colwise().mean();
      Eigen::RowVectorXd sd =
          ((s.x[0].rowwise() - mean).array().square().colwise().sum() /
           s.x[0].rows())
              .sqrt();
      sd = sd.cwiseMax(1e-8);
      for (int split = 0; split < 3; ++split)
        s.x[split] =
            (s.x[split].rowwise() - mean).array().rowwise() / sd.array();

      const int num_classes = static_cast<int>(s.classes.size());
      struct Fit {
        std::string name;
        LinearModel model;
        double dev = 0, test = 0;
      };
      std::vector<Fit> fits;
      fits.push_back({"logreg", fit_logreg(s.x[0], s.y[0], num_classes, spec,
                                           false)});
      fits.push_back({"balanced_logreg",
                      fit_logreg(s.x[0], s.y[0], num_classes, spec, true)});
      fits.push_back(
          {"lda", fit_lda(s.x[0], s.y[0], num_classes, spec.lda_shrinkage)});

      int chosen = 0;
      for (std::size_t i = 0; i < fits.size(); ++i) {
        fits[i].dev = evaluate(fits[i].model, s, 1, nullptr, nullptr);
        fits[i].test = evaluate(fits[i].model, s, 2, nullptr, nullptr);
        if (i > 0 && better(task.metric, fits[i].dev, fits[chosen].dev))
          chosen = static_cast<int>(i);
      }
      for (std::size_t i = 0; i < fits.size(); ++i)
        report.rows.push_back(ProbeResultRow{
            task.task_id, layer, policy, fits[i].name, fits[i].dev,
            fits[i].test, static_cast<int>(i) == chosen});

      std::vector<int> test_pred;
      std::vector<double> test_scores;
      evaluate(fits[chosen].model, s, 2, &test_pred, &test_scores);
      std::vector<TestPrediction> preds;
      for (std::size_t i = 0; i < test_pred.size(); ++i)
        preds.push_back(TestPrediction{
            s.clip_ids[2][i], s.classes[s.y[2][i]], s.classes[test_pred[i]],
            test_scores.empty() ? 0.0 : test_scores[i]});
      report.predictions[ProbeReport::key(task.task_id, layer, policy)] =
          std::move(preds);

      dev_parts[{layer, policy}].push_back(
          accuracy_like(task.metric, fits[chosen].dev));
      test_parts[{layer, policy}].push_back(
          accuracy_like(task.metric, fits[chosen].test));
    }
  }

  for (const auto& [slot, parts] : dev_parts) {
    double sum = 0;
    for (double v : parts) sum += v;
    report.dev_aggregate[slot] = sum / parts.size();
  }
  for (const auto& [slot, parts] : test_parts) {
    double sum = 0;
    for (double v : parts) sum += v;
    report.test_aggregate[slot] = sum / parts.size();
  }
  return report;
}

DisagreementResult disagreement_matrix(
    const std::vector<std::string>& model_names,
    const std::map<std::string,
                   std::map<std::string, std::vector<TestPrediction>>>&
        predictions) {
  if (model_names.size() < 2)
    throw Error("disagreement_matrix: need >= 2 models");
  const auto m = static_cast<Eigen::Index>(model_names.size());
  DisagreementResult out;
  out.model_names = model_names;
  out.matrix = Matd::Constant(m, m, std::nan(""));

  for (Eigen::Index xi = 0; xi < m; ++xi)
    for (Eigen::Index yi = 0; yi < m; ++yi) {
      if (xi == yi) continue;
      const auto& px = predictions.at(model_names[xi]);
      const auto& py = predictions.at(model_names[yi]);
      std::vector<double> task_fracs;
      for (const auto& [task, preds_x] : px) {
        const auto it = py.find(task);
        if (it == py.end()) continue;
        const auto& preds_y = it->second;
        if (preds_x.size() != preds_y.size())
          throw Error("prediction sets differ for task " + task);
        std::size_t disagree = 0, y_correct = 0;
        for (std::size_t i = 0; i < preds_x.size(); ++i) {
          if (preds_x[i].clip_id != preds_y[i].clip_id)
            throw Error("prediction example sets not aligned: " + task);
          if (preds_x[i].pred_label != preds_y[i].pred_label) {
            ++disagree;
            y_correct += preds_y[i].pred_label == preds_y[i].true_label;
          }
        }
        if (disagree == 0) {
          out.excluded.push_back(task + "|" + model_names[xi] + "|" +
                                 model_names[yi]);
          continue;
        }
        task_fracs.push_back(static_cast<double>(y_correct) / disagree);
      }
      if (!task_fracs.empty()) {
        double sum = 0;
        for (double v : task_fracs) sum += v;
        out.matrix(xi, yi) = sum / task_fracs.size();
      }
    }
  return out;
}

}  // namespace cap
