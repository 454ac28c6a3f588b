#include "ncdwf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "ncdwf/error.hpp"

namespace ncdwf {

std::vector<std::size_t> hungarian(const Tensor& score) {
  if (score.rows() != score.cols()) throw ShapeError("hungarian: matrix must be square");
  if (!score.all_finite()) throw NumericError("hungarian: non-finite entries");
  const std::size_t n = score.rows();
  const double INF = std::numeric_limits<double>::infinity();

  // potentials + augmenting paths on the minimization form (costs negated),
  // 1-based with a virtual row/column 0
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, INF);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = INF;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -score(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::size_t> perm(n);
  for (std::size_t j = 1; j <= n; ++j) perm[p[j] - 1] = j - 1;
  return perm;
}

Tensor contingency(const std::vector<long>& y_pred, const std::vector<long>& y_true) {
  if (y_pred.size() != y_true.size() || y_pred.empty())
    throw ShapeError("contingency: label vectors must have equal nonzero length");
  long max_label = 0;
  for (std::size_t i = 0; i < y_pred.size(); ++i) {
    if (y_pred[i] < 0 || y_true[i] < 0)
      throw Error("contingency: labels must be nonnegative");
    max_label = std::max({max_label, y_pred[i], y_true[i]});
  }
  const std::size_t K = static_cast<std::size_t>(max_label) + 1;
  Tensor counts(K, K);
  for (std::size_t i = 0; i < y_pred.size(); ++i)
    counts(static_cast<std::size_t>(y_pred[i]), static_cast<std::size_t>(y_true[i])) += 1.0;
  return counts;
}

double clustering_accuracy(const std::vector<long>& y_pred,
                           const std::vector<long>& y_true) {
  const Tensor counts = contingency(y_pred, y_true);
  const std::vector<std::size_t> perm = hungarian(counts);
  double matched = 0.0;
  for (std::size_t i = 0; i < counts.rows(); ++i) matched += counts(i, perm[i]);
  return matched / static_cast<double>(y_pred.size());
}

double plain_accuracy(const std::vector<long>& y_pred, const std::vector<long>& y_true) {
  if (y_pred.size() != y_true.size() || y_pred.empty())
    throw ShapeError("plain_accuracy: label vectors must have equal nonzero length");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y_pred.size(); ++i)
    if (y_pred[i] == y_true[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(y_pred.size());
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw ShapeError("roc_auc: scores and labels must have equal nonzero length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // midranks over tied scores
  std::vector<double> rank(scores.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }

  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] == 1) {
      pos_rank_sum += rank[k];
      ++n_pos;
    } else {
      ++n_neg;
    }
  }
  if (n_pos == 0 || n_neg == 0) throw Error("roc_auc: need both classes present");
  const double u = pos_rank_sum - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<long> argmax_rows(const Tensor& m) {
  std::vector<long> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < m.cols(); ++j)
      if (m(i, j) > m(i, best)) best = j;
    out[i] = static_cast<long>(best);
  }
  return out;
}

MetricsReport evaluate_task_aware(const NcdwfModel& model, const EvalSet& test_lab,
                                  const EvalSet& test_unlab,
                                  std::vector<PredictionRow>* rows) {
  if (test_lab.x.empty() || test_unlab.x.empty())
    throw Error("evaluate_task_aware: empty test set");
  const long M = static_cast<long>(model.config().M);

  const std::vector<long> lab_pred = argmax_rows(model.predict_labeled(test_lab.x));
  const std::vector<long> unlab_pred = argmax_rows(model.predict_unlabeled(test_unlab.x));

  MetricsReport rep;
  rep.protocol = "task_aware";
  rep.lab_acc = plain_accuracy(lab_pred, test_lab.y);
  rep.unlab_acc = clustering_accuracy(unlab_pred, test_unlab.y);
  rep.all_acc = 0.5 * (rep.lab_acc + rep.unlab_acc);

  if (rows) {
    rows->clear();
    std::size_t id = 0;
    for (std::size_t i = 0; i < lab_pred.size(); ++i, ++id)
      rows->push_back({id, test_lab.y[i], "lab", lab_pred[i], -1.0});
    for (std::size_t i = 0; i < unlab_pred.size(); ++i, ++id)
      rows->push_back({id, test_unlab.y[i], "unlab", M + unlab_pred[i], -1.0});
  }
  return rep;
}

MetricsReport evaluate_generalized(const NcdwfModel& model, const KciNet& kci, double tau,
                                   const EvalSet& test_lab, const EvalSet& test_unlab,
                                   std::vector<PredictionRow>* rows) {
  if (test_lab.x.empty() || test_unlab.x.empty())
    throw Error("evaluate_generalized: empty test set");
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("evaluate_generalized: tau in (0,1)");
  const long M = static_cast<long>(model.config().M);
  if (rows) rows->clear();
  std::size_t id = 0;

  // labeled side: a sample routed to the unlabeled head is wrong outright
  const Tensor z_lab = model.latents(test_lab.x);
  const Tensor s_lab = kci.scores(z_lab);
  const std::vector<long> lab_pred = argmax_rows(model.labeled_head().forward(z_lab));
  std::size_t lab_correct = 0;
  const std::vector<long> ulb_on_lab = argmax_rows(model.unlabeled_head().forward(z_lab));
  for (std::size_t i = 0; i < test_lab.y.size(); ++i, ++id) {
    const bool to_unlab = s_lab(i, 0) > tau;
    if (!to_unlab && lab_pred[i] == test_lab.y[i]) ++lab_correct;
    if (rows) {
      long pred = to_unlab ? M + ulb_on_lab[i] : lab_pred[i];
      rows->push_back({id, test_lab.y[i], to_unlab ? "unlab" : "lab", pred, s_lab(i, 0)});
    }
  }

  // unlabeled side: cluster accuracy over correctly routed samples, with the
  // wrong-routed ones still in the denominator
  const Tensor z_unlab = model.latents(test_unlab.x);
  const Tensor s_unlab = kci.scores(z_unlab);
  const std::vector<long> unlab_pred = argmax_rows(model.unlabeled_head().forward(z_unlab));
  const std::vector<long> lab_on_unlab = argmax_rows(model.labeled_head().forward(z_unlab));
  std::vector<long> routed_pred, routed_true;
  for (std::size_t i = 0; i < test_unlab.y.size(); ++i, ++id) {
    const bool to_unlab = s_unlab(i, 0) > tau;
    if (to_unlab) {
      routed_pred.push_back(unlab_pred[i]);
      routed_true.push_back(test_unlab.y[i]);
    }
    if (rows) {
      long pred = to_unlab ? M + unlab_pred[i] : lab_on_unlab[i];
      rows->push_back(
          {id, test_unlab.y[i], to_unlab ? "unlab" : "lab", pred, s_unlab(i, 0)});
    }
  }
  double matched = 0.0;
  if (!routed_pred.empty()) {
    const Tensor counts = contingency(routed_pred, routed_true);
    const std::vector<std::size_t> perm = hungarian(counts);
    for (std::size_t i = 0; i < counts.rows(); ++i) matched += counts(i, perm[i]);
  }

  MetricsReport rep;
  rep.protocol = "generalized";
  rep.tau = tau;
  rep.lab_acc = static_cast<double>(lab_correct) / static_cast<double>(test_lab.y.size());
  rep.unlab_acc = matched / static_cast<double>(test_unlab.y.size());
  rep.all_acc = 0.5 * (rep.lab_acc + rep.unlab_acc);
  return rep;
}

void write_report_json(const MetricsReport& report, const std::string& path) {
  nlohmann::json j;
  j["protocol"] = report.protocol;
  if (report.protocol == "generalized") j["tau"] = report.tau;
  j["lab_acc"] = report.lab_acc;
  j["unlab_acc"] = report.unlab_acc;
  j["all_acc"] = report.all_acc;
  std::ofstream os(path);
  if (!os) throw IoError("write_report_json: cannot open " + path);
  os << j.dump(2) << '\n';
}

void write_predictions_csv(const std::vector<PredictionRow>& rows,
                           const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("write_predictions_csv: cannot open " + path);
  os << "sample_id,true_label,route,pred_label,kci_score\n";
  char buf[40];
  for (const PredictionRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.kci_score);
    os << r.sample_id << ',' << r.true_label << ',' << r.route << ',' << r.pred_label
       << ',' << buf << '\n';
  }
  if (!os.flush()) throw IoError("write_predictions_csv: write failed");
}

}  // namespace ncdwf
