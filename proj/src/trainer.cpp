#include "ncdwf/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "ncdwf/error.hpp"
#include "ncdwf/evaluation.hpp"
#include "ncdwf/kci.hpp"
#include "ncdwf/miregularizer.hpp"
#include "ncdwf/optimizer.hpp"
#include "ncdwf/selflabel.hpp"

namespace ncdwf {

void PhaseConfig::validate() const {
  if (batch_size < 1) throw ConfigError("trainer: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("trainer: learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw ConfigError("trainer: momentum must lie in [0, 1)");
  if (lambda_ce < 0.0 || lambda_mi < 0.0 || lambda_fd < 0.0 || lambda_replay < 0.0)
    throw ConfigError("trainer: loss weights must be nonnegative");
  if (!(pseudo_fraction >= 0.0 && pseudo_fraction < 1.0))
    throw ConfigError("trainer: pseudo_fraction must lie in [0, 1)");
  if (pseudo_fraction > 0.0 && batch_size < 2)
    throw ConfigError("trainer: batch_size must be >= 2 when pseudo_fraction > 0");
  if (!(sinkhorn_epsilon > 0.0)) throw ConfigError("trainer: sinkhorn_epsilon must be > 0");
  if (sinkhorn_max_iters < 1) throw ConfigError("trainer: sinkhorn_max_iters must be >= 1");
  if (!(sinkhorn_tol > 0.0)) throw ConfigError("trainer: sinkhorn_tol must be > 0");
  inversion.validate();
}

void write_train_log_jsonl(const TrainLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const EpochRecord& r : log.epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["loss_ce"] = r.loss_ce;
    j["loss_mi"] = r.loss_mi;
    j["loss_fd"] = r.loss_fd;
    j["loss_replay"] = r.loss_replay;
    j["loss_kci"] = r.loss_kci;
    j["lab_acc"] = r.lab_acc;
    j["unlab_acc"] = r.unlab_acc;
    j["wall_ms"] = r.wall_ms;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failure on " + path);
}

graph::Node cross_entropy_node(graph::Tape& t, graph::Node logits,
                               const std::vector<long>& labels) {
  const std::size_t rows = t.val(logits).rows();
  const std::size_t cols = t.val(logits).cols();
  if (rows != labels.size())
    throw ShapeError("cross entropy: " + std::to_string(rows) + " rows vs " +
                     std::to_string(labels.size()) + " labels");
  Tensor onehot(rows, cols);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= cols)
      throw Error("cross entropy: label " + std::to_string(labels[i]) + " outside [0, " +
                  std::to_string(cols) + ")");
    onehot(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  const graph::Node picked =
      t.row_sum(t.mul(t.softmax_rows(logits), t.input(std::move(onehot))));
  return t.scale(t.sum(t.log(t.clamp_min(picked, 1e-300))),
                 -1.0 / static_cast<double>(rows));
}

graph::Node cross_entropy_soft_node(graph::Tape& t, graph::Node logits, const Tensor& targets) {
  const std::size_t rows = t.val(logits).rows();
  if (!t.val(logits).same_shape(targets))
    throw ShapeError("cross entropy: target shape mismatch");
  const graph::Node lp = t.log(t.clamp_min(t.softmax_rows(logits), 1e-300));
  return t.scale(t.sum(t.mul(lp, t.input(targets))), -1.0 / static_cast<double>(rows));
}

graph::Node joint_cross_entropy_node(graph::Tape& t, graph::Node lab_logits,
                                     graph::Node ulb_logits, const Tensor& lab_targets,
                                     const Tensor& ulb_targets) {
  const std::size_t B = t.val(lab_logits).rows();
  const std::size_t M = t.val(lab_logits).cols();
  const std::size_t N = t.val(ulb_logits).cols();
  if (t.val(ulb_logits).rows() != B)
    throw ShapeError("joint cross entropy: logit row counts disagree");
  if (lab_targets.rows() != B || lab_targets.cols() != M || ulb_targets.rows() != B ||
      ulb_targets.cols() != N)
    throw ShapeError("joint cross entropy: target shape mismatch");

  // Per-row max over both blocks, subtracted as a constant. The shift cancels
  // in the loss value and keeps exp() in range; the row denominator is then
  // at least 1, so the log needs no clamp.
  Tensor shift_lab(B, M), shift_ulb(B, N);
  {
    const Tensor& lv = t.val(lab_logits);
    const Tensor& uv = t.val(ulb_logits);
    for (std::size_t b = 0; b < B; ++b) {
      double m = lv(b, 0);
      for (std::size_t j = 1; j < M; ++j) m = std::max(m, lv(b, j));
      for (std::size_t j = 0; j < N; ++j) m = std::max(m, uv(b, j));
      for (std::size_t j = 0; j < M; ++j) shift_lab(b, j) = m;
      for (std::size_t j = 0; j < N; ++j) shift_ulb(b, j) = m;
    }
  }
  const graph::Node sl = t.sub(lab_logits, t.input(std::move(shift_lab)));
  const graph::Node su = t.sub(ulb_logits, t.input(std::move(shift_ulb)));
  const graph::Node lse = t.log(t.add(t.row_sum(t.exp(sl)), t.row_sum(t.exp(su))));
  const graph::Node picked = t.add(t.row_sum(t.mul(sl, t.input(lab_targets))),
                                   t.row_sum(t.mul(su, t.input(ulb_targets))));
  return t.scale(t.sum(t.sub(lse, picked)), 1.0 / static_cast<double>(B));
}

Tensor one_hot_rows(std::size_t cols, const std::vector<long>& labels) {
  Tensor out(labels.size(), cols);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= cols)
      throw Error("one hot: label " + std::to_string(labels[i]) + " outside [0, " +
                  std::to_string(cols) + ")");
    out(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return out;
}

graph::Node feature_distillation_node(graph::Tape& t, graph::Node z_live, const Tensor& z_frozen,
                                      bool squared) {
  const std::size_t rows = t.val(z_live).rows();
  if (!t.val(z_live).same_shape(z_frozen))
    throw ShapeError("feature drift: live vs frozen shape");
  graph::Node per_row = t.row_sum(t.square(t.sub(z_live, t.input(z_frozen))));
  if (!squared) per_row = t.sqrt(per_row);
  return t.scale(t.sum(per_row), 1.0 / static_cast<double>(rows));
}

double feature_distillation_loss(const NcdwfModel& model, const Tensor& x, bool squared) {
  if (!model.has_snapshot()) throw Error("feature drift: extractor snapshot missing");
  graph::Tape t;
  const graph::Node z = t.input(model.latents(x));
  const graph::Node loss =
      feature_distillation_node(t, z, model.frozen_extractor().forward(x), squared);
  return t.scalar_value(loss);
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> order, std::size_t begin,
                   std::size_t len) {
  Tensor out(len, x.cols());
  for (std::size_t i = 0; i < len; ++i)
    std::memcpy(out.row_ptr(i), x.row_ptr(order[begin + i]), x.cols() * sizeof(double));
  return out;
}

}  // namespace

TrainLog train_phase1(NcdwfModel& model, const RawDataset& d_lab, const PhaseConfig& cfg) {
  cfg.validate();
  const std::size_t M = model.config().M;
  if (d_lab.size() < 1) throw ConfigError("phase 1: empty training set");
  if (d_lab.dim() != model.config().d)
    throw ShapeError("phase 1: data dim " + std::to_string(d_lab.dim()) + " vs model dim " +
                     std::to_string(model.config().d));
  std::vector<std::size_t> counts(M, 0);
  for (long y : d_lab.y) {
    if (y < 0 || static_cast<std::size_t>(y) >= M)
      throw Error("phase 1: label " + std::to_string(y) + " outside the labeled range [0, " +
                  std::to_string(M) + ")");
    ++counts[static_cast<std::size_t>(y)];
  }
  for (std::size_t c = 0; c < M; ++c)
    if (counts[c] == 0)
      throw Error("phase 1: class " + std::to_string(c) + " has no training samples");

  Rng rng(cfg.seed);
  std::vector<Parameter*> params = model.feature_extractor().params();
  for (Parameter* p : model.labeled_head().params()) params.push_back(p);
  SgdMomentum opt(cfg.learning_rate, cfg.momentum);

  TrainLog log;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    const std::vector<std::size_t> order = rng.permutation(d_lab.size());
    double ce_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t cursor = 0; cursor < order.size();) {
      const std::size_t take = std::min(cfg.batch_size, order.size() - cursor);
      Tensor xb = gather_rows(d_lab.x, order, cursor, take);
      std::vector<long> yb(take);
      for (std::size_t i = 0; i < take; ++i) yb[i] = d_lab.y[order[cursor + i]];
      cursor += take;

      graph::Tape t;
      const graph::Node logits =
          model.labeled_head().apply(t, model.feature_extractor().apply(t, t.input(std::move(xb))));
      const graph::Node loss = cross_entropy_node(t, logits, yb);
      zero_grads(params);
      t.backward(loss);
      opt.step(params);
      ce_sum += t.scalar_value(loss);
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss_ce = batches ? ce_sum / static_cast<double>(batches) : 0.0;
    rec.lab_acc = plain_accuracy(argmax_rows(model.predict_labeled(d_lab.x)), d_lab.y);
    rec.wall_ms = ms_since(t0);
    log.epochs.push_back(rec);
  }

  model.freeze_extractor_snapshot();
  model.class_means() = compute_class_means(model.latents(d_lab.x), d_lab.y, M);
  return log;
}

DiscoveryBatch compose_discovery_batch(const Tensor& unlab_x, const PseudoLatentSet& pseudo,
                                       std::size_t batch_size, double pseudo_fraction, Rng& rng,
                                       std::span<const std::size_t> order, std::size_t cursor) {
  if (batch_size < 1) throw ConfigError("batch: batch_size must be >= 1");
  if (!(pseudo_fraction >= 0.0 && pseudo_fraction < 1.0))
    throw ConfigError("batch: pseudo_fraction must lie in [0, 1)");
  if (cursor >= order.size()) throw ConfigError("batch: cursor past the end of the epoch order");

  const std::size_t n_p =
      pseudo_fraction > 0.0
          ? static_cast<std::size_t>(
                std::ceil(pseudo_fraction * static_cast<double>(batch_size)))
          : 0;
  if (n_p > 0 && pseudo.size() == 0)
    throw ConfigError("batch: pseudo_fraction > 0 but the pseudo pool is empty");
  if (n_p >= batch_size)
    throw ConfigError("batch: pseudo_fraction leaves no room for unlabeled samples");

  DiscoveryBatch out;
  if (n_p > 0) {
    out.pseudo_z = Tensor(n_p, pseudo.z.cols());
    out.pseudo_y.resize(n_p);
    for (std::size_t i = 0; i < n_p; ++i) {
      const std::size_t r = rng.index(pseudo.size());
      std::memcpy(out.pseudo_z.row_ptr(i), pseudo.z.row_ptr(r),
                  pseudo.z.cols() * sizeof(double));
      out.pseudo_y[i] = pseudo.labels[r];
    }
  }
  const std::size_t take = std::min(batch_size - n_p, order.size() - cursor);
  out.unlab_x = gather_rows(unlab_x, order, cursor, take);
  return out;
}

TrainLog train_phase2(NcdwfModel& model, VariationalHead& vhead, KciNet& kci,
                      const Tensor& d_unlab_x, const PhaseConfig& cfg,
                      const SealedLabelStore* eval_labels, const LabeledEvalHook& labeled_eval) {
  cfg.validate();
  if (!model.has_snapshot())
    throw Error("phase 2: extractor snapshot missing; complete phase 1 first");
  if (model.class_means().empty())
    throw Error("phase 2: class mean store missing; complete phase 1 first");
  if (d_unlab_x.rows() < 1) throw ConfigError("phase 2: empty unlabeled pool");
  if (d_unlab_x.cols() != model.config().d)
    throw ShapeError("phase 2: data dim " + std::to_string(d_unlab_x.cols()) + " vs model dim " +
                     std::to_string(model.config().d));
  if (eval_labels && eval_labels->size() != d_unlab_x.rows())
    throw ShapeError("phase 2: sealed label count vs unlabeled pool size");

  Rng rng(cfg.seed);
  std::vector<Parameter*> params = model.feature_extractor().params();
  for (Parameter* p : model.unlabeled_head().params()) params.push_back(p);
  if (!cfg.freeze_labeled_head)
    for (Parameter* p : model.labeled_head().params()) params.push_back(p);
  for (Parameter* p : vhead.params()) params.push_back(p);
  // A frozen labeled head still accumulates gradients under the joint
  // softmax; keep it on the zeroing list so they never pile up.
  std::vector<Parameter*> zeroed = params;
  if (cfg.freeze_labeled_head)
    for (Parameter* p : model.labeled_head().params()) zeroed.push_back(p);
  SgdMomentum opt(cfg.learning_rate, cfg.momentum);
  SgdMomentum kci_opt(cfg.learning_rate, cfg.momentum);

  // enable_plr removes the pseudo-latent ingredient wholesale: no generation,
  // no replay term, and no known-class rows for the identifier.
  const bool use_pseudo = cfg.pseudo_fraction > 0.0 && cfg.enable_plr;
  const bool ce_on = cfg.lambda_ce > 0.0;
  const bool mir_on = cfg.enable_mir && cfg.lambda_mi > 0.0;
  const bool fd_on = cfg.enable_fd && cfg.lambda_fd > 0.0;
  const bool replay_on = cfg.lambda_replay > 0.0 && use_pseudo;

  TrainLog log;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    PseudoLatentSet pseudo;
    if (use_pseudo)
      pseudo =
          generate_pseudo_dataset(model.labeled_head(), model.class_means(), cfg.inversion, rng);
    const std::vector<std::size_t> order = rng.permutation(d_unlab_x.rows());

    double ce_sum = 0.0, mi_sum = 0.0, fd_sum = 0.0, rep_sum = 0.0, kci_sum = 0.0;
    std::size_t batches = 0, kci_steps = 0;
    for (std::size_t cursor = 0; cursor < order.size();) {
      const DiscoveryBatch batch =
          compose_discovery_batch(d_unlab_x, pseudo, cfg.batch_size,
                                  use_pseudo ? cfg.pseudo_fraction : 0.0, rng, order, cursor);
      cursor += batch.unlab_x.rows();
      const auto B_u = static_cast<double>(batch.unlab_x.rows());

      graph::Tape t;
      const graph::Node z_u = model.feature_extractor().apply(t, t.input(batch.unlab_x));
      const graph::Node u_logits = model.unlabeled_head().apply(t, z_u);

      std::vector<graph::Node> terms;
      if (ce_on) {
        SelfLabelProblem prob;
        prob.P = column_softmax_predictions(t.val(u_logits));
        prob.epsilon = cfg.sinkhorn_epsilon;
        prob.max_iters = cfg.sinkhorn_max_iters;
        prob.tol = cfg.sinkhorn_tol;
        const TransportPlan plan = solve_sinkhorn(prob);
        Tensor targets(plan.Q.cols(), plan.Q.rows());
        if (cfg.soft_targets) {
          for (std::size_t b = 0; b < targets.rows(); ++b)
            for (std::size_t i = 0; i < targets.cols(); ++i)
              targets(b, i) = plan.Q(i, b) * B_u;
        } else {
          const std::vector<std::size_t> hard = harden_labels(plan, /*allow_unconverged=*/true);
          targets = one_hot_rows(targets.cols(),
                                 std::vector<long>(hard.begin(), hard.end()));
        }
        graph::Node ce;
        if (cfg.joint_softmax) {
          const graph::Node l_u = model.labeled_head().apply(t, z_u);
          ce = joint_cross_entropy_node(t, l_u, u_logits,
                                        Tensor(targets.rows(), model.config().M), targets);
        } else {
          ce = cross_entropy_soft_node(t, u_logits, targets);
        }
        ce_sum += t.scalar_value(ce);
        terms.push_back(t.scale(ce, cfg.lambda_ce));
      }
      if (mir_on) {
        const graph::Node mi =
            mi_loss_node(t, u_logits, model.predict_labeled(batch.unlab_x), vhead);
        mi_sum += t.scalar_value(mi);
        terms.push_back(t.scale(mi, cfg.lambda_mi));
      }
      if (fd_on) {
        const graph::Node fd = feature_distillation_node(
            t, z_u, model.frozen_extractor().forward(batch.unlab_x), cfg.squared_fd);
        fd_sum += t.scalar_value(fd);
        terms.push_back(t.scale(fd, cfg.lambda_fd));
      }
      if (replay_on) {
        const graph::Node z_p = t.input(batch.pseudo_z);
        const graph::Node lab_logits = model.labeled_head().apply(t, z_p);
        graph::Node rep;
        if (cfg.joint_softmax) {
          const graph::Node ulb_logits = model.unlabeled_head().apply(t, z_p);
          rep = joint_cross_entropy_node(
              t, lab_logits, ulb_logits, one_hot_rows(model.config().M, batch.pseudo_y),
              Tensor(batch.pseudo_z.rows(), model.config().N));
        } else {
          rep = cross_entropy_node(t, lab_logits, batch.pseudo_y);
        }
        rep_sum += t.scalar_value(rep);
        terms.push_back(t.scale(rep, cfg.lambda_replay));
      }
      if (!terms.empty()) {
        graph::Node total = terms[0];
        for (std::size_t i = 1; i < terms.size(); ++i) total = t.add(total, terms[i]);
        zero_grads(zeroed);
        t.backward(total);
        opt.step(params);
      }

      if (batch.pseudo_z.rows() > 0) {
        const KciDataset kd = make_kci_dataset(batch.pseudo_z, t.val(z_u));
        zero_grads(kci.params());
        kci_sum += kci_loss(kci, kd.z, kd.y);
        kci_opt.step(kci.params());
        ++kci_steps;
      } else {
        // No known-class rows without replay; the identifier keeps training on
        // the novel stream alone and its scores drift toward "novel".
        zero_grads(kci.params());
        kci_sum += kci_loss(kci, t.val(z_u), std::vector<double>(batch.unlab_x.rows(), 1.0));
        kci_opt.step(kci.params());
        ++kci_steps;
      }
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    const auto nb = static_cast<double>(batches);
    rec.loss_ce = ce_sum / nb;
    rec.loss_mi = mi_sum / nb;
    rec.loss_fd = fd_sum / nb;
    rec.loss_replay = rep_sum / nb;
    rec.loss_kci = kci_steps ? kci_sum / static_cast<double>(kci_steps) : 0.0;
    if (eval_labels)
      rec.unlab_acc = clustering_accuracy(argmax_rows(model.predict_unlabeled(d_unlab_x)),
                                          eval_labels->eval_labels());
    if (labeled_eval) rec.lab_acc = labeled_eval(model);
    rec.wall_ms = ms_since(t0);
    log.epochs.push_back(rec);
  }
  return log;
}

}  // namespace ncdwf
