#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "ncdwf/data.hpp"
#include "ncdwf/error.hpp"
#include "ncdwf/evaluation.hpp"
#include "ncdwf/kci.hpp"
#include "ncdwf/miregularizer.hpp"
#include "ncdwf/models.hpp"
#include "ncdwf/trainer.hpp"

using namespace ncdwf;

namespace {

ModelConfig tiny_config(std::size_t d, std::size_t M, std::size_t N) {
  ModelConfig cfg;
  cfg.d = d;
  cfg.h = 6;
  cfg.M = M;
  cfg.N = N;
  cfg.fe_hidden = 1;
  cfg.mean_net_hidden = 8;
  cfg.kci_hidden = 8;
  return cfg;
}

// Two well-separated blobs on the x axis, labels 0 and 1.
RawDataset two_blobs(std::size_t per_class, double sep, double sigma, std::uint64_t seed) {
  MixtureParams p;
  p.classes = 2;
  p.per_class = per_class;
  p.dim = 2;
  p.center_scale = sep;
  p.noise_sigma = sigma;
  p.min_separation_multiplier = 4.0;
  return generate_gaussian_mixture(p, seed);
}

PhaseConfig quick_phase(std::size_t epochs, std::uint64_t seed) {
  PhaseConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.05;
  cfg.momentum = 0.9;
  cfg.seed = seed;
  cfg.inversion.iterations = 5;
  cfg.inversion.per_class_count = 4;
  return cfg;
}

std::vector<Tensor> copy_params(const std::vector<Parameter*>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back(p->value);
  return out;
}

bool params_equal(const std::vector<Parameter*>& params, const std::vector<Tensor>& saved) {
  if (params.size() != saved.size()) return false;
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!(params[i]->value == saved[i])) return false;
  return true;
}

// Model with a sealed snapshot and class means but no gradient history.
NcdwfModel prepped_model(const ModelConfig& mc, const RawDataset& lab, std::uint64_t seed) {
  Rng rng(seed);
  NcdwfModel model(mc, rng);
  train_phase1(model, lab, quick_phase(0, seed));
  return model;
}

}  // namespace

TEST_CASE("cross-entropy matches the closed form") {
  graph::Tape t;
  const graph::Node logits =
      t.var(Tensor::from({{0.0, 0.0}, {std::log(3.0), 0.0}}));
  const graph::Node loss = cross_entropy_node(t, logits, {0, 1});
  const double expected = 0.5 * (std::log(2.0) + std::log(4.0));
  CHECK(t.scalar_value(loss) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("cross-entropy gradient equals softmax minus one-hot over the batch") {
  Rng rng(17);
  Tensor logits(3, 4);
  for (std::size_t i = 0; i < logits.size(); ++i) logits.data()[i] = rng.normal();
  const std::vector<long> labels = {2, 0, 3};

  graph::Tape t;
  const graph::Node lv = t.var(logits);
  const Tensor p = t.val(t.softmax_rows(lv));
  t.backward(cross_entropy_node(t, lv, labels));
  const Tensor& g = t.grad(lv);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const double onehot = labels[i] == static_cast<long>(j) ? 1.0 : 0.0;
      CHECK(g(i, j) == doctest::Approx((p(i, j) - onehot) / 3.0).epsilon(1e-10));
    }
}

TEST_CASE("cross-entropy rejects bad labels and shapes") {
  graph::Tape t;
  const graph::Node logits = t.var(Tensor(2, 3, 0.1));
  CHECK_THROWS_AS(cross_entropy_node(t, logits, {0}), ShapeError);
  CHECK_THROWS_AS(cross_entropy_node(t, logits, {0, 3}), Error);
  CHECK_THROWS_AS(cross_entropy_node(t, logits, {0, -1}), Error);
}

TEST_CASE("soft targets reduce to the hard loss on one-hot rows") {
  Rng rng(3);
  Tensor logits(3, 4);
  for (std::size_t i = 0; i < logits.size(); ++i) logits.data()[i] = rng.normal();
  const std::vector<long> labels = {2, 0, 1};
  Tensor onehot(3, 4);
  for (std::size_t i = 0; i < 3; ++i) onehot(i, static_cast<std::size_t>(labels[i])) = 1.0;

  graph::Tape t;
  const graph::Node lv = t.var(logits);
  const double hard = t.scalar_value(cross_entropy_node(t, lv, labels));
  const double soft = t.scalar_value(cross_entropy_soft_node(t, lv, onehot));
  CHECK(soft == doctest::Approx(hard).epsilon(1e-14));
  CHECK_THROWS_AS(cross_entropy_soft_node(t, lv, Tensor(3, 5)), ShapeError);
}

TEST_CASE("feature drift matches hand values and keeps the zero subgradient") {
  graph::Tape t;
  const graph::Node live = t.var(Tensor::from({{3.0, 4.0}, {0.0, 0.0}}));
  const Tensor frozen(2, 2);

  const graph::Node plain = feature_distillation_node(t, live, frozen, false);
  CHECK(t.scalar_value(plain) == 2.5);
  const graph::Node squared = feature_distillation_node(t, live, frozen, true);
  CHECK(t.scalar_value(squared) == 12.5);

  t.backward(plain);
  const Tensor& g = t.grad(live);
  CHECK(g(0, 0) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(g(0, 1) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(g(1, 0) == 0.0);
  CHECK(g(1, 1) == 0.0);

  CHECK_THROWS_AS(feature_distillation_node(t, live, Tensor(2, 3), false), ShapeError);
}

TEST_CASE("feature drift is exactly zero right after the snapshot") {
  const RawDataset lab = two_blobs(10, 6.0, 0.5, 21);
  NcdwfModel model = prepped_model(tiny_config(2, 2, 2), lab, 21);
  CHECK(feature_distillation_loss(model, lab.x) == 0.0);
  CHECK(feature_distillation_loss(model, lab.x, true) == 0.0);

  Rng rng(22);
  NcdwfModel fresh(tiny_config(2, 2, 2), rng);
  CHECK_THROWS_AS(feature_distillation_loss(fresh, lab.x), Error);
}

TEST_CASE("the supervised phase fits separable blobs") {
  const RawDataset lab = two_blobs(40, 6.0, 0.5, 7);
  Rng rng(7);
  NcdwfModel model(tiny_config(2, 2, 2), rng);
  const TrainLog log = train_phase1(model, lab, quick_phase(30, 7));

  REQUIRE(log.epochs.size() == 30);
  CHECK(log.epochs.front().epoch == 1);
  CHECK(log.epochs.back().epoch == 30);
  CHECK(log.epochs.back().lab_acc >= 0.99);
  CHECK(log.epochs.back().loss_ce < log.epochs.front().loss_ce);
  for (const EpochRecord& r : log.epochs) {
    CHECK(r.unlab_acc == -1.0);
    CHECK(r.wall_ms >= 0.0);
    CHECK(std::isfinite(r.loss_ce));
  }
  CHECK(model.has_snapshot());
  CHECK_FALSE(model.class_means().empty());
  REQUIRE(model.class_means().means.rows() == 2);
  CHECK(model.class_means().counts == std::vector<std::size_t>{40, 40});
}

TEST_CASE("zero supervised epochs still seal the snapshot and means") {
  const RawDataset lab = two_blobs(5, 6.0, 0.5, 9);
  Rng rng(9);
  NcdwfModel model(tiny_config(2, 2, 2), rng);
  const std::vector<Tensor> before = copy_params(model.trainable_params());

  const TrainLog log = train_phase1(model, lab, quick_phase(0, 9));
  CHECK(log.epochs.empty());
  CHECK(params_equal(model.trainable_params(), before));
  CHECK(model.has_snapshot());
  CHECK_FALSE(model.class_means().empty());

  CHECK_THROWS_AS(train_phase1(model, lab, quick_phase(0, 9)), Error);
}

TEST_CASE("the supervised phase validates its inputs") {
  const RawDataset lab = two_blobs(5, 6.0, 0.5, 11);
  Rng rng(11);
  NcdwfModel model(tiny_config(2, 2, 2), rng);

  RawDataset wrong_dim = lab;
  wrong_dim.x = Tensor(lab.size(), 3, 1.0);
  CHECK_THROWS_AS(train_phase1(model, wrong_dim, quick_phase(1, 11)), ShapeError);

  RawDataset bad_label = lab;
  bad_label.y[0] = 2;
  CHECK_THROWS_WITH_AS(train_phase1(model, bad_label, quick_phase(1, 11)),
                       doctest::Contains("outside"), Error);

  RawDataset one_class = lab;
  for (long& y : one_class.y) y = 0;
  CHECK_THROWS_WITH_AS(train_phase1(model, one_class, quick_phase(1, 11)),
                       doctest::Contains("no training samples"), Error);

  CHECK_THROWS_AS(train_phase1(model, RawDataset{}, quick_phase(1, 11)), ConfigError);

  PhaseConfig bad = quick_phase(1, 11);
  bad.momentum = 1.0;
  CHECK_THROWS_AS(train_phase1(model, lab, bad), ConfigError);
  bad = quick_phase(1, 11);
  bad.batch_size = 0;
  CHECK_THROWS_AS(train_phase1(model, lab, bad), ConfigError);
  bad = quick_phase(1, 11);
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(train_phase1(model, lab, bad), ConfigError);
  bad = quick_phase(1, 11);
  bad.pseudo_fraction = 1.0;
  CHECK_THROWS_AS(train_phase1(model, lab, bad), ConfigError);
  bad = quick_phase(1, 11);
  bad.batch_size = 1;
  bad.pseudo_fraction = 0.5;
  CHECK_THROWS_AS(train_phase1(model, lab, bad), ConfigError);
  bad = quick_phase(1, 11);
  bad.lambda_mi = -0.5;
  CHECK_THROWS_AS(train_phase1(model, lab, bad), ConfigError);
}

TEST_CASE("discovery batches mix pseudo rows with the next shuffle chunk") {
  PseudoLatentSet pool;
  pool.z = Tensor(4, 3);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) pool.z(i, j) = 10.0 * static_cast<double>(i) + 1.0;
  pool.labels = {0, 1, 2, 3};

  Tensor unlab(10, 2);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 2; ++j) unlab(i, j) = static_cast<double>(i);
  std::vector<std::size_t> order(10);
  std::iota(order.begin(), order.end(), 0);

  Rng rng(1);
  const DiscoveryBatch b = compose_discovery_batch(unlab, pool, 8, 0.25, rng, order, 0);
  REQUIRE(b.pseudo_z.rows() == 2);
  REQUIRE(b.pseudo_y.size() == 2);
  REQUIRE(b.unlab_x.rows() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(b.unlab_x(i, 0) == static_cast<double>(i));
  for (std::size_t i = 0; i < 2; ++i) {
    const auto c = static_cast<std::size_t>(b.pseudo_y[i]);
    CHECK(b.pseudo_z(i, 0) == pool.z(c, 0));
    CHECK(b.pseudo_z(i, 1) == pool.z(c, 1));
  }

  const DiscoveryBatch tail = compose_discovery_batch(unlab, pool, 8, 0.25, rng, order, 8);
  CHECK(tail.pseudo_z.rows() == 2);
  CHECK(tail.unlab_x.rows() == 2);
  CHECK(tail.unlab_x(0, 0) == 8.0);

  const DiscoveryBatch pure = compose_discovery_batch(unlab, pool, 8, 0.0, rng, order, 0);
  CHECK(pure.pseudo_z.rows() == 0);
  CHECK(pure.pseudo_y.empty());
  CHECK(pure.unlab_x.rows() == 8);

  const DiscoveryBatch wide = compose_discovery_batch(unlab, pool, 512, 0.0025, rng, order, 0);
  CHECK(wide.pseudo_z.rows() == 2);
  CHECK(wide.unlab_x.rows() == 10);
}

TEST_CASE("discovery batch composition is reproducible and validated") {
  PseudoLatentSet pool;
  pool.z = Tensor(3, 2, 1.0);
  pool.labels = {0, 1, 2};
  const Tensor unlab(6, 2, 0.5);
  std::vector<std::size_t> order(6);
  std::iota(order.begin(), order.end(), 0);

  Rng a(5), b(5);
  const DiscoveryBatch ba = compose_discovery_batch(unlab, pool, 4, 0.3, a, order, 0);
  const DiscoveryBatch bb = compose_discovery_batch(unlab, pool, 4, 0.3, b, order, 0);
  CHECK(ba.pseudo_z == bb.pseudo_z);
  CHECK(ba.pseudo_y == bb.pseudo_y);
  CHECK(ba.unlab_x == bb.unlab_x);

  const PseudoLatentSet empty_pool;
  CHECK_THROWS_WITH_AS(compose_discovery_batch(unlab, empty_pool, 4, 0.3, a, order, 0),
                       doctest::Contains("pseudo pool"), ConfigError);
  CHECK_THROWS_WITH_AS(compose_discovery_batch(unlab, pool, 2, 0.6, a, order, 0),
                       doctest::Contains("room"), ConfigError);
  CHECK_THROWS_AS(compose_discovery_batch(unlab, pool, 4, 0.3, a, order, 6), ConfigError);
  CHECK_THROWS_AS(compose_discovery_batch(unlab, pool, 0, 0.0, a, order, 0), ConfigError);
}

TEST_CASE("the discovery phase demands a completed supervised phase") {
  const RawDataset lab = two_blobs(5, 6.0, 0.5, 13);
  const ModelConfig mc = tiny_config(2, 2, 2);
  Rng rng(13);
  VariationalHead vhead(2, 2, 4, rng);
  KciNet kci(6, 4, rng);
  const Tensor pool(8, 2, 0.1);

  NcdwfModel fresh(mc, rng);
  CHECK_THROWS_WITH_AS(train_phase2(fresh, vhead, kci, pool, quick_phase(1, 13)),
                       doctest::Contains("snapshot"), Error);

  NcdwfModel no_means(mc, rng);
  no_means.freeze_extractor_snapshot();
  CHECK_THROWS_WITH_AS(train_phase2(no_means, vhead, kci, pool, quick_phase(1, 13)),
                       doctest::Contains("mean"), Error);

  NcdwfModel ready = prepped_model(mc, lab, 13);
  CHECK_THROWS_AS(train_phase2(ready, vhead, kci, Tensor(8, 3, 0.1), quick_phase(1, 13)),
                  ShapeError);
  CHECK_THROWS_AS(train_phase2(ready, vhead, kci, Tensor(0, 2), quick_phase(1, 13)),
                  ConfigError);

  const SealedLabelStore short_labels(std::vector<long>{0, 1});
  CHECK_THROWS_AS(train_phase2(ready, vhead, kci, pool, quick_phase(1, 13), &short_labels),
                  ShapeError);

  const TrainLog none = train_phase2(ready, vhead, kci, pool, quick_phase(0, 13));
  CHECK(none.epochs.empty());
}

TEST_CASE("a discovery epoch with every weight at zero leaves the nets alone") {
  const RawDataset lab = two_blobs(8, 6.0, 0.5, 15);
  NcdwfModel model = prepped_model(tiny_config(2, 2, 2), lab, 15);
  Rng rng(15);
  VariationalHead vhead(2, 2, 4, rng);
  KciNet kci(6, 4, rng);
  const Tensor pool(12, 2, 0.3);

  PhaseConfig cfg = quick_phase(1, 15);
  cfg.batch_size = 6;
  cfg.lambda_ce = cfg.lambda_mi = cfg.lambda_fd = cfg.lambda_replay = 0.0;

  const std::vector<Tensor> model_before = copy_params(model.trainable_params());
  const std::vector<Tensor> vhead_before = copy_params(vhead.params());
  const std::vector<Tensor> kci_before = copy_params(kci.params());

  const TrainLog log = train_phase2(model, vhead, kci, pool, cfg);
  CHECK(params_equal(model.trainable_params(), model_before));
  CHECK(params_equal(vhead.params(), vhead_before));
  CHECK_FALSE(params_equal(kci.params(), kci_before));

  REQUIRE(log.epochs.size() == 1);
  CHECK(log.epochs[0].loss_ce == 0.0);
  CHECK(log.epochs[0].loss_mi == 0.0);
  CHECK(log.epochs[0].loss_fd == 0.0);
  CHECK(log.epochs[0].loss_replay == 0.0);
  CHECK(log.epochs[0].loss_kci > 0.0);
  CHECK(log.epochs[0].lab_acc == -1.0);
  CHECK(log.epochs[0].unlab_acc == -1.0);
}

TEST_CASE("replay is the only gradient path into the labeled head") {
  const RawDataset lab = two_blobs(8, 6.0, 0.5, 19);
  const ModelConfig mc = tiny_config(2, 2, 2);
  const Tensor pool(12, 2, 0.3);

  PhaseConfig cfg = quick_phase(1, 19);
  cfg.batch_size = 6;

  {
    NcdwfModel model = prepped_model(mc, lab, 19);
    Rng rng(19);
    VariationalHead vhead(2, 2, 4, rng);
    KciNet kci(6, 4, rng);
    cfg.enable_plr = false;
    const std::uint64_t lab_before = param_checksum(model.labeled_head());
    const std::uint64_t fe_before = param_checksum(model.feature_extractor());
    train_phase2(model, vhead, kci, pool, cfg);
    CHECK(param_checksum(model.labeled_head()) == lab_before);
    CHECK(param_checksum(model.feature_extractor()) != fe_before);
  }
  {
    NcdwfModel model = prepped_model(mc, lab, 19);
    Rng rng(19);
    VariationalHead vhead(2, 2, 4, rng);
    KciNet kci(6, 4, rng);
    cfg.enable_plr = true;
    const std::uint64_t lab_before = param_checksum(model.labeled_head());
    train_phase2(model, vhead, kci, pool, cfg);
    CHECK(param_checksum(model.labeled_head()) != lab_before);
  }
  {
    NcdwfModel model = prepped_model(mc, lab, 19);
    Rng rng(19);
    VariationalHead vhead(2, 2, 4, rng);
    KciNet kci(6, 4, rng);
    cfg.enable_plr = true;
    cfg.freeze_labeled_head = true;
    const std::uint64_t lab_before = param_checksum(model.labeled_head());
    train_phase2(model, vhead, kci, pool, cfg);
    CHECK(param_checksum(model.labeled_head()) == lab_before);
    cfg.freeze_labeled_head = false;
  }
}

TEST_CASE("a combined objective equals the weighted sum of its parts") {
  const RawDataset lab = two_blobs(8, 6.0, 0.5, 23);
  NcdwfModel model = prepped_model(tiny_config(2, 2, 2), lab, 23);
  Rng rng(23);
  VariationalHead vhead(2, 2, 4, rng);

  Tensor xb(5, 2);
  for (std::size_t i = 0; i < xb.size(); ++i) xb.data()[i] = rng.normal();
  Tensor zb(3, 6);
  for (std::size_t i = 0; i < zb.size(); ++i) zb.data()[i] = rng.normal();
  const std::vector<long> zy = {0, 1, 0};

  graph::Tape t;
  const graph::Node z_u = model.feature_extractor().apply(t, t.input(xb));
  const graph::Node u_logits = model.unlabeled_head().apply(t, z_u);

  const graph::Node ce = cross_entropy_node(t, u_logits, {1, 0, 1, 0, 1});
  const graph::Node mi = mi_loss_node(t, u_logits, model.predict_labeled(xb), vhead);
  const graph::Node fd =
      feature_distillation_node(t, z_u, model.frozen_extractor().forward(xb));
  const graph::Node rep =
      cross_entropy_node(t, model.labeled_head().apply(t, t.input(zb)), zy);

  const double lce = 0.7, lmi = 1.3, lfd = 0.4, lrep = 2.0;
  graph::Node total = t.scale(ce, lce);
  total = t.add(total, t.scale(mi, lmi));
  total = t.add(total, t.scale(fd, lfd));
  total = t.add(total, t.scale(rep, lrep));

  const double expected = lce * t.scalar_value(ce) + lmi * t.scalar_value(mi) +
                          lfd * t.scalar_value(fd) + lrep * t.scalar_value(rep);
  CHECK(std::abs(t.scalar_value(total) - expected) <= 1e-10);
}

namespace {

// Four blobs: classes 0..1 stay supervised, 2..3 form the discovery pool.
SplitDataset four_blob_split(std::uint64_t seed) {
  MixtureParams p;
  p.classes = 4;
  p.per_class = 30;
  p.dim = 4;
  p.center_scale = 8.0;
  p.noise_sigma = 0.5;
  p.min_separation_multiplier = 8.0;
  const RawDataset raw = generate_gaussian_mixture(p, seed);
  SplitSpec spec;
  spec.total_classes = 4;
  spec.labeled = 2;
  spec.unlabeled = 2;
  return split_dataset(raw, spec, 0.25);
}

}  // namespace

TEST_CASE("the discovery phase improves clustering on separable blobs") {
  const SplitDataset d = four_blob_split(31);
  const ModelConfig mc = tiny_config(4, 2, 2);
  Rng rng(31);
  NcdwfModel model(mc, rng);
  train_phase1(model, d.lab_train, quick_phase(20, 31));

  VariationalHead vhead(mc.N, mc.M, mc.mean_net_hidden, rng);
  KciNet kci(mc.h, mc.kci_hidden, rng);

  PhaseConfig cfg = quick_phase(15, 31);
  cfg.batch_size = 16;
  cfg.learning_rate = 0.01;  // momentum pumps the sigma coupling of the MI term
  cfg.momentum = 0.0;
  const LabeledEvalHook hook = [&](const NcdwfModel& m) {
    return plain_accuracy(argmax_rows(m.predict_labeled(d.lab_test.x)), d.lab_test.y);
  };
  const TrainLog log =
      train_phase2(model, vhead, kci, d.unlab_train_x, cfg, &d.unlab_train_labels, hook);

  REQUIRE(log.epochs.size() == 15);
  for (const EpochRecord& r : log.epochs) {
    CHECK(r.lab_acc >= 0.0);
    CHECK(r.lab_acc <= 1.0);
    CHECK(r.unlab_acc >= 0.0);
    CHECK(r.unlab_acc <= 1.0);
    CHECK(std::isfinite(r.loss_ce));
    CHECK(std::isfinite(r.loss_mi));
    CHECK(std::isfinite(r.loss_fd));
    CHECK(std::isfinite(r.loss_replay));
    CHECK(r.loss_kci >= 0.0);
  }
  CHECK(log.epochs.back().unlab_acc >= 0.9);
  CHECK(log.epochs.back().lab_acc >= 0.9);
}

TEST_CASE("soft transport targets run through the same pipeline") {
  const SplitDataset d = four_blob_split(37);
  const ModelConfig mc = tiny_config(4, 2, 2);
  Rng rng(37);
  NcdwfModel model(mc, rng);
  train_phase1(model, d.lab_train, quick_phase(5, 37));
  VariationalHead vhead(mc.N, mc.M, mc.mean_net_hidden, rng);
  KciNet kci(mc.h, mc.kci_hidden, rng);

  PhaseConfig cfg = quick_phase(2, 37);
  cfg.batch_size = 16;
  cfg.soft_targets = true;
  const TrainLog log = train_phase2(model, vhead, kci, d.unlab_train_x, cfg);
  REQUIRE(log.epochs.size() == 2);
  for (const EpochRecord& r : log.epochs) {
    CHECK(std::isfinite(r.loss_ce));
    CHECK(r.loss_ce > 0.0);
  }
}

TEST_CASE("identical seeds reproduce the run bit for bit") {
  const SplitDataset d = four_blob_split(41);
  const ModelConfig mc = tiny_config(4, 2, 2);

  const auto run = [&](TrainLog& p1, TrainLog& p2) {
    Rng rng(41);
    NcdwfModel model(mc, rng);
    VariationalHead vhead(mc.N, mc.M, mc.mean_net_hidden, rng);
    KciNet kci(mc.h, mc.kci_hidden, rng);
    p1 = train_phase1(model, d.lab_train, quick_phase(4, 41));
    PhaseConfig cfg = quick_phase(3, 41);
    cfg.batch_size = 16;
    p2 = train_phase2(model, vhead, kci, d.unlab_train_x, cfg, &d.unlab_train_labels);
    return std::array<std::uint64_t, 3>{param_checksum(model.feature_extractor()),
                                        param_checksum(model.labeled_head()),
                                        param_checksum(model.unlabeled_head())};
  };

  TrainLog a1, a2, b1, b2;
  const auto ca = run(a1, a2);
  const auto cb = run(b1, b2);
  CHECK(ca == cb);

  const auto logs_match = [](const TrainLog& a, const TrainLog& b) {
    REQUIRE(a.epochs.size() == b.epochs.size());
    for (std::size_t i = 0; i < a.epochs.size(); ++i) {
      CHECK(a.epochs[i].epoch == b.epochs[i].epoch);
      CHECK(a.epochs[i].loss_ce == b.epochs[i].loss_ce);
      CHECK(a.epochs[i].loss_mi == b.epochs[i].loss_mi);
      CHECK(a.epochs[i].loss_fd == b.epochs[i].loss_fd);
      CHECK(a.epochs[i].loss_replay == b.epochs[i].loss_replay);
      CHECK(a.epochs[i].loss_kci == b.epochs[i].loss_kci);
      CHECK(a.epochs[i].lab_acc == b.epochs[i].lab_acc);
      CHECK(a.epochs[i].unlab_acc == b.epochs[i].unlab_acc);
    }
  };
  logs_match(a1, b1);
  logs_match(a2, b2);
}

TEST_CASE("the train log serializes one ordered object per epoch") {
  TrainLog log;
  EpochRecord r;
  r.epoch = 1;
  r.loss_ce = 0.5;
  r.loss_kci = 0.25;
  r.lab_acc = 0.75;
  r.wall_ms = 12.5;
  log.epochs.push_back(r);
  r.epoch = 2;
  r.unlab_acc = 0.5;
  log.epochs.push_back(r);

  const std::string path = "trainer_log_test.jsonl";
  write_train_log_jsonl(log, path);

  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  REQUIRE(lines.size() == 2);

  const auto j = nlohmann::json::parse(lines[0]);
  CHECK(j["epoch"] == 1);
  CHECK(j["loss_ce"] == 0.5);
  CHECK(j["loss_mi"] == 0.0);
  CHECK(j["loss_kci"] == 0.25);
  CHECK(j["lab_acc"] == 0.75);
  CHECK(j["unlab_acc"] == -1.0);
  CHECK(j["wall_ms"] == 12.5);

  const char* keys[] = {"epoch",    "loss_ce", "loss_mi",   "loss_fd", "loss_replay",
                        "loss_kci", "lab_acc", "unlab_acc", "wall_ms"};
  std::size_t pos = 0;
  for (const char* k : keys) {
    const std::size_t at = lines[0].find(std::string("\"") + k + "\"");
    REQUIRE(at != std::string::npos);
    CHECK(at >= pos);
    pos = at;
  }

  CHECK(nlohmann::json::parse(lines[1])["unlab_acc"] == 0.5);
  std::remove(path.c_str());

  CHECK_THROWS_AS(write_train_log_jsonl(log, "no_such_dir/x.jsonl"), IoError);
}
