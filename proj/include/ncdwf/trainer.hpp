#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ncdwf/data.hpp"
#include "ncdwf/graph.hpp"
#include "ncdwf/models.hpp"
#include "ncdwf/pseudoreplay.hpp"
#include "ncdwf/rng.hpp"
#include "ncdwf/tensor.hpp"

namespace ncdwf {

struct PhaseConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double lambda_ce = 1.0;
  double lambda_mi = 1.0;
  double lambda_fd = 1.0;
  double lambda_replay = 1.0;
  double pseudo_fraction = 0.25;
  std::uint64_t seed = 0;
  bool enable_plr = true;
  bool enable_mir = true;
  bool enable_fd = true;
  bool freeze_labeled_head = false;  // study flag: replay loss stops stepping the head
  bool soft_targets = false;         // cross-entropy against transport columns
  bool squared_fd = false;           // mean squared drift instead of mean norm
  // Unified-head coupling: both cross-entropy terms run through one softmax
  // over the concatenated labeled and unlabeled logits, so discovery training
  // competes with the labeled classes and replay pushes back. Off, each head
  // keeps its own softmax and the labeled head sees only the replay term.
  bool joint_softmax = false;
  InversionConfig inversion;
  double sinkhorn_epsilon = 1.0;
  std::size_t sinkhorn_max_iters = 1000;
  double sinkhorn_tol = 1e-8;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss_ce = 0.0;
  double loss_mi = 0.0;
  double loss_fd = 0.0;
  double loss_replay = 0.0;
  double loss_kci = 0.0;
  double lab_acc = -1.0;    // -1 when no labeled view exists in this phase
  double unlab_acc = -1.0;  // -1 when no sealed labels were provided
  double wall_ms = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
};

// One JSON object per epoch, keys epoch, loss_ce, loss_mi, loss_fd,
// loss_replay, loss_kci, lab_acc, unlab_acc, wall_ms.
void write_train_log_jsonl(const TrainLog& log, const std::string& path);

// Softmax cross-entropy against integer labels, mean over rows.
graph::Node cross_entropy_node(graph::Tape& t, graph::Node logits,
                               const std::vector<long>& labels);
// Soft-target variant; each target row is a distribution over columns.
graph::Node cross_entropy_soft_node(graph::Tape& t, graph::Node logits, const Tensor& targets);
// Cross-entropy under one softmax spanning both logit blocks side by side.
// Targets come split the same way; each combined row should sum to 1.
graph::Node joint_cross_entropy_node(graph::Tape& t, graph::Node lab_logits,
                                     graph::Node ulb_logits, const Tensor& lab_targets,
                                     const Tensor& ulb_targets);
// Row-per-label one-hot matrix; labels must lie in [0, cols).
Tensor one_hot_rows(std::size_t cols, const std::vector<long>& labels);

// Mean over the batch of the Euclidean drift between the live extractor and
// its frozen copy; gradients (in the tape variant) reach the live side only.
double feature_distillation_loss(const NcdwfModel& model, const Tensor& x, bool squared = false);
graph::Node feature_distillation_node(graph::Tape& t, graph::Node z_live, const Tensor& z_frozen,
                                      bool squared = false);

// Supervised phase: trains extractor + labeled head, then freezes the
// extractor snapshot and stores the class means (also when epochs == 0).
TrainLog train_phase1(NcdwfModel& model, const RawDataset& d_lab, const PhaseConfig& cfg);

struct DiscoveryBatch {
  Tensor pseudo_z;  // ceil(pseudo_fraction * batch_size) rows, 0 when fraction is 0
  std::vector<long> pseudo_y;
  Tensor unlab_x;   // next chunk of the epoch's shuffled order
};

// Pseudo pairs are drawn uniformly with replacement; the unlabeled part takes
// the next batch_size - pseudo_count rows of `order` starting at `cursor`
// (short at the end of the epoch).
DiscoveryBatch compose_discovery_batch(const Tensor& unlab_x, const PseudoLatentSet& pseudo,
                                       std::size_t batch_size, double pseudo_fraction, Rng& rng,
                                       std::span<const std::size_t> order, std::size_t cursor);

using LabeledEvalHook = std::function<double(const NcdwfModel&)>;

// Discovery phase. Labeled training data is deliberately absent from the
// signature; lab_acc in the log comes from the optional read-only hook.
TrainLog train_phase2(NcdwfModel& model, VariationalHead& vhead, KciNet& kci,
                      const Tensor& d_unlab_x, const PhaseConfig& cfg,
                      const SealedLabelStore* eval_labels = nullptr,
                      const LabeledEvalHook& labeled_eval = {});

}  // namespace ncdwf
