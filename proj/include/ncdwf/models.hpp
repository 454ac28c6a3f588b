#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ncdwf/graph.hpp"
#include "ncdwf/rng.hpp"
#include "ncdwf/tensor.hpp"

namespace ncdwf {

// Stack of affine layers with relu between them; the final layer is linear.
// dims = {in, hidden..., out}.
class DenseNet {
 public:
  DenseNet() = default;
  DenseNet(const std::string& name, std::vector<std::size_t> dims, Rng& rng);
  // Rebuild from persisted weights, alternating W0, b0, W1, b1, ...
  DenseNet(const std::string& name, std::vector<Tensor> weights);

  // Differentiable application: binds every layer parameter to the tape.
  graph::Node apply(graph::Tape& t, graph::Node x);
  // Same forward chain, but weights enter the tape as constants: gradients
  // flow to x only, never into the parameters.
  graph::Node apply_frozen(graph::Tape& t, graph::Node x) const;
  // Plain evaluation, no gradients; used for frozen copies and inference.
  Tensor forward(const Tensor& x) const;

  std::vector<Parameter*> params();
  const std::vector<Parameter>& layers() const { return params_; }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t in_dim() const { return dims_.front(); }
  std::size_t out_dim() const { return dims_.back(); }
  const std::string& name() const { return name_; }
  bool empty() const { return params_.empty(); }

 private:
  std::string name_;
  std::vector<std::size_t> dims_;
  std::vector<Parameter> params_;  // W0, b0, W1, b1, ...
};

// Bit-exact FNV-1a hash over all parameter bytes; detects any weight change.
std::uint64_t param_checksum(const DenseNet& net);

// Per-class average latent vectors, computed once phase 1 ends.
struct ClassMeanStore {
  Tensor means;                     // M×h
  std::vector<std::size_t> counts;  // per-class sample counts

  bool empty() const { return means.empty(); }
};

struct ModelConfig {
  std::size_t d = 64;             // input feature dim
  std::size_t h = 32;             // latent dim
  std::size_t M = 5;              // labeled classes
  std::size_t N = 5;              // unlabeled (novel) classes
  std::size_t fe_hidden = 2;      // hidden layers in the extractor, width h
  std::size_t head_hidden = 0;    // hidden layers in each head (0 = linear)
  std::size_t mean_net_hidden = 64;
  std::size_t kci_hidden = 128;

  void validate() const;
};

// The network family: shared extractor, labeled head, unlabeled head, plus
// the frozen extractor copy taken when phase 1 ends.
class NcdwfModel {
 public:
  NcdwfModel(const ModelConfig& cfg, Rng& rng);
  NcdwfModel(ModelConfig cfg, DenseNet fe, DenseNet lab, DenseNet ulb,
             std::optional<DenseNet> frozen_fe);

  const ModelConfig& config() const { return cfg_; }
  DenseNet& feature_extractor() { return fe_; }
  DenseNet& labeled_head() { return lab_; }
  DenseNet& unlabeled_head() { return ulb_; }
  const DenseNet& feature_extractor() const { return fe_; }
  const DenseNet& labeled_head() const { return lab_; }
  const DenseNet& unlabeled_head() const { return ulb_; }

  bool has_snapshot() const { return frozen_fe_.has_value(); }
  // Deep immutable copy of the current extractor; rejects a second call.
  void freeze_extractor_snapshot();
  const DenseNet& frozen_extractor() const;

  // logits of the two heads for a batch (rows are samples)
  Tensor predict_labeled(const Tensor& x) const { return lab_.forward(fe_.forward(x)); }
  Tensor predict_unlabeled(const Tensor& x) const { return ulb_.forward(fe_.forward(x)); }
  Tensor latents(const Tensor& x) const { return fe_.forward(x); }

  ClassMeanStore& class_means() { return class_means_; }
  const ClassMeanStore& class_means() const { return class_means_; }

  std::vector<Parameter*> trainable_params();  // fe + lab + ulb

 private:
  ModelConfig cfg_;
  DenseNet fe_, lab_, ulb_;
  std::optional<DenseNet> frozen_fe_;
  ClassMeanStore class_means_;
};

// Gaussian variational family for the mutual-information bound: a learnable
// mean network u -> mu(u) and a free per-dimension log-sigma vector.
struct VariationalHead {
  DenseNet mean_net;    // N -> hidden -> M
  Parameter log_sigma;  // 1×M, sigma = exp(log_sigma)

  VariationalHead(std::size_t N, std::size_t M, std::size_t hidden, Rng& rng);
  VariationalHead(DenseNet net, Tensor log_sigma_values);

  std::vector<Parameter*> params();
};

// Known Class Identifier: h -> hidden -> hidden -> 1 logit; score is the
// sigmoid of that logit, strictly inside (0,1).
struct KciNet {
  DenseNet net;

  KciNet(std::size_t h, std::size_t hidden, Rng& rng);
  explicit KciNet(DenseNet n) : net(std::move(n)) {}

  // per-row sigmoid scores for a batch of latents
  Tensor scores(const Tensor& z) const;
  double score(const Tensor& z_single) const;

  std::vector<Parameter*> params() { return net.params(); }
};

}  // namespace ncdwf
