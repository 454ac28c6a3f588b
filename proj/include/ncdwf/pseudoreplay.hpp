#pragma once

#include <string>
#include <vector>

#include "ncdwf/models.hpp"
#include "ncdwf/rng.hpp"
#include "ncdwf/tensor.hpp"

namespace ncdwf {

struct InversionConfig {
  std::size_t iterations = 20;       // ascent steps per latent
  std::size_t per_class_count = 50;  // latents generated per class
  double beta_gamma = 1.0;
  double beta_rho = 100.0;
  double step_size = 0.1;  // 1.0 reproduces the unscaled update rule

  void validate() const;
};

struct PseudoLatentSet {
  Tensor z;                  // (M * per_class_count) x h
  std::vector<long> labels;  // source class per row

  std::size_t size() const { return labels.size(); }
};

// means[c] = arithmetic mean of the latents labeled c. Every class in
// 0..M-1 must appear at least once.
ClassMeanStore compute_class_means(const Tensor& latents, const std::vector<long>& labels,
                                   std::size_t M);

// Gradient ascent on the raw class-c logit of the frozen head, starting
// from the given point; returns the point after `iterations` steps.
Tensor invert_latent_from(const DenseNet& head, std::size_t c, const Tensor& z1,
                          std::size_t iterations, double step_size);

// Same, starting from z1 ~ N(0, I).
Tensor invert_latent(const DenseNet& head, std::size_t c, const InversionConfig& cfg, Rng& rng);

// z_p = alpha * z + (1 - alpha) * means[c]
Tensor mix_with_class_mean(const Tensor& z, const ClassMeanStore& store, std::size_t c,
                           double alpha);

double sample_alpha(double gamma, double rho, Rng& rng);

// One inversion + mixup per (class, repetition) pair, classes in order.
PseudoLatentSet generate_pseudo_dataset(const DenseNet& head, const ClassMeanStore& store,
                                        const InversionConfig& cfg, Rng& rng);

// Columns `z_0..z_{h-1},class`.
void export_pseudo_csv(const PseudoLatentSet& set, const std::string& path);

}  // namespace ncdwf
