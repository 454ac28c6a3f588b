#pragma once

#include <vector>

#include "ncdwf/graph.hpp"
#include "ncdwf/models.hpp"
#include "ncdwf/tensor.hpp"

namespace ncdwf {

// Pseudo-latents carry label 0, unlabeled-pool latents label 1.
struct KciDataset {
  Tensor z;               // (n_pseudo + n_unlab) x h
  std::vector<double> y;  // {0, 1}
};

KciDataset make_kci_dataset(const Tensor& pseudo_z, const Tensor& unlab_z);

// Binary cross-entropy on sigmoid scores, probabilities clamped to
// [1e-12, 1 - 1e-12]. Latents enter as constants: the identifier adapts to
// the representation and never reshapes it.
graph::Node kci_loss_node(graph::Tape& t, KciNet& kci, const Tensor& z,
                          const std::vector<double>& y);

// Standalone evaluation; accumulates gradients into the identifier.
double kci_loss(KciNet& kci, const Tensor& z, const std::vector<double>& y);

enum class Route { LabeledHead, UnlabeledHead };

struct RoutingDecision {
  double score = 0.0;
  Route route = Route::LabeledHead;
  double tau = 0.0;
};

// route == UnlabeledHead iff score > tau
RoutingDecision route(const KciNet& kci, const Tensor& z_t, double tau);

}  // namespace ncdwf
