#pragma once

#include <vector>

#include "ncdwf/graph.hpp"
#include "ncdwf/models.hpp"
#include "ncdwf/tensor.hpp"

namespace ncdwf {

// Logits for the same batch of unlabeled inputs seen by both heads.
struct MiBatch {
  Tensor labeled_logits;    // B x M, regression targets, never differentiated
  Tensor unlabeled_logits;  // B x N
};

// mean over the batch of sum_i [ log sigma_i + (l_i - mu(u)_i)^2 / (2 sigma_i^2) ]
// with sigma = exp(log_sigma) floored at 1e-4. Gradients reach the variational
// head and, through u, whatever produced it; the targets are constants.
// printed_sign flips the overall sign (diagnostic only, maximized by sigma growth).
graph::Node mi_loss_node(graph::Tape& t, graph::Node u, const Tensor& labeled_targets,
                         VariationalHead& vhead, bool printed_sign = false);

struct MiResult {
  double loss = 0.0;
  Tensor grad_u;  // d loss / d unlabeled_logits
};

// Standalone evaluation: accumulates gradients into the variational head
// parameters and returns the gradient with respect to u.
MiResult mi_loss(const MiBatch& batch, VariationalHead& vhead, bool printed_sign = false);

// Per-dimension stationary point of the loss in sigma: sqrt(mean_b residual^2).
std::vector<double> optimal_sigma_check(const Tensor& residuals);

}  // namespace ncdwf
