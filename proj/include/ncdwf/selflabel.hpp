#pragma once

#include <cstddef>
#include <vector>

#include "ncdwf/tensor.hpp"

namespace ncdwf {

// Entropic optimal transport over the equipartition polytope: find
// Q (N×B, nonnegative, row sums 1/N, column sums 1/B) maximizing
// Tr(Q^T P) + epsilon * H(Q). Columns of P are per-sample prediction
// probabilities.
struct SelfLabelProblem {
  Tensor P;  // N×B, columns sum to 1
  double epsilon = 1.0;
  std::size_t max_iters = 1000;
  double tol = 1e-8;
};

struct TransportPlan {
  Tensor Q;  // N×B
  std::size_t iterations_used = 0;
  bool converged = false;
  std::vector<double> residual_trace;  // max marginal residual after each round
};

// Alternating row/column scaling of exp(P/epsilon). All marginal sums are
// computed over sorted values, which makes the result exactly equivariant
// under row and column permutations (the summation order no longer depends
// on element positions).
TransportPlan solve_sinkhorn(const SelfLabelProblem& problem);

// Per-column argmax of Q; ties resolve to the lowest class index.
// Refuses unconverged plans unless allow_unconverged is set.
std::vector<std::size_t> harden_labels(const TransportPlan& plan,
                                       bool allow_unconverged = false);

// Columnwise predictions matrix from row-major logits: softmax each row of
// logits (B×N) and transpose into the N×B problem layout.
Tensor column_softmax_predictions(const Tensor& logits);

// Eq-style objective value Tr(Q^T P) + epsilon * H(Q), H(Q) = -sum Q log Q.
double transport_objective(const Tensor& Q, const Tensor& P, double epsilon);

}  // namespace ncdwf
