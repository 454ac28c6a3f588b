#include "ncdwf/selflabel.hpp"

#include <algorithm>
#include <cmath>

#include "ncdwf/error.hpp"
#include "ncdwf/kernels.hpp"

namespace ncdwf {

namespace {

// Sum over a sorted copy: the value depends only on the multiset of inputs,
// never on their order, which is what makes permutation equivariance exact.
double sorted_sum(std::vector<double>& scratch) {
  std::sort(scratch.begin(), scratch.end());
  double s = 0.0;
  for (double v : scratch) s += v;
  return s;
}

}  // namespace

TransportPlan solve_sinkhorn(const SelfLabelProblem& problem) {
  const Tensor& P = problem.P;
  if (P.empty()) throw ShapeError("solve_sinkhorn: empty prediction matrix");
  if (!(problem.epsilon > 0.0)) throw ConfigError("solve_sinkhorn: epsilon must be > 0");
  if (!P.all_finite()) throw NumericError("solve_sinkhorn: non-finite entries in P");

  const std::size_t N = P.rows(), B = P.cols();
  const double row_target = 1.0 / static_cast<double>(N);
  const double col_target = 1.0 / static_cast<double>(B);

  // K = exp((P - max P) / epsilon); the global shift cancels in Q and keeps
  // exp well inside range for small epsilon.
  Tensor K(N, B);
  const double m = kernels::active().max(P.data(), P.size());
  for (std::size_t i = 0; i < P.size(); ++i)
    K.data()[i] = (P.data()[i] - m) / problem.epsilon;
  kernels::exp_vec(K.data(), K.data(), K.size());

  std::vector<double> a(N, 1.0), b(B, 1.0);
  std::vector<double> scratch(std::max(N, B));

  TransportPlan plan;
  plan.residual_trace.reserve(problem.max_iters);

  auto residuals = [&]() {
    double worst = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      scratch.resize(B);
      for (std::size_t j = 0; j < B; ++j) scratch[j] = a[i] * K(i, j) * b[j];
      worst = std::max(worst, std::fabs(sorted_sum(scratch) - row_target));
    }
    for (std::size_t j = 0; j < B; ++j) {
      scratch.resize(N);
      for (std::size_t i = 0; i < N; ++i) scratch[i] = a[i] * K(i, j) * b[j];
      worst = std::max(worst, std::fabs(sorted_sum(scratch) - col_target));
    }
    return worst;
  };

  for (std::size_t it = 0; it < problem.max_iters; ++it) {
    for (std::size_t i = 0; i < N; ++i) {
      scratch.resize(B);
      for (std::size_t j = 0; j < B; ++j) scratch[j] = K(i, j) * b[j];
      a[i] = row_target / sorted_sum(scratch);
    }
    for (std::size_t j = 0; j < B; ++j) {
      scratch.resize(N);
      for (std::size_t i = 0; i < N; ++i) scratch[i] = K(i, j) * a[i];
      b[j] = col_target / sorted_sum(scratch);
    }
    plan.iterations_used = it + 1;
    for (double v : a)
      if (!std::isfinite(v)) throw NumericError("solve_sinkhorn: scaling diverged");
    for (double v : b)
      if (!std::isfinite(v)) throw NumericError("solve_sinkhorn: scaling diverged");

    const double res = residuals();
    plan.residual_trace.push_back(res);
    if (res < problem.tol) {
      plan.converged = true;
      break;
    }
  }

  plan.Q = Tensor(N, B);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < B; ++j) plan.Q(i, j) = a[i] * K(i, j) * b[j];
  return plan;
}

std::vector<std::size_t> harden_labels(const TransportPlan& plan, bool allow_unconverged) {
  if (!plan.converged && !allow_unconverged)
    throw Error("harden_labels: transport plan did not converge");
  const Tensor& Q = plan.Q;
  std::vector<std::size_t> labels(Q.cols());
  for (std::size_t j = 0; j < Q.cols(); ++j) {
    std::size_t best = 0;
    double best_v = Q(0, j);
    for (std::size_t i = 1; i < Q.rows(); ++i)
      if (Q(i, j) > best_v) {  // strict: ties keep the lowest index
        best_v = Q(i, j);
        best = i;
      }
    labels[j] = best;
  }
  return labels;
}

Tensor column_softmax_predictions(const Tensor& logits) {
  const std::size_t B = logits.rows(), N = logits.cols();
  if (B == 0 || N == 0) throw ShapeError("column_softmax_predictions: empty logits");
  Tensor P(N, B);
  std::vector<double> row(N);
  for (std::size_t i = 0; i < B; ++i) {
    const double m = kernels::active().max(logits.row_ptr(i), N);
    for (std::size_t j = 0; j < N; ++j) row[j] = logits(i, j) - m;
    kernels::exp_vec(row.data(), row.data(), N);
    const double s = kernels::active().sum(row.data(), N);
    for (std::size_t j = 0; j < N; ++j) P(j, i) = row[j] / s;
  }
  return P;
}

double transport_objective(const Tensor& Q, const Tensor& P, double epsilon) {
  if (!Q.same_shape(P)) throw ShapeError("transport_objective: shape mismatch");
  double dot = 0.0, entropy = 0.0;
  for (std::size_t i = 0; i < Q.size(); ++i) {
    const double q = Q.data()[i];
    dot += q * P.data()[i];
    if (q > 0.0) entropy -= q * std::log(q);
  }
  return dot + epsilon * entropy;
}

}  // namespace ncdwf
