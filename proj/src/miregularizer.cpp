#include "ncdwf/miregularizer.hpp"

#include <cmath>

#include "ncdwf/error.hpp"

namespace ncdwf {

// Long discovery runs anneal sigma toward the residual spread of an overfit
// mean net; when the extractor then drifts, a fresh residual divided by a
// near-zero sigma squared produces gradient spikes large enough to destroy
// the run. The floor caps that amplification at 100.
namespace {
constexpr double kSigmaFloor = 0.1;
}

graph::Node mi_loss_node(graph::Tape& t, graph::Node u, const Tensor& labeled_targets,
                         VariationalHead& vhead, bool printed_sign) {
  const Tensor& uval = t.val(u);
  if (uval.cols() != vhead.mean_net.in_dim())
    throw ShapeError("mi loss: u has dim " + std::to_string(uval.cols()) + ", mean net expects " +
                     std::to_string(vhead.mean_net.in_dim()));
  if (labeled_targets.cols() != vhead.mean_net.out_dim())
    throw ShapeError("mi loss: targets have dim " + std::to_string(labeled_targets.cols()) +
                     ", mean net emits " + std::to_string(vhead.mean_net.out_dim()));
  if (labeled_targets.rows() != uval.rows())
    throw ShapeError("mi loss: batch rows disagree between targets and u");

  const auto B = static_cast<double>(uval.rows());
  const graph::Node mu = vhead.mean_net.apply(t, u);
  const graph::Node r = t.sub(mu, t.input(labeled_targets));
  const graph::Node s = t.clamp_min(t.param(vhead.log_sigma), std::log(kSigmaFloor));
  const graph::Node quad = t.mul(t.square(r), t.exp(t.scale(s, -2.0)));
  const graph::Node loss = t.add(t.sum(s), t.scale(t.sum(quad), 1.0 / (2.0 * B)));
  return printed_sign ? t.scale(loss, -1.0) : loss;
}

MiResult mi_loss(const MiBatch& batch, VariationalHead& vhead, bool printed_sign) {
  graph::Tape t;
  const graph::Node u = t.var(batch.unlabeled_logits);
  const graph::Node loss = mi_loss_node(t, u, batch.labeled_logits, vhead, printed_sign);
  t.backward(loss);
  return {t.scalar_value(loss), t.grad(u)};
}

std::vector<double> optimal_sigma_check(const Tensor& residuals) {
  if (residuals.rows() < 1) throw ShapeError("optimal sigma: need at least one row");
  std::vector<double> out(residuals.cols(), 0.0);
  for (std::size_t i = 0; i < residuals.rows(); ++i)
    for (std::size_t k = 0; k < residuals.cols(); ++k)
      out[k] += residuals(i, k) * residuals(i, k);
  for (double& v : out) v = std::sqrt(v / static_cast<double>(residuals.rows()));
  return out;
}

}  // namespace ncdwf
