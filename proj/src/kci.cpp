#include "ncdwf/kci.hpp"

#include <cstring>

#include "ncdwf/error.hpp"

namespace ncdwf {

KciDataset make_kci_dataset(const Tensor& pseudo_z, const Tensor& unlab_z) {
  if (pseudo_z.rows() < 1 || unlab_z.rows() < 1)
    throw ConfigError("kci dataset: need at least one sample of each label");
  if (pseudo_z.cols() != unlab_z.cols())
    throw ShapeError("kci dataset: latent dims disagree");
  KciDataset out;
  out.z = Tensor(pseudo_z.rows() + unlab_z.rows(), pseudo_z.cols());
  std::memcpy(out.z.data(), pseudo_z.data(), pseudo_z.size() * sizeof(double));
  std::memcpy(out.z.data() + pseudo_z.size(), unlab_z.data(), unlab_z.size() * sizeof(double));
  out.y.assign(pseudo_z.rows(), 0.0);
  out.y.insert(out.y.end(), unlab_z.rows(), 1.0);
  return out;
}

graph::Node kci_loss_node(graph::Tape& t, KciNet& kci, const Tensor& z,
                          const std::vector<double>& y) {
  if (z.rows() != y.size()) throw ShapeError("kci loss: latent rows vs label count");
  if (z.rows() < 1) throw ConfigError("kci loss: empty batch");
  const std::size_t B = z.rows();
  Tensor pos(B, 1), neg(B, 1);
  for (std::size_t i = 0; i < B; ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw ConfigError("kci loss: labels must be 0 or 1");
    pos(i, 0) = y[i];
    neg(i, 0) = 1.0 - y[i];
  }
  constexpr double kEps = 1e-12;
  const graph::Node s = t.sigmoid(kci.net.apply(t, t.input(z)));
  const graph::Node log_s = t.log(t.clamp_min(s, kEps));
  const graph::Node log_1ms =
      t.log(t.clamp_min(t.sub(t.input(Tensor(B, 1, 1.0)), s), kEps));
  const graph::Node ll = t.add(t.mul(t.input(pos), log_s), t.mul(t.input(neg), log_1ms));
  return t.scale(t.sum(ll), -1.0 / static_cast<double>(B));
}

double kci_loss(KciNet& kci, const Tensor& z, const std::vector<double>& y) {
  graph::Tape t;
  const graph::Node loss = kci_loss_node(t, kci, z, y);
  t.backward(loss);
  return t.scalar_value(loss);
}

RoutingDecision route(const KciNet& kci, const Tensor& z_t, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("route: tau must lie in (0, 1)");
  RoutingDecision d;
  d.tau = tau;
  d.score = kci.score(z_t);
  d.route = d.score > tau ? Route::UnlabeledHead : Route::LabeledHead;
  return d;
}

}  // namespace ncdwf
