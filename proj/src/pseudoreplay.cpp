#include "ncdwf/pseudoreplay.hpp"

#include <cstdio>
#include <fstream>

#include "ncdwf/error.hpp"
#include "ncdwf/graph.hpp"
#include "ncdwf/kernels.hpp"

namespace ncdwf {

void InversionConfig::validate() const {
  if (iterations < 1 || per_class_count < 1)
    throw ConfigError("inversion: iterations and per_class_count must be >= 1");
  if (!(beta_gamma > 0.0 && beta_rho > 0.0))
    throw ConfigError("inversion: beta parameters must be > 0");
  if (!(step_size > 0.0)) throw ConfigError("inversion: step_size must be > 0");
}

ClassMeanStore compute_class_means(const Tensor& latents, const std::vector<long>& labels,
                                   std::size_t M) {
  if (latents.rows() != labels.size())
    throw ShapeError("class means: " + std::to_string(latents.rows()) + " latents vs " +
                     std::to_string(labels.size()) + " labels");
  ClassMeanStore store;
  store.means = Tensor(M, latents.cols());
  store.counts.assign(M, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const long c = labels[i];
    if (c < 0 || static_cast<std::size_t>(c) >= M)
      throw Error("class means: label " + std::to_string(c) + " outside [0, " +
                  std::to_string(M) + ")");
    ++store.counts[static_cast<std::size_t>(c)];
    kernels::active().add(store.means.row_ptr(static_cast<std::size_t>(c)),
                          latents.row_ptr(i),
                          store.means.row_ptr(static_cast<std::size_t>(c)), latents.cols());
  }
  for (std::size_t c = 0; c < M; ++c) {
    if (store.counts[c] == 0)
      throw Error("class means: class " + std::to_string(c) + " has no samples");
    kernels::active().scal(1.0 / static_cast<double>(store.counts[c]), store.means.row_ptr(c),
                           store.means.row_ptr(c), store.means.cols());
  }
  return store;
}

Tensor invert_latent_from(const DenseNet& head, std::size_t c, const Tensor& z1,
                          std::size_t iterations, double step_size) {
  if (c >= head.out_dim())
    throw ConfigError("inversion: class " + std::to_string(c) + " outside head range");
  if (z1.rows() != 1 || z1.cols() != head.in_dim())
    throw ShapeError("inversion: start point must be 1 x " + std::to_string(head.in_dim()));

  Tensor onehot(1, head.out_dim());
  onehot(0, c) = 1.0;
  Tensor z = z1;
  for (std::size_t it = 0; it < iterations; ++it) {
    try {
      graph::Tape tape;
      const graph::Node zv = tape.var(z);
      const graph::Node logits = head.apply_frozen(tape, zv);
      tape.backward(tape.sum(tape.mul(logits, tape.input(onehot))));
      const Tensor& g = tape.grad(zv);
      kernels::active().axpy(step_size, g.data(), z.data(), z.size());
    } catch (const NumericError& e) {
      throw NumericError("inversion diverged for class " + std::to_string(c) +
                         " at iteration " + std::to_string(it + 1) + ": " + e.what());
    }
    if (!z.all_finite())
      throw NumericError("inversion diverged for class " + std::to_string(c) +
                         " at iteration " + std::to_string(it + 1));
  }
  return z;
}

Tensor invert_latent(const DenseNet& head, std::size_t c, const InversionConfig& cfg, Rng& rng) {
  cfg.validate();
  Tensor z1(1, head.in_dim());
  for (std::size_t k = 0; k < z1.size(); ++k) z1.data()[k] = rng.normal();
  return invert_latent_from(head, c, z1, cfg.iterations, cfg.step_size);
}

Tensor mix_with_class_mean(const Tensor& z, const ClassMeanStore& store, std::size_t c,
                           double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw ConfigError("mixup: alpha " + std::to_string(alpha) + " outside [0, 1]");
  if (c >= store.means.rows())
    throw ConfigError("mixup: class " + std::to_string(c) + " outside mean store");
  if (z.rows() != 1 || z.cols() != store.means.cols())
    throw ShapeError("mixup: latent dim mismatch");
  Tensor out(1, z.cols());
  for (std::size_t k = 0; k < z.cols(); ++k)
    out(0, k) = alpha * z(0, k) + (1.0 - alpha) * store.means(c, k);
  return out;
}

double sample_alpha(double gamma, double rho, Rng& rng) {
  if (!(gamma > 0.0 && rho > 0.0)) throw ConfigError("alpha: beta parameters must be > 0");
  return rng.beta(gamma, rho);
}

PseudoLatentSet generate_pseudo_dataset(const DenseNet& head, const ClassMeanStore& store,
                                        const InversionConfig& cfg, Rng& rng) {
  cfg.validate();
  if (store.empty()) throw ConfigError("pseudo generation: empty class mean store");
  if (store.means.cols() != head.in_dim())
    throw ShapeError("pseudo generation: mean store dim vs head input dim");
  const std::size_t M = store.means.rows();

  PseudoLatentSet set;
  set.z = Tensor(M * cfg.per_class_count, head.in_dim());
  set.labels.resize(M * cfg.per_class_count);
  std::size_t row = 0;
  for (std::size_t c = 0; c < M; ++c) {
    for (std::size_t e = 0; e < cfg.per_class_count; ++e, ++row) {
      const Tensor z_l = invert_latent(head, c, cfg, rng);
      const double alpha = sample_alpha(cfg.beta_gamma, cfg.beta_rho, rng);
      const Tensor z_p = mix_with_class_mean(z_l, store, c, alpha);
      for (std::size_t k = 0; k < z_p.cols(); ++k) set.z(row, k) = z_p(0, k);
      set.labels[row] = static_cast<long>(c);
    }
  }
  return set;
}

void export_pseudo_csv(const PseudoLatentSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (std::size_t k = 0; k < set.z.cols(); ++k) out << "z_" << k << ',';
  out << "class\n";
  char buf[32];
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t k = 0; k < set.z.cols(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", set.z(i, k));
      out << buf << ',';
    }
    out << set.labels[i] << '\n';
  }
  if (!out) throw IoError("write failure on " + path);
}

}  // namespace ncdwf
