#include "ncdwf/models.hpp"

#include <cmath>
#include <cstring>

namespace ncdwf {

DenseNet::DenseNet(const std::string& name, std::vector<std::size_t> dims, Rng& rng)
    : name_(name), dims_(std::move(dims)) {
  if (dims_.size() < 2) throw ConfigError("DenseNet " + name + ": needs in and out dims");
  params_.reserve(2 * (dims_.size() - 1));
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    const std::size_t fan_in = dims_[l], fan_out = dims_[l + 1];
    Tensor W(fan_out, fan_in);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < W.size(); ++i) W.data()[i] = rng.uniform(-bound, bound);
    params_.emplace_back(name + ".W" + std::to_string(l), std::move(W));
    params_.emplace_back(name + ".b" + std::to_string(l), Tensor(1, fan_out));
  }
}

DenseNet::DenseNet(const std::string& name, std::vector<Tensor> weights) : name_(name) {
  if (weights.empty() || weights.size() % 2 != 0)
    throw ConfigError("DenseNet " + name + ": weight list must be W,b pairs");
  const std::size_t layers = weights.size() / 2;
  dims_.push_back(weights[0].cols());
  params_.reserve(weights.size());
  for (std::size_t l = 0; l < layers; ++l) {
    Tensor& W = weights[2 * l];
    Tensor& b = weights[2 * l + 1];
    if (W.cols() != dims_.back())
      throw ConfigError("DenseNet " + name + ": layer " + std::to_string(l) +
                        " input dim mismatch");
    if (b.rows() != 1 || b.cols() != W.rows())
      throw ConfigError("DenseNet " + name + ": bias shape mismatch at layer " +
                        std::to_string(l));
    dims_.push_back(W.rows());
    params_.emplace_back(name + ".W" + std::to_string(l), std::move(W));
    params_.emplace_back(name + ".b" + std::to_string(l), std::move(b));
  }
}

graph::Node DenseNet::apply(graph::Tape& t, graph::Node x) {
  const std::size_t layers = params_.size() / 2;
  graph::Node cur = x;
  for (std::size_t l = 0; l < layers; ++l) {
    cur = t.affine(cur, t.param(params_[2 * l]), t.param(params_[2 * l + 1]));
    if (l + 1 < layers) cur = t.relu(cur);
  }
  return cur;
}

graph::Node DenseNet::apply_frozen(graph::Tape& t, graph::Node x) const {
  const std::size_t layers = params_.size() / 2;
  graph::Node cur = x;
  for (std::size_t l = 0; l < layers; ++l) {
    cur = t.affine(cur, t.input(params_[2 * l].value), t.input(params_[2 * l + 1].value));
    if (l + 1 < layers) cur = t.relu(cur);
  }
  return cur;
}

Tensor DenseNet::forward(const Tensor& x) const {
  if (x.cols() != in_dim())
    throw ShapeError("DenseNet " + name_ + ": input dim " + std::to_string(x.cols()) +
                     ", expected " + std::to_string(in_dim()));
  const kernels::Ops& o = kernels::active();
  const std::size_t layers = params_.size() / 2;
  Tensor cur = x;
  for (std::size_t l = 0; l < layers; ++l) {
    const Tensor& W = params_[2 * l].value;
    const Tensor& b = params_[2 * l + 1].value;
    Tensor next(cur.rows(), W.rows());
    for (std::size_t i = 0; i < next.rows(); ++i)
      std::memcpy(next.row_ptr(i), b.data(), b.cols() * sizeof(double));
    kernels::matmul_nt(cur.data(), W.data(), next.data(), cur.rows(), cur.cols(),
                       W.rows(), /*acc=*/true);
    if (l + 1 < layers) o.relu(next.data(), next.data(), next.size());
    cur = std::move(next);
  }
  return cur;
}

std::vector<Parameter*> DenseNet::params() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (Parameter& p : params_) out.push_back(&p);
  return out;
}

std::uint64_t param_checksum(const DenseNet& net) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const Parameter& p : net.layers()) {
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(p.value.data());
    for (std::size_t i = 0; i < p.value.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

void ModelConfig::validate() const {
  if (d == 0 || h == 0 || M == 0 || N == 0)
    throw ConfigError("model dims d, h, M, N must all be >= 1");
  if (kci_hidden == 0 || mean_net_hidden == 0)
    throw ConfigError("hidden widths must be >= 1");
}

namespace {

std::vector<std::size_t> stack_dims(std::size_t in, std::size_t hidden_count,
                                    std::size_t width, std::size_t out) {
  std::vector<std::size_t> dims{in};
  for (std::size_t i = 0; i < hidden_count; ++i) dims.push_back(width);
  dims.push_back(out);
  return dims;
}

}  // namespace

NcdwfModel::NcdwfModel(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  fe_ = DenseNet("fe", stack_dims(cfg_.d, cfg_.fe_hidden, cfg_.h, cfg_.h), rng);
  lab_ = DenseNet("lab", stack_dims(cfg_.h, cfg_.head_hidden, cfg_.h, cfg_.M), rng);
  ulb_ = DenseNet("ulb", stack_dims(cfg_.h, cfg_.head_hidden, cfg_.h, cfg_.N), rng);
}

NcdwfModel::NcdwfModel(ModelConfig cfg, DenseNet fe, DenseNet lab, DenseNet ulb,
                       std::optional<DenseNet> frozen_fe)
    : cfg_(std::move(cfg)),
      fe_(std::move(fe)),
      lab_(std::move(lab)),
      ulb_(std::move(ulb)),
      frozen_fe_(std::move(frozen_fe)) {
  cfg_.validate();
  if (fe_.in_dim() != cfg_.d || fe_.out_dim() != cfg_.h)
    throw ConfigError("extractor dims disagree with model config");
  if (lab_.out_dim() != cfg_.M || ulb_.out_dim() != cfg_.N)
    throw ConfigError("head output dims disagree with M/N");
}

void NcdwfModel::freeze_extractor_snapshot() {
  if (frozen_fe_) throw Error("freeze_extractor_snapshot: snapshot already taken");
  std::vector<Tensor> copies;
  for (const Parameter& p : fe_.layers()) copies.push_back(p.value);
  frozen_fe_.emplace("fe_frozen", std::move(copies));
}

const DenseNet& NcdwfModel::frozen_extractor() const {
  if (!frozen_fe_) throw Error("frozen_extractor: no snapshot taken yet");
  return *frozen_fe_;
}

std::vector<Parameter*> NcdwfModel::trainable_params() {
  std::vector<Parameter*> out = fe_.params();
  for (Parameter* p : lab_.params()) out.push_back(p);
  for (Parameter* p : ulb_.params()) out.push_back(p);
  return out;
}

namespace {

// Start sigma wide. The mean net is random at first, so early residuals are
// as large as the labeled logits themselves; a unit sigma would turn those
// into huge quadratic penalties and the shared extractor takes the hit. A
// wide sigma keeps the first steps gentle and the log-sigma term pulls it
// back down as the fit improves.
Tensor initial_log_sigma(std::size_t M) {
  Tensor t(1, M);
  t.fill(2.0);
  return t;
}

}  // namespace

VariationalHead::VariationalHead(std::size_t N, std::size_t M, std::size_t hidden,
                                 Rng& rng)
    : mean_net("mu", {N, hidden, M}, rng),
      log_sigma("log_sigma", initial_log_sigma(M)) {}

VariationalHead::VariationalHead(DenseNet net, Tensor log_sigma_values)
    : mean_net(std::move(net)), log_sigma("log_sigma", std::move(log_sigma_values)) {}

std::vector<Parameter*> VariationalHead::params() {
  std::vector<Parameter*> out = mean_net.params();
  out.push_back(&log_sigma);
  return out;
}

KciNet::KciNet(std::size_t h, std::size_t hidden, Rng& rng)
    : net("kci", {h, hidden, hidden, 1}, rng) {}

Tensor KciNet::scores(const Tensor& z) const {
  Tensor logits = net.forward(z);
  Tensor s(logits.rows(), 1);
  kernels::sigmoid_vec(logits.data(), s.data(), logits.size());
  return s;
}

double KciNet::score(const Tensor& z_single) const {
  return scores(z_single)(0, 0);
}

}  // namespace ncdwf
