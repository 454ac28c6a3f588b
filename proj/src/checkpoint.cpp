#include "ncdwf/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ncdwf {

namespace {

constexpr const char* kHeader = "NCDWF-CKPT v1";

void write_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
  os << "tensor " << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
  char buf[40];
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", t(r, c));
      os << buf << (c + 1 == t.cols() ? '\n' : ' ');
    }
  }
}

void write_net(std::ostream& os, const DenseNet& net) {
  for (const Parameter& p : net.layers()) write_tensor(os, p.name, p.value);
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const NcdwfModel& model, const VariationalHead& vhead,
                     const KciNet& kci, std::uint64_t seed, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("save_checkpoint: cannot open " + path + " for writing");
  const ModelConfig& cfg = model.config();
  os << kHeader << '\n';
  os << "M " << cfg.M << '\n';
  os << "N " << cfg.N << '\n';
  os << "d " << cfg.d << '\n';
  os << "h " << cfg.h << '\n';
  os << "seed " << seed << '\n';
  write_net(os, model.feature_extractor());
  write_net(os, model.labeled_head());
  write_net(os, model.unlabeled_head());
  if (model.has_snapshot()) write_net(os, model.frozen_extractor());
  write_net(os, vhead.mean_net);
  write_tensor(os, vhead.log_sigma.name, vhead.log_sigma.value);
  write_net(os, kci.net);
  const ClassMeanStore& cm = model.class_means();
  if (!cm.empty()) {
    write_tensor(os, "class_means", cm.means);
    Tensor counts(1, cm.counts.size());
    for (std::size_t i = 0; i < cm.counts.size(); ++i)
      counts(0, i) = static_cast<double>(cm.counts[i]);
    write_tensor(os, "class_mean_counts", counts);
  }
  os.flush();
  if (!os) throw IoError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint_raw(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("load_checkpoint: cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw IoError("load_checkpoint: empty file " + path);
  if (line != kHeader)
    throw IoError("load_checkpoint: version mismatch, expected '" + std::string(kHeader) +
                  "', found '" + line + "'");

  Checkpoint ck;
  bool have_m = false, have_n = false, have_d = false, have_h = false;
  std::string tok;
  while (is >> tok) {
    if (tok == "tensor") {
      std::string name;
      std::size_t rows, cols;
      if (!(is >> name >> rows >> cols))
        throw IoError("load_checkpoint: malformed tensor header");
      if (rows == 0 || cols == 0)
        throw IoError("load_checkpoint: zero-sized tensor " + name);
      Tensor t(rows, cols);
      for (std::size_t i = 0; i < t.size(); ++i) {
        std::string num;
        if (!(is >> num))
          throw IoError("load_checkpoint: truncated file inside tensor " + name);
        char* end = nullptr;
        t.data()[i] = std::strtod(num.c_str(), &end);
        if (end == num.c_str() || *end != '\0')
          throw IoError("load_checkpoint: bad float '" + num + "' in tensor " + name);
      }
      ck.tensors.emplace_back(std::move(name), std::move(t));
    } else {
      std::string value;
      if (!(is >> value)) throw IoError("load_checkpoint: key '" + tok + "' has no value");
      if (tok == "M") {
        ck.M = std::stoul(value);
        have_m = true;
      } else if (tok == "N") {
        ck.N = std::stoul(value);
        have_n = true;
      } else if (tok == "d") {
        ck.d = std::stoul(value);
        have_d = true;
      } else if (tok == "h") {
        ck.h = std::stoul(value);
        have_h = true;
      } else if (tok == "seed") {
        ck.seed = std::stoull(value);
      } else {
        throw IoError("load_checkpoint: unknown key '" + tok + "'");
      }
    }
  }
  if (!(have_m && have_n && have_d && have_h))
    throw IoError("load_checkpoint: missing M/N/d/h header keys");
  return ck;
}

namespace {

// Collect "<prefix>.W0", "<prefix>.b0", ... in file order.
std::vector<Tensor> net_weights(const Checkpoint& ck, const std::string& prefix,
                                bool required) {
  std::vector<Tensor> out;
  const std::string dot_prefix = prefix + ".";
  for (const auto& [name, t] : ck.tensors)
    if (name.rfind(dot_prefix, 0) == 0) out.push_back(t);
  if (required && out.empty())
    throw IoError("load_checkpoint: no tensors for network '" + prefix + "'");
  return out;
}

}  // namespace

RestoredState restore_checkpoint(const std::string& path) {
  Checkpoint ck = load_checkpoint_raw(path);

  DenseNet fe("fe", net_weights(ck, "fe", true));
  DenseNet lab("lab", net_weights(ck, "lab", true));
  DenseNet ulb("ulb", net_weights(ck, "ulb", true));
  std::optional<DenseNet> frozen;
  {
    std::vector<Tensor> fw = net_weights(ck, "fe_frozen", false);
    if (!fw.empty()) frozen.emplace("fe_frozen", std::move(fw));
  }
  DenseNet mu("mu", net_weights(ck, "mu", true));
  const Tensor* ls = ck.find("log_sigma");
  if (!ls) throw IoError("load_checkpoint: missing log_sigma");
  DenseNet kci_net("kci", net_weights(ck, "kci", true));

  if (fe.in_dim() != ck.d || fe.out_dim() != ck.h || lab.out_dim() != ck.M ||
      ulb.out_dim() != ck.N)
    throw IoError("load_checkpoint: dimension header inconsistent with payload");
  if (lab.in_dim() != ck.h || ulb.in_dim() != ck.h || kci_net.in_dim() != ck.h ||
      mu.in_dim() != ck.N || mu.out_dim() != ck.M || ls->cols() != ck.M)
    throw IoError("load_checkpoint: network dims inconsistent with header");
  if (frozen && (frozen->in_dim() != ck.d || frozen->out_dim() != ck.h))
    throw IoError("load_checkpoint: frozen extractor dims inconsistent");

  ModelConfig cfg;
  cfg.d = ck.d;
  cfg.h = ck.h;
  cfg.M = ck.M;
  cfg.N = ck.N;
  cfg.fe_hidden = fe.dims().size() - 2;
  cfg.head_hidden = lab.dims().size() - 2;
  cfg.mean_net_hidden = mu.dims().size() > 2 ? mu.dims()[1] : 64;
  cfg.kci_hidden = kci_net.dims().size() > 2 ? kci_net.dims()[1] : 128;

  NcdwfModel model(cfg, std::move(fe), std::move(lab), std::move(ulb), std::move(frozen));

  if (const Tensor* means = ck.find("class_means")) {
    const Tensor* counts = ck.find("class_mean_counts");
    if (!counts || counts->cols() != means->rows())
      throw IoError("load_checkpoint: class_means present without matching counts");
    if (means->rows() != ck.M || means->cols() != ck.h)
      throw IoError("load_checkpoint: class_means dims inconsistent");
    ClassMeanStore store;
    store.means = *means;
    for (std::size_t i = 0; i < counts->cols(); ++i)
      store.counts.push_back(static_cast<std::size_t>((*counts)(0, i)));
    model.class_means() = std::move(store);
  }

  VariationalHead vhead(std::move(mu), *ls);
  KciNet kci(std::move(kci_net));
  return RestoredState{std::move(model), std::move(vhead), std::move(kci), ck.seed};
}

}  // namespace ncdwf
