#include "ncdwf/config.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ncdwf/error.hpp"

namespace ncdwf {

const char* const kLabTrainCsv = "lab_train.csv";
const char* const kLabTestCsv = "lab_test.csv";
const char* const kUnlabTrainCsv = "unlab_train.csv";
const char* const kUnlabTestCsv = "unlab_test.csv";

void GeneratorSpec::validate() const {
  if (classes < 2) throw ConfigError("config: data classes must be >= 2");
  if (train_per_class < 1) throw ConfigError("config: train_per_class must be >= 1");
  if (test_per_class < 1) throw ConfigError("config: test_per_class must be >= 1");
  MixtureParams m;
  m.classes = classes;
  m.per_class = train_per_class + test_per_class;
  m.dim = dim;
  m.center_scale = center_scale;
  m.noise_sigma = noise_sigma;
  m.min_separation_multiplier = min_separation_multiplier;
  m.validate();
}

void RunConfig::validate() const {
  data.validate();
  if (labeled_classes < 1 || unlabeled_classes < 1)
    throw ConfigError("config: both class groups must be nonempty");
  if (labeled_classes + unlabeled_classes != data.classes)
    throw ConfigError("config: labeled + unlabeled must equal data classes (" +
                      std::to_string(labeled_classes) + " + " +
                      std::to_string(unlabeled_classes) + " vs " +
                      std::to_string(data.classes) + ")");
  model_config().validate();
  phase1.validate();
  phase2.validate();
  if (tau_list.empty()) throw ConfigError("config: tau list must not be empty");
  for (double tau : tau_list)
    if (!(tau > 0.0 && tau < 1.0))
      throw ConfigError("config: every tau must lie strictly inside (0, 1)");
  if (!(predictions_tau > 0.0 && predictions_tau < 1.0))
    throw ConfigError("config: predictions_tau must lie strictly inside (0, 1)");
  if (out_dir.empty()) throw ConfigError("config: output directory must not be empty");
}

ModelConfig RunConfig::model_config() const {
  ModelConfig mc;
  mc.d = data.dim;
  mc.h = latent_dim;
  mc.M = labeled_classes;
  mc.N = unlabeled_classes;
  mc.fe_hidden = fe_hidden;
  mc.head_hidden = head_hidden;
  mc.mean_net_hidden = mean_net_hidden;
  mc.kci_hidden = kci_hidden;
  return mc;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void emit(std::ostringstream& os, const char* key, std::size_t v) {
  os << key << " = " << v << '\n';
}
void emit(std::ostringstream& os, const char* key, double v) {
  os << key << " = " << fmt_double(v) << '\n';
}
void emit(std::ostringstream& os, const char* key, bool v) {
  os << key << " = " << (v ? "true" : "false") << '\n';
}
void emit(std::ostringstream& os, const char* key, const std::string& v) {
  os << key << " = " << v << '\n';
}

std::uint64_t fnv1a_bytes(const void* bytes, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

std::string RunConfig::canonical_text() const {
  std::ostringstream os;
  os << "[data]\n";
  emit(os, "classes", data.classes);
  emit(os, "train_per_class", data.train_per_class);
  emit(os, "test_per_class", data.test_per_class);
  emit(os, "dim", data.dim);
  emit(os, "center_scale", data.center_scale);
  emit(os, "noise_sigma", data.noise_sigma);
  emit(os, "min_separation_multiplier", data.min_separation_multiplier);
  emit(os, "labeled", labeled_classes);
  emit(os, "unlabeled", unlabeled_classes);
  emit(os, "dir", dataset_dir);
  os << "[model]\n";
  emit(os, "latent_dim", latent_dim);
  emit(os, "fe_hidden", fe_hidden);
  emit(os, "head_hidden", head_hidden);
  emit(os, "mean_net_hidden", mean_net_hidden);
  emit(os, "kci_hidden", kci_hidden);
  os << "[phase1]\n";
  emit(os, "epochs", phase1.epochs);
  emit(os, "batch_size", phase1.batch_size);
  emit(os, "learning_rate", phase1.learning_rate);
  emit(os, "momentum", phase1.momentum);
  os << "[phase2]\n";
  emit(os, "epochs", phase2.epochs);
  emit(os, "batch_size", phase2.batch_size);
  emit(os, "learning_rate", phase2.learning_rate);
  emit(os, "momentum", phase2.momentum);
  emit(os, "lambda_ce", phase2.lambda_ce);
  emit(os, "lambda_mi", phase2.lambda_mi);
  emit(os, "lambda_fd", phase2.lambda_fd);
  emit(os, "lambda_replay", phase2.lambda_replay);
  emit(os, "pseudo_fraction", phase2.pseudo_fraction);
  emit(os, "soft_targets", phase2.soft_targets);
  emit(os, "squared_fd", phase2.squared_fd);
  emit(os, "freeze_labeled_head", phase2.freeze_labeled_head);
  emit(os, "joint_softmax", phase2.joint_softmax);
  emit(os, "enable_plr", phase2.enable_plr);
  emit(os, "enable_mir", phase2.enable_mir);
  emit(os, "enable_fd", phase2.enable_fd);
  os << "[inversion]\n";
  emit(os, "iterations", phase2.inversion.iterations);
  emit(os, "per_class_count", phase2.inversion.per_class_count);
  emit(os, "beta_gamma", phase2.inversion.beta_gamma);
  emit(os, "beta_rho", phase2.inversion.beta_rho);
  emit(os, "step_size", phase2.inversion.step_size);
  os << "[sinkhorn]\n";
  emit(os, "epsilon", phase2.sinkhorn_epsilon);
  emit(os, "max_iters", phase2.sinkhorn_max_iters);
  emit(os, "tol", phase2.sinkhorn_tol);
  os << "[eval]\n";
  {
    std::string taus;
    for (std::size_t i = 0; i < tau_list.size(); ++i) {
      if (i) taus += ',';
      taus += fmt_double(tau_list[i]);
    }
    emit(os, "tau", taus);
  }
  emit(os, "predictions_tau", predictions_tau);
  os << "[run]\n";
  emit(os, "seed", static_cast<std::size_t>(seed));
  return os.str();
}

std::uint64_t RunConfig::config_hash() const {
  const std::string text = canonical_text();
  return fnv1a_bytes(text.data(), text.size());
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void bad_line(std::size_t line, const std::string& what) {
  throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

std::size_t parse_count(const std::string& v, std::size_t line) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    bad_line(line, "expected a nonnegative integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_seed(const std::string& v, std::size_t line) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    bad_line(line, "expected a nonnegative integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& v, std::size_t line) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    bad_line(line, "expected a number, got '" + v + "'");
  return out;
}

bool parse_flag(const std::string& v, std::size_t line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_line(line, "expected true or false, got '" + v + "'");
}

std::vector<double> parse_tau_list(const std::string& v, std::size_t line) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    std::size_t comma = v.find(',', start);
    if (comma == std::string::npos) comma = v.size();
    const std::string item = trim(v.substr(start, comma - start));
    if (item.empty()) bad_line(line, "empty entry in tau list");
    out.push_back(parse_real(item, line));
    start = comma + 1;
  }
  return out;
}

void apply_key(RunConfig& c, const std::string& sec, const std::string& key,
               const std::string& val, std::size_t line) {
  if (sec == "data") {
    if (key == "classes") c.data.classes = parse_count(val, line);
    else if (key == "train_per_class") c.data.train_per_class = parse_count(val, line);
    else if (key == "test_per_class") c.data.test_per_class = parse_count(val, line);
    else if (key == "dim") c.data.dim = parse_count(val, line);
    else if (key == "center_scale") c.data.center_scale = parse_real(val, line);
    else if (key == "noise_sigma") c.data.noise_sigma = parse_real(val, line);
    else if (key == "min_separation_multiplier")
      c.data.min_separation_multiplier = parse_real(val, line);
    else if (key == "labeled") c.labeled_classes = parse_count(val, line);
    else if (key == "unlabeled") c.unlabeled_classes = parse_count(val, line);
    else if (key == "dir") c.dataset_dir = val;
    else bad_line(line, "unknown key '" + key + "' in [data]");
  } else if (sec == "model") {
    if (key == "latent_dim") c.latent_dim = parse_count(val, line);
    else if (key == "fe_hidden") c.fe_hidden = parse_count(val, line);
    else if (key == "head_hidden") c.head_hidden = parse_count(val, line);
    else if (key == "mean_net_hidden") c.mean_net_hidden = parse_count(val, line);
    else if (key == "kci_hidden") c.kci_hidden = parse_count(val, line);
    else bad_line(line, "unknown key '" + key + "' in [model]");
  } else if (sec == "phase1") {
    if (key == "epochs") c.phase1.epochs = parse_count(val, line);
    else if (key == "batch_size") c.phase1.batch_size = parse_count(val, line);
    else if (key == "learning_rate") c.phase1.learning_rate = parse_real(val, line);
    else if (key == "momentum") c.phase1.momentum = parse_real(val, line);
    else bad_line(line, "unknown key '" + key + "' in [phase1]");
  } else if (sec == "phase2") {
    if (key == "epochs") c.phase2.epochs = parse_count(val, line);
    else if (key == "batch_size") c.phase2.batch_size = parse_count(val, line);
    else if (key == "learning_rate") c.phase2.learning_rate = parse_real(val, line);
    else if (key == "momentum") c.phase2.momentum = parse_real(val, line);
    else if (key == "lambda_ce") c.phase2.lambda_ce = parse_real(val, line);
    else if (key == "lambda_mi") c.phase2.lambda_mi = parse_real(val, line);
    else if (key == "lambda_fd") c.phase2.lambda_fd = parse_real(val, line);
    else if (key == "lambda_replay") c.phase2.lambda_replay = parse_real(val, line);
    else if (key == "pseudo_fraction") c.phase2.pseudo_fraction = parse_real(val, line);
    else if (key == "soft_targets") c.phase2.soft_targets = parse_flag(val, line);
    else if (key == "squared_fd") c.phase2.squared_fd = parse_flag(val, line);
    else if (key == "freeze_labeled_head")
      c.phase2.freeze_labeled_head = parse_flag(val, line);
    else if (key == "joint_softmax") c.phase2.joint_softmax = parse_flag(val, line);
    else if (key == "enable_plr") c.phase2.enable_plr = parse_flag(val, line);
    else if (key == "enable_mir") c.phase2.enable_mir = parse_flag(val, line);
    else if (key == "enable_fd") c.phase2.enable_fd = parse_flag(val, line);
    else bad_line(line, "unknown key '" + key + "' in [phase2]");
  } else if (sec == "inversion") {
    if (key == "iterations") c.phase2.inversion.iterations = parse_count(val, line);
    else if (key == "per_class_count")
      c.phase2.inversion.per_class_count = parse_count(val, line);
    else if (key == "beta_gamma") c.phase2.inversion.beta_gamma = parse_real(val, line);
    else if (key == "beta_rho") c.phase2.inversion.beta_rho = parse_real(val, line);
    else if (key == "step_size") c.phase2.inversion.step_size = parse_real(val, line);
    else bad_line(line, "unknown key '" + key + "' in [inversion]");
  } else if (sec == "sinkhorn") {
    if (key == "epsilon") c.phase2.sinkhorn_epsilon = parse_real(val, line);
    else if (key == "max_iters") c.phase2.sinkhorn_max_iters = parse_count(val, line);
    else if (key == "tol") c.phase2.sinkhorn_tol = parse_real(val, line);
    else bad_line(line, "unknown key '" + key + "' in [sinkhorn]");
  } else if (sec == "eval") {
    if (key == "tau") c.tau_list = parse_tau_list(val, line);
    else if (key == "predictions_tau") c.predictions_tau = parse_real(val, line);
    else bad_line(line, "unknown key '" + key + "' in [eval]");
  } else if (sec == "run") {
    if (key == "seed") c.seed = parse_seed(val, line);
    else if (key == "out") c.out_dir = val;
    else bad_line(line, "unknown key '" + key + "' in [run]");
  } else {
    bad_line(line, "unknown section [" + sec + "]");
  }
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const RunConfig& base) {
  RunConfig cfg = base;
  std::istringstream in(text);
  std::string section;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') bad_line(line, "unterminated section header");
      section = trim(s.substr(1, s.size() - 2));
      if (section.empty()) bad_line(line, "empty section name");
      continue;
    }
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos) bad_line(line, "expected key = value");
    if (section.empty()) bad_line(line, "key before any [section]");
    const std::string key = trim(s.substr(0, eq));
    const std::string val = trim(s.substr(eq + 1));
    if (key.empty()) bad_line(line, "empty key");
    apply_key(cfg, section, key, val, line);
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), base);
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.data.min_separation_multiplier = 8.0;
  // A short supervised phase leaves labeled logits in the low tens. Deep
  // overtraining saturates them instead, and then the joint softmax needs the
  // novel logits to climb past that scale before discovery can move at all.
  c.phase1.epochs = 5;
  c.phase1.batch_size = 64;
  c.phase1.learning_rate = 0.005;
  c.phase1.momentum = 0.5;
  c.phase2 = c.phase1;
  c.phase2.epochs = 30;
  // Momentum feeds back through the variational head's sigma and blows up
  // the discovery objective; the second phase runs it without momentum.
  c.phase2.momentum = 0.0;
  c.phase2.sinkhorn_epsilon = 0.1;
  c.phase2.joint_softmax = true;
  if (name == "synth-10-5-5") {
    c.out_dir = "runs/synth-10-5-5";
    return c;
  }
  if (name == "synth-100-20-80-style") {
    c.data.classes = 100;
    c.data.train_per_class = 25;
    c.data.test_per_class = 10;
    c.data.center_scale = 20.0;
    c.labeled_classes = 20;
    c.unlabeled_classes = 80;
    c.phase1.epochs = 15;
    c.phase2.epochs = 20;
    c.phase2.inversion.per_class_count = 20;
    c.out_dir = "runs/synth-100-20-80-style";
    return c;
  }
  if (name == "paper-scale") {
    c.phase1.epochs = 200;
    c.phase1.batch_size = 512;
    c.phase2.epochs = 200;
    c.phase2.batch_size = 512;
    c.out_dir = "runs/paper-scale";
    return c;
  }
  throw ConfigError("config: unknown preset '" + name +
                    "' (available: synth-10-5-5, synth-100-20-80-style, paper-scale)");
}

std::vector<std::string> preset_names() {
  return {"synth-10-5-5", "synth-100-20-80-style", "paper-scale"};
}

namespace {

RawDataset load_csv_checked(const std::filesystem::path& path, std::size_t dim,
                            std::size_t class_count, const char* what) {
  if (!std::filesystem::exists(path))
    throw ConfigError("dataset missing: " + path.string());
  RawDataset d = load_csv(path.string());
  if (d.dim() != dim)
    throw ConfigError(std::string(what) + ": feature dim " + std::to_string(d.dim()) +
                      " does not match configured dim " + std::to_string(dim));
  for (long y : d.y)
    if (static_cast<std::size_t>(y) >= class_count)
      throw ConfigError(std::string(what) + ": label " + std::to_string(y) +
                        " outside [0, " + std::to_string(class_count) + ")");
  return d;
}

}  // namespace

SplitDataset load_or_generate(const RunConfig& cfg) {
  if (cfg.dataset_dir.empty()) {
    MixtureParams m;
    m.classes = cfg.data.classes;
    m.per_class = cfg.data.train_per_class + cfg.data.test_per_class;
    m.dim = cfg.data.dim;
    m.center_scale = cfg.data.center_scale;
    m.noise_sigma = cfg.data.noise_sigma;
    m.min_separation_multiplier = cfg.data.min_separation_multiplier;
    const RawDataset raw = generate_gaussian_mixture(m, cfg.seed);
    SplitSpec spec;
    spec.total_classes = cfg.data.classes;
    spec.labeled = cfg.labeled_classes;
    spec.unlabeled = cfg.unlabeled_classes;
    const double test_fraction = static_cast<double>(cfg.data.test_per_class) /
                                 static_cast<double>(m.per_class);
    return split_dataset(raw, spec, test_fraction);
  }

  const std::filesystem::path dir(cfg.dataset_dir);
  SplitDataset d;
  d.d = cfg.data.dim;
  d.lab_train = load_csv_checked(dir / kLabTrainCsv, cfg.data.dim, cfg.labeled_classes,
                                 "lab_train");
  d.lab_test =
      load_csv_checked(dir / kLabTestCsv, cfg.data.dim, cfg.labeled_classes, "lab_test");
  RawDataset unlab_train = load_csv_checked(dir / kUnlabTrainCsv, cfg.data.dim,
                                            cfg.unlabeled_classes, "unlab_train");
  d.unlab_test = load_csv_checked(dir / kUnlabTestCsv, cfg.data.dim, cfg.unlabeled_classes,
                                  "unlab_test");
  d.unlab_train_x = std::move(unlab_train.x);
  d.unlab_train_labels = SealedLabelStore(std::move(unlab_train.y));
  return d;
}

}  // namespace ncdwf
