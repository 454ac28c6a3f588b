#include "ncdwf/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ncdwf/error.hpp"
#include "ncdwf/rng.hpp"

namespace ncdwf {

std::size_t RawDataset::class_count() const {
  long top = -1;
  for (long label : y) top = std::max(top, label);
  return static_cast<std::size_t>(top + 1);
}

void MixtureParams::validate() const {
  if (classes < 1 || per_class < 1 || dim < 1)
    throw ConfigError("mixture: classes, per_class and dim must be >= 1");
  if (!(noise_sigma > 0.0)) throw ConfigError("mixture: noise_sigma must be > 0");
  if (!(center_scale > 0.0)) throw ConfigError("mixture: center_scale must be > 0");
  if (!(min_separation_multiplier >= 0.0))
    throw ConfigError("mixture: min_separation_multiplier must be >= 0");
}

RawDataset generate_gaussian_mixture(const MixtureParams& params, std::uint64_t seed) {
  params.validate();
  Rng rng(seed);
  const double min_dist = params.min_separation_multiplier * params.noise_sigma;
  constexpr std::size_t kMaxAttempts = 10000;

  Tensor centers(params.classes, params.dim);
  for (std::size_t c = 0; c < params.classes; ++c) {
    std::size_t attempts = 0;
    for (;;) {
      if (++attempts > kMaxAttempts)
        throw Error("mixture: could not place class center " + std::to_string(c) +
                    " after 10000 attempts; centers too crowded for the requested separation");
      for (std::size_t k = 0; k < params.dim; ++k)
        centers(c, k) = rng.uniform(-params.center_scale, params.center_scale);
      bool ok = true;
      for (std::size_t p = 0; p < c && ok; ++p) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < params.dim; ++k) {
          const double diff = centers(c, k) - centers(p, k);
          d2 += diff * diff;
        }
        ok = std::sqrt(d2) >= min_dist;
      }
      if (ok) break;
    }
  }

  RawDataset out;
  out.x = Tensor(params.classes * params.per_class, params.dim);
  out.y.resize(params.classes * params.per_class);
  std::size_t row = 0;
  for (std::size_t c = 0; c < params.classes; ++c) {
    for (std::size_t s = 0; s < params.per_class; ++s, ++row) {
      for (std::size_t k = 0; k < params.dim; ++k)
        out.x(row, k) = centers(c, k) + params.noise_sigma * rng.normal();
      out.y[row] = static_cast<long>(c);
    }
  }
  return out;
}

void SplitSpec::validate() const {
  if (labeled < 1 || unlabeled < 1)
    throw ConfigError("split: need at least one labeled and one unlabeled class");
  if (labeled + unlabeled != total_classes)
    throw ConfigError("split: labeled + unlabeled must equal total_classes");
}

SplitDataset split_dataset(const RawDataset& raw, const SplitSpec& spec, double test_fraction) {
  spec.validate();
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("split: test_fraction must lie in (0, 1)");
  if (raw.class_count() != spec.total_classes)
    throw ConfigError("split: dataset has " + std::to_string(raw.class_count()) +
                      " classes, spec expects " + std::to_string(spec.total_classes));

  std::vector<std::vector<std::size_t>> by_class(spec.total_classes);
  for (std::size_t i = 0; i < raw.size(); ++i)
    by_class[static_cast<std::size_t>(raw.y[i])].push_back(i);

  std::vector<std::size_t> lab_tr, lab_te, ulb_tr, ulb_te;
  for (std::size_t c = 0; c < spec.total_classes; ++c) {
    const auto& idx = by_class[c];
    if (idx.size() < 2)
      throw Error("split: class " + std::to_string(c) + " has fewer than 2 samples");
    std::size_t n_test = static_cast<std::size_t>(
        std::floor(test_fraction * static_cast<double>(idx.size()) + 0.5));
    n_test = std::clamp<std::size_t>(n_test, 1, idx.size() - 1);
    const std::size_t n_train = idx.size() - n_test;
    auto& tr = c < spec.labeled ? lab_tr : ulb_tr;
    auto& te = c < spec.labeled ? lab_te : ulb_te;
    tr.insert(tr.end(), idx.begin(), idx.begin() + static_cast<long>(n_train));
    te.insert(te.end(), idx.begin() + static_cast<long>(n_train), idx.end());
  }

  auto gather = [&](const std::vector<std::size_t>& rows, long label_shift) {
    RawDataset part;
    part.x = Tensor(rows.size(), raw.dim());
    part.y.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t k = 0; k < raw.dim(); ++k) part.x(i, k) = raw.x(rows[i], k);
      part.y[i] = raw.y[rows[i]] - label_shift;
    }
    return part;
  };

  const long shift = static_cast<long>(spec.labeled);
  SplitDataset out;
  out.d = raw.dim();
  out.lab_train = gather(lab_tr, 0);
  out.lab_test = gather(lab_te, 0);
  out.unlab_test = gather(ulb_te, shift);
  RawDataset ulb_train = gather(ulb_tr, shift);
  out.unlab_train_x = std::move(ulb_train.x);
  out.unlab_train_labels = SealedLabelStore(std::move(ulb_train.y));
  return out;
}

void save_csv(const RawDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (std::size_t k = 0; k < data.dim(); ++k) out << "feat_" << k << ',';
  out << "label\n";
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t k = 0; k < data.dim(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", data.x(i, k));
      out << buf << ',';
    }
    out << data.y[i] << '\n';
  }
  if (!out) throw IoError("write failure on " + path);
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

[[noreturn]] void parse_fail(const std::string& path, std::size_t line_no, const std::string& what) {
  throw IoError(path + " line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

RawDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  if (header.size() < 2 || header.back() != "label")
    parse_fail(path, 1, "missing label column in header");
  const std::size_t d = header.size() - 1;

  std::vector<double> feats;
  std::vector<long> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != d + 1)
      parse_fail(path, line_no,
                 "expected " + std::to_string(d + 1) + " fields, got " +
                     std::to_string(fields.size()));
    for (std::size_t k = 0; k < d; ++k) {
      double v = 0.0;
      const auto& f = fields[k];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc{} || res.ptr != f.data() + f.size())
        parse_fail(path, line_no, "bad feature value '" + f + "'");
      feats.push_back(v);
    }
    long label = 0;
    const auto& f = fields[d];
    const auto res = std::from_chars(f.data(), f.data() + f.size(), label);
    if (res.ec != std::errc{} || res.ptr != f.data() + f.size() || label < 0)
      parse_fail(path, line_no, "bad label '" + f + "'");
    labels.push_back(label);
  }

  RawDataset out;
  out.x = Tensor(labels.size(), d);
  std::copy(feats.begin(), feats.end(), out.x.data());
  out.y = std::move(labels);
  return out;
}

}  // namespace ncdwf
