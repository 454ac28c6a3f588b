#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ncdwf/tensor.hpp"

namespace ncdwf {

struct RawDataset {
  Tensor x;             // n x d feature rows
  std::vector<long> y;  // class ids, 0-based

  std::size_t size() const { return y.size(); }
  std::size_t dim() const { return x.cols(); }
  std::size_t class_count() const;
};

struct MixtureParams {
  std::size_t classes = 10;
  std::size_t per_class = 250;
  std::size_t dim = 64;
  double center_scale = 10.0;
  double noise_sigma = 1.0;
  // centers are redrawn until pairwise distance >= multiplier * noise_sigma
  double min_separation_multiplier = 4.0;

  void validate() const;
};

// Class centers drawn uniformly in [-center_scale, center_scale]^dim with a
// rejection pass for separation; samples are center + N(0, sigma^2 I).
// Rows come out grouped by class. Fully determined by the seed.
RawDataset generate_gaussian_mixture(const MixtureParams& params, std::uint64_t seed);

struct SplitSpec {
  std::size_t total_classes = 0;
  std::size_t labeled = 0;    // first `labeled` class ids stay supervised
  std::size_t unlabeled = 0;  // remaining ids become the discovery pool

  void validate() const;
};

// Ground-truth cluster ids for the discovery pool. Training code never sees
// these; evaluation reads them through eval_labels().
class SealedLabelStore {
 public:
  SealedLabelStore() = default;
  explicit SealedLabelStore(std::vector<long> y) : y_(std::move(y)) {}

  std::size_t size() const { return y_.size(); }
  const std::vector<long>& eval_labels() const { return y_; }

 private:
  std::vector<long> y_;
};

struct SplitDataset {
  std::size_t d = 0;
  RawDataset lab_train;            // labels 0..M-1
  Tensor unlab_train_x;            // no labels attached
  SealedLabelStore unlab_train_labels;  // cluster ids 0..N-1, evaluation only
  RawDataset lab_test;             // labels 0..M-1
  RawDataset unlab_test;           // cluster ids 0..N-1
};

// Stratified per-class train/test split. Per class, the trailing
// round(test_fraction * count) rows become test data. Labels of the
// discovery classes are remapped to 0..N-1 and, for the training rows,
// moved into the sealed store.
SplitDataset split_dataset(const RawDataset& raw, const SplitSpec& spec, double test_fraction);

// Header `feat_0,...,feat_{d-1},label`, full-precision decimal floats.
void save_csv(const RawDataset& data, const std::string& path);
RawDataset load_csv(const std::string& path);

}  // namespace ncdwf
