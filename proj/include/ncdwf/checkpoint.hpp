#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ncdwf/models.hpp"

namespace ncdwf {

// Raw parsed checkpoint: header fields plus tensors in file order.
struct Checkpoint {
  std::size_t M = 0, N = 0, d = 0, h = 0;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

struct RestoredState {
  NcdwfModel model;
  VariationalHead vhead;
  KciNet kci;
  std::uint64_t seed = 0;
};

// Versioned structured text, bit-exact round trip (17 significant digits).
void save_checkpoint(const NcdwfModel& model, const VariationalHead& vhead,
                     const KciNet& kci, std::uint64_t seed, const std::string& path);

Checkpoint load_checkpoint_raw(const std::string& path);

// Parse + reassemble the full model family from a checkpoint file.
RestoredState restore_checkpoint(const std::string& path);

}  // namespace ncdwf
