#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ncdwf/data.hpp"
#include "ncdwf/models.hpp"
#include "ncdwf/trainer.hpp"

namespace ncdwf {

// Synthetic data recipe; per-class counts are split into train and test up
// front so the benchmark presets can state both directly.
struct GeneratorSpec {
  std::size_t classes = 10;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 50;
  std::size_t dim = 64;
  double center_scale = 10.0;
  double noise_sigma = 1.0;
  double min_separation_multiplier = 8.0;

  void validate() const;
};

// Complete declarative description of one experiment. Everything a run
// reads comes from here; command-line flags only override these fields.
struct RunConfig {
  GeneratorSpec data;
  std::string dataset_dir;  // when set, CSVs are loaded instead of generated
  std::size_t labeled_classes = 5;
  std::size_t unlabeled_classes = 5;

  std::size_t latent_dim = 32;
  std::size_t fe_hidden = 2;
  std::size_t head_hidden = 0;
  std::size_t mean_net_hidden = 64;
  std::size_t kci_hidden = 128;

  PhaseConfig phase1;
  PhaseConfig phase2;

  std::vector<double> tau_list = {0.8, 0.85, 0.9, 0.95, 0.99, 0.999};
  double predictions_tau = 0.99;  // operating point for predictions.csv

  std::uint64_t seed = 0;
  std::string out_dir = "runs/out";

  void validate() const;
  ModelConfig model_config() const;

  // Fixed-order key/value dump; two configs are the same experiment exactly
  // when these texts match (out_dir deliberately excluded).
  std::string canonical_text() const;
  std::uint64_t config_hash() const;  // FNV-1a over canonical_text()
};

// synth-10-5-5 (default), synth-100-20-80-style, paper-scale
RunConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

// Flat INI-style text: [section] headers, key = value lines, # comments.
// Unknown sections or keys are rejected with the offending line number.
RunConfig parse_config_text(const std::string& text, const RunConfig& base = RunConfig());
RunConfig load_config_file(const std::string& path, const RunConfig& base = RunConfig());

// Materializes the experiment's data: generates the mixture and splits it,
// or loads the four CSVs from dataset_dir.
SplitDataset load_or_generate(const RunConfig& cfg);

// File names used by `generate` and expected by dataset_dir loading.
extern const char* const kLabTrainCsv;
extern const char* const kLabTestCsv;
extern const char* const kUnlabTrainCsv;
extern const char* const kUnlabTestCsv;

}  // namespace ncdwf
