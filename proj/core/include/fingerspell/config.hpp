// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fingerspell/model.hpp"
#include "fingerspell/optim.hpp"
#include "fingerspell/preprocessing.hpp"
#include "fingerspell/synthgen.hpp"

namespace fsr {

struct TrainConfig {
  AdamWOptions adamw;
  double gamma = 0.1;
  std::vector<int> milestones{20, 40};
  int epochs = 60;
  int batch_clips = 4;
  uint64_t seed = 1;
  double grad_clip = 0.0;  // global-norm limit; 0 disables clipping
  /// Stop once validation accuracy reaches this value; 0 disables.
  double stop_at_accuracy = 0.0;
  /// Group clips of similar length into the same batch.
  bool bucket_by_length = false;

  void validate() const;
};

struct AugmentConfig {
  bool enabled = true;
  AugmentSpec spec;
};

struct SynthRunConfig {
  SynthConfig data;
  size_t n_train = 300;
  size_t n_val = 50;
  size_t n_test = 50;
};

/// Everything a run needs; serialised as flat `key = value` text.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  AugmentConfig augment;
  SynthRunConfig synth;
};

/// Defaults for a modality and preset ("tiny" or "full"): encoder sizes,
/// epochs and learning-rate milestones.
RunConfig default_config(Modality modality, const std::string& preset);

/// Parses `key = value` lines; blank lines and lines starting with '#' are
/// ignored. model.modality and model.preset select the defaults, every other
/// key overrides one field. Unknown or repeated keys throw ConfigError.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Every key, sorted, one `key = value` per line; parse_config inverts it.
std::string canonical_config(const RunConfig& cfg);

/// All recognised keys, sorted.
std::vector<std::string> config_keys();

}  // namespace fsr
