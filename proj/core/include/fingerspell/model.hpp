// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fingerspell/decoder.hpp"
#include "fingerspell/params.hpp"
#include "fingerspell/preprocessing.hpp"
#include "fingerspell/tpe.hpp"
#include "fingerspell/tsam.hpp"

namespace fsr {

enum class Modality { rgb, kp, rgb_kp };
enum class Fusion { sum, concat, product, weighted };

Modality parse_modality(const std::string& s);
Fusion parse_fusion(const std::string& s);
std::string to_string(Modality m);
std::string to_string(Fusion f);

struct InputConfig {
  int64_t size = 224;  // frames are centre-cropped to size x size
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};
};

struct ModelConfig {
  Modality modality = Modality::kp;
  std::string preset = "full";
  std::string alphabet = "abcdef";
  int64_t feature_dim = 512;
  Fusion fusion = Fusion::sum;
  std::array<double, 2> fusion_weights{0.5, 0.5};  // (rgb, kp) for weighted fusion
  TsamConfig tsam;
  TpeConfig tpe;
  DecoderConfig decoder;
  KeypointLayout layout;
  InputConfig input;

  bool uses_rgb() const { return modality != Modality::kp; }
  bool uses_kp() const { return modality != Modality::rgb; }
  /// Width of the features entering the decoder head.
  int64_t decoder_input_dim() const;
  Alphabet make_alphabet() const { return Alphabet::from_utf8(alphabet); }
  /// Copies shared sizes into the encoder configs and checks consistency.
  /// Throws ConfigError.
  void finalize();
  void validate() const;
};

/// Combine time-aligned (T, F) streams. Throws ShapeError on mismatch.
Var fuse(const Var& rgb, const Var& kp, Fusion mode, const std::array<double, 2>& weights = {0.5, 0.5});

/// Missing-value fill and centre crop; run before augmentation.
Sample sanitize_sample(const Sample& sample, const ModelConfig& cfg);
/// Per-channel frame normalisation; run after augmentation.
Sample normalize_sample(const Sample& sample, const ModelConfig& cfg);

class Model {
 public:
  /// Fresh parameters drawn from `seed`.
  Model(ModelConfig cfg, uint64_t seed);
  /// Parameters taken from a checkpoint; names and shapes must match.
  Model(ModelConfig cfg, ParamSet params);

  const ModelConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  /// Fused per-clip features (L_i, decoder_input_dim).
  std::vector<Var> encode(const std::vector<Sample>& batch) const;
  /// Per-clip log-probabilities (L_i, |A| + 1).
  std::vector<Var> forward(const std::vector<Sample>& batch) const;

 private:
  ModelConfig cfg_;
  ParamSet params_;
};

/// Registers every parameter of the configured model.
void add_model_params(ParamSet& params, const ModelConfig& cfg, uint64_t seed);

}  // namespace fsr
