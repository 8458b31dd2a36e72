// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fingerspell/datamodel.hpp"

namespace fsr {

class ParamSet;
class Rng;

struct TpeConfig {
  int64_t c1 = 16;
  int64_t c2 = 32;
  int64_t tube_kernel = 5;
  int64_t tube_stride = 3;
  int64_t feature_dim = 64;
  int conv_modules = 1;
  int64_t conv_module_kernel = 7;
  int64_t conv_module_expansion = 2;
  /// Keypoint groups fed to the encoder, in order ("hands", "pose", ...).
  /// Empty means every keypoint.
  std::vector<std::string> groups;

  /// Extent of the channel axis after the tube convolution.
  int64_t tube_extent() const;
  /// Keypoints actually consumed under `layout`.
  std::vector<int64_t> keypoint_indices(const KeypointLayout& layout) const;
  void validate() const;
};

void add_tpe_params(ParamSet& params, const TpeConfig& cfg, const KeypointLayout& layout, Rng& rng,
                    const std::string& prefix = "tpe");

/// Padded (bs, N, F) features from a padded keypoint batch (bs, 3, N, K).
/// Frames at or beyond lengths[i] are zero after every stage.
Var tpe_forward(const Var& coords, const std::vector<int64_t>& lengths, const TpeConfig& cfg,
                const KeypointLayout& layout, const ParamSet& params, const std::string& prefix = "tpe");
Var tpe_forward(const PaddedKeypointBatch& batch, const TpeConfig& cfg, const KeypointLayout& layout,
                const ParamSet& params, const std::string& prefix = "tpe");

/// Parameters of one convolution module over width `dim`.
void add_conv_module_params(ParamSet& params, const std::string& name, int64_t dim, int64_t kernel,
                            int64_t expansion, Rng& rng);

/// Normalise, expand with a gated linear unit, depthwise temporal conv,
/// normalise, swish, project, add the input back. (T, F) -> (T, F).
Var conv_module(const Var& x, const ParamSet& params, const std::string& name);

/// Full keypoint encoder: tpe_forward, then `conv_modules` convolution
/// modules on each clip's true frames. One (L_i, F) sequence per clip.
std::vector<Var> tpe_encode(const PaddedKeypointBatch& batch, const TpeConfig& cfg, const KeypointLayout& layout,
                            const ParamSet& params, const std::string& prefix = "tpe");

}  // namespace fsr
