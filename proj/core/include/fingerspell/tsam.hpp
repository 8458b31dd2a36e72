// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fingerspell/datamodel.hpp"

namespace fsr {

class ParamSet;
class Rng;

/// tsam: per-sequence shifts on the packed batch, limited by the shift counter.
/// tsm: fixed-length baseline; every clip is zero-padded to the longest one and
///      shifted in every block.
/// none: plain 2D backbone without temporal shifts.
enum class ShiftType { tsam, tsm, none };
enum class Reduction { avgpool, flatten };
enum class Activation { relu, silu };

ShiftType parse_shift_type(const std::string& s);
Reduction parse_reduction(const std::string& s);
Activation parse_activation(const std::string& s);
std::string to_string(ShiftType v);
std::string to_string(Reduction v);
std::string to_string(Activation v);

struct TsamBlock {
  int64_t channels;
  int64_t stride;  // spatial stride of the first conv
};

struct TsamConfig {
  int64_t in_channels = 3;
  int64_t input_size = 32;  // H = W; only needed by the flatten reduction
  int64_t stem_channels = 8;
  int64_t stem_stride = 2;
  std::vector<TsamBlock> blocks{{8, 1}, {16, 2}, {16, 1}, {32, 2}};
  double shift_fraction = 0.125;
  bool count_shift = true;
  ShiftType shift_type = ShiftType::tsam;
  Reduction reduction = Reduction::avgpool;
  Activation activation = Activation::silu;
  int64_t temporal_kernel = 3;
  int64_t feature_dim = 64;

  int64_t num_blocks() const { return static_cast<int64_t>(blocks.size()); }
  /// (channels, height, width) after the last block.
  std::array<int64_t, 3> backbone_output() const;
  /// Throws ConfigError on an invalid combination.
  void validate() const;

  /// Four single-stage blocks for CPU-scale runs.
  static TsamConfig tiny(int64_t feature_dim);
  /// Basic-block layout of a 34-layer residual network (3, 4, 6, 3 blocks).
  static TsamConfig resnet34(int64_t feature_dim, int64_t input_size);
};

/// Shift bookkeeping of one forward pass.
struct TsamTrace {
  /// shifts[i] = number of blocks that shifted sequence i.
  std::vector<int64_t> shifts;
};

void add_tsam_params(ParamSet& params, const TsamConfig& cfg, Rng& rng, const std::string& prefix = "tsam");

/// Encodes a packed batch into one unpadded (L_i, F) sequence per clip.
std::vector<Var> tsam_forward(const Var& frames, const std::vector<int64_t>& lengths, const TsamConfig& cfg,
                              const ParamSet& params, TsamTrace* trace = nullptr,
                              const std::string& prefix = "tsam");
std::vector<Var> tsam_forward(const PackedFrameBatch& batch, const TsamConfig& cfg, const ParamSet& params,
                              TsamTrace* trace = nullptr, const std::string& prefix = "tsam");

}  // namespace fsr
