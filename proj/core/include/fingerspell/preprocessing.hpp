// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "fingerspell/datamodel.hpp"

namespace fsr {

class Rng;

/// Replace NaN coordinates with zero; everything else is untouched.
KeypointClip fill_missing(const KeypointClip& clip);

/// Per-channel (x - mean) / std on frames.
FrameClip normalize_frames(const FrameClip& clip, const std::array<double, 3>& mean,
                           const std::array<double, 3>& std);

/// Frame count after resampling: max(1, round(T * rate)).
int64_t resampled_length(int64_t length, double rate);
/// Source frame index of each output frame: t -> floor(t * T / T').
std::vector<int64_t> resample_indices(int64_t length, double rate);

/// Nearest-neighbour temporal resampling; rate must lie in [0.5, 1.5].
KeypointClip resample(const KeypointClip& clip, double rate);
FrameClip resample(const FrameClip& clip, double rate);

struct AffineParams {
  double scale = 1.0;
  double shear = 0.0;   // x += shear * y
  double shift_x = 0.0;
  double shift_y = 0.0;
  double degrees = 0.0;  // counter-clockwise rotation
};

/// Mean (x, y) over all present keypoints of the clip; (0.5, 0.5) if none.
std::array<double, 2> present_centroid(const KeypointClip& clip);

/// p' = c + R S_h s (p - c) + shift on (x, y) about the present-keypoint
/// centroid c. z and absent keypoints are left exactly as they are.
KeypointClip spatial_affine(const KeypointClip& clip, const AffineParams& params);

/// Zero `count` consecutive frames starting at `start`.
KeypointClip temporal_mask(const KeypointClip& clip, int64_t start, int64_t count);
/// Window length for a mask of relative `size`: round(size * T).
int64_t temporal_mask_length(int64_t length, double size);

struct MaskBox {
  double x0, y0, x1, y1;
};

/// Zero every present keypoint whose (x, y) lies inside the box, per frame.
KeypointClip spatial_mask(const KeypointClip& clip, const MaskBox& box);
/// Box whose sides are `size` times the present-keypoint bounding box
/// ("relative" mode), placed uniformly inside it.
MaskBox sample_mask_box(const KeypointClip& clip, double size, Rng& rng);

/// x -> 1 - x for present keypoints, with left/right groups swapped.
KeypointClip horizontal_flip(const KeypointClip& clip);
/// Column mirror of every frame.
FrameClip horizontal_flip(const FrameClip& clip);

/// Bilinear rotation of every frame about its centre, zero fill outside.
FrameClip rotate_frames(const FrameClip& clip, double degrees);

struct AugmentSpec {
  struct Range {
    double lo, hi;
  };
  double resample_p = 0.8;
  Range resample_rate{0.5, 1.5};
  double affine_p = 0.75;
  Range affine_scale{0.8, 1.2};
  Range affine_shear{-0.15, 0.15};
  Range affine_shift{-0.1, 0.1};
  Range affine_degrees{-30.0, 30.0};
  double temporal_mask_p = 0.5;
  Range temporal_mask_size{0.2, 0.4};
  double spatial_mask_p = 0.5;
  Range spatial_mask_size{0.05, 0.1};
  double flip_p = 0.5;
  double rotation_p = 0.5;
  Range rotation_degrees{-10.0, 10.0};

  /// Throws ConfigError on probabilities outside [0, 1] or reversed ranges.
  void validate() const;
  static AugmentSpec disabled();
};

/// One training sample: either modality may be absent.
struct Sample {
  std::optional<KeypointClip> keypoints;
  std::optional<FrameClip> frames;
  LabelSequence label;
};

/// Applies the augmentation table in order (resample, affine, temporal mask,
/// spatial mask, flip, rotation), each with its probability. Modality gating:
/// keypoint-only samples never rotate; frame-only samples only flip and
/// rotate; samples with both modalities only resample, flip and rotate, with
/// one shared draw so the streams stay frame-aligned.
Sample apply_pipeline(const Sample& sample, const AugmentSpec& spec, uint64_t seed);

}  // namespace fsr
