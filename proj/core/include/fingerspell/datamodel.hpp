// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fingerspell/autograd.hpp"
#include "fingerspell/tensor.hpp"

namespace fsr {

/// Alphabet indices of one transcription. Never contains the blank (0).
struct LabelSequence {
  std::vector<int32_t> ids;

  size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  friend bool operator==(const LabelSequence&, const LabelSequence&) = default;
};

/// Ordered set of symbols. Index 0 is the CTC blank; symbol i lives at i + 1.
class Alphabet {
 public:
  static constexpr int32_t kBlank = 0;

  Alphabet() = default;
  explicit Alphabet(std::u32string symbols);
  static Alphabet from_utf8(std::string_view symbols);

  const std::u32string& symbols() const { return symbols_; }
  std::string to_utf8() const;
  /// Number of letters, blank excluded.
  int32_t size() const { return static_cast<int32_t>(symbols_.size()); }
  /// Letters plus blank.
  int32_t num_classes() const { return size() + 1; }

  /// Index in [1, size()], or -1 for an unknown character.
  int32_t index_of(char32_t c) const;
  char32_t symbol(int32_t index) const;

  /// Throws DataError naming the first character outside the alphabet.
  LabelSequence encode(std::string_view utf8) const;
  std::string decode(const LabelSequence& label) const;
  bool valid(const LabelSequence& label) const;

  friend bool operator==(const Alphabet& a, const Alphabet& b) { return a.symbols_ == b.symbols_; }

 private:
  std::u32string symbols_;
};

/// Fixed keypoint ordering: [left_hand | right_hand | pose]. `pose_pairs`
/// lists pose-local indices that trade places under a horizontal flip.
struct KeypointLayout {
  int64_t left_hand = 21;
  int64_t right_hand = 21;
  int64_t pose = 12;
  std::vector<std::pair<int64_t, int64_t>> pose_pairs{{0, 1}, {2, 3}, {4, 5}, {6, 7}, {8, 9}, {10, 11}};

  int64_t total() const { return left_hand + right_hand + pose; }
  int64_t left_begin() const { return 0; }
  int64_t right_begin() const { return left_hand; }
  int64_t pose_begin() const { return left_hand + right_hand; }

  /// Global indices of a named group: "left_hand", "right_hand", "hands" or "pose".
  std::vector<int64_t> group_indices(std::string_view group) const;
  /// perm such that flipped[k] = original[perm[k]]; an involution.
  std::vector<int64_t> flip_permutation() const;
  /// Throws ConfigError when sizes or pairs are inconsistent.
  void validate() const;

  friend bool operator==(const KeypointLayout&, const KeypointLayout&) = default;
};

/// Video frames (T, C, H, W).
struct FrameClip {
  Tensor frames;

  int64_t length() const { return frames.dim(0); }
  int64_t channels() const { return frames.dim(1); }
  int64_t height() const { return frames.dim(2); }
  int64_t width() const { return frames.dim(3); }
  /// Throws ShapeError unless rank 4 with T >= 1.
  void validate() const;
};

/// Per-frame keypoints (T, K, 3) with (x, y, z) on the last axis. Absent
/// keypoints are exactly (0, 0, 0); NaN marks missing values before cleaning.
struct KeypointClip {
  Tensor coords;
  KeypointLayout layout;

  int64_t length() const { return coords.dim(0); }
  int64_t keypoints() const { return coords.dim(1); }
  void validate() const;
};

/// Frames of several clips concatenated along the first axis, no padding.
struct PackedFrameBatch {
  Tensor frames;  // (bs, C, H, W)
  std::vector<int64_t> lengths;

  int64_t total_frames() const { return frames.dim(0); }
  /// First frame of each clip.
  std::vector<int64_t> offsets() const;
  /// Throws ShapeError if lengths do not sum to the frame count.
  void validate() const;
};

/// Keypoint clips zero-padded to the longest one, channel-first.
struct PaddedKeypointBatch {
  Tensor coords;  // (bs, 3, N, K)
  std::vector<int64_t> lengths;

  int64_t batch() const { return coords.dim(0); }
  int64_t max_length() const { return coords.dim(2); }
  int64_t keypoints() const { return coords.dim(3); }
};

/// Per-frame encoder output (T, F).
struct FeatureSequence {
  Var features;

  int64_t length() const { return features.dim(0); }
  int64_t width() const { return features.dim(1); }
};

PackedFrameBatch pack_batch(std::span<const FrameClip> clips);
/// Inverse of pack_batch for one clip.
FrameClip unpack_clip(const PackedFrameBatch& batch, size_t index);

PaddedKeypointBatch pad_keypoint_batch(std::span<const KeypointClip> clips);
/// Same as above, padded to at least `min_frames`.
PaddedKeypointBatch pad_keypoint_batch(std::span<const KeypointClip> clips, int64_t min_frames);

struct ManifestEntry {
  std::string sample_id;
  std::filesystem::path clip_path;  // resolved against the manifest directory
  std::string label_text;
  LabelSequence label;
};

/// Read a TAB-separated manifest (sample_id, relative path, label) in file
/// order. Throws DataError on malformed lines, unknown characters or missing
/// files.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path, const Alphabet& alphabet);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& base);

}  // namespace fsr
