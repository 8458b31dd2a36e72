// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fingerspell/datamodel.hpp"

namespace fsr {

struct SynthConfig {
  int alphabet_size = 6;
  int min_word = 2, max_word = 5;
  int min_letter_frames = 3, max_letter_frames = 8;
  int min_transition = 1, max_transition = 3;
  double sigma = 0.005;  // coordinate noise
  uint64_t seed = 7;
  int64_t image_size = 32;
  double disc_radius = 1.5;  // pixels
  KeypointLayout layout;

  /// The first `alphabet_size` lowercase letters.
  Alphabet alphabet() const;
  /// Throws ConfigError on empty ranges, negative noise or a too-large alphabet.
  void validate() const;
};

/// Per-letter right-hand configurations plus the rest pose between letters.
struct Prototypes {
  std::vector<Tensor> letters;  // index i holds letter i + 1, each (hand, 3)
  Tensor rest;                  // (hand, 3)
  Tensor pose;                  // (pose, 3), fixed for the whole dataset
  double min_separation = 0.0;  // smallest pairwise L2 distance of (x, y)
};

/// Seeded random points in [0.2, 0.8]^2, redrawn until every pair of
/// configurations is at least 5 sigma apart.
Prototypes make_prototypes(const SynthConfig& cfg);

struct SynthSample {
  KeypointClip keypoints;
  FrameClip frames;
  LabelSequence label;
  /// Letter shown in each frame (alphabet index) or 0 during a transition.
  std::vector<int32_t> frame_letters;
};

/// Fully determined by (word, cfg, seed). Each letter is held for a sampled
/// number of frames; consecutive letters are joined by a piecewise-linear
/// path through the rest pose. Throws DataError on a letter outside the
/// synthetic alphabet.
SynthSample generate_sample(const std::string& word, const SynthConfig& cfg, uint64_t seed);
SynthSample generate_sample(const std::string& word, const SynthConfig& cfg, const Prototypes& protos, uint64_t seed);

/// Draws discs for the right-hand keypoints, one colour per finger, on a
/// black (3, S, S) canvas per frame.
FrameClip render_frames(const KeypointClip& clip, const SynthConfig& cfg);

/// Nearest-prototype frame labels (blank when no prototype is within `tau`),
/// then CTC-style collapse.
LabelSequence classify_by_prototype(const KeypointClip& clip, const Prototypes& protos, double tau);

/// Number of distinct words with lengths in [min_word, max_word].
double vocabulary_size(const SynthConfig& cfg);
/// `count` distinct random words, deterministic in cfg.seed.
std::vector<std::string> sample_words(const SynthConfig& cfg, size_t count);

struct SynthSplits {
  std::filesystem::path train, val, test;  // val is empty when n_val = 0
};

/// Writes clips/<id>.kpc, clips/<id>.frc and train.tsv / val.tsv / test.tsv
/// under `out`. Word lists of the splits are disjoint; throws ConfigError
/// when the vocabulary is too small.
SynthSplits generate_dataset(const SynthConfig& cfg, size_t n_train, size_t n_test, const std::filesystem::path& out,
                             size_t n_val = 0);

}  // namespace fsr
