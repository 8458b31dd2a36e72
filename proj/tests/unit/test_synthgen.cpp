// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "fingerspell/datamodel.hpp"
#include "fingerspell/error.hpp"
#include "fingerspell/formats.hpp"
#include "fingerspell/metrics.hpp"
#include "fingerspell/synthgen.hpp"
#include "test_util.hpp"

using namespace fsr;

namespace {

SynthConfig fixed_durations(int letter, int transition) {
  SynthConfig c;
  c.min_letter_frames = c.max_letter_frames = letter;
  c.min_transition = c.max_transition = transition;
  return c;
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Synth, DurationArithmetic) {
  const auto cfg = fixed_durations(4, 2);
  const auto s = generate_sample("abc", cfg, 1);
  EXPECT_EQ(s.keypoints.length(), 3 * 4 + 2 * 2);
  EXPECT_EQ(s.frames.length(), 16);
  EXPECT_EQ(s.frame_letters.size(), 16u);
  EXPECT_EQ(s.label, cfg.alphabet().encode("abc"));
}

TEST(Synth, SingleLetterHasNoTransition) {
  const auto cfg = fixed_durations(5, 3);
  const auto s = generate_sample("d", cfg, 2);
  EXPECT_EQ(s.keypoints.length(), 5);
  for (const auto l : s.frame_letters) EXPECT_EQ(l, 4);
}

TEST(Synth, Deterministic) {
  SynthConfig cfg;
  cfg.sigma = 0.0;
  const auto a = generate_sample("face", cfg, 9), b = generate_sample("face", cfg, 9);
  EXPECT_TRUE(fsr::testing::bitwise_equal(a.keypoints.coords, b.keypoints.coords));
  EXPECT_TRUE(fsr::testing::bitwise_equal(a.frames.frames, b.frames.frames));
  cfg.sigma = 0.01;
  const auto c = generate_sample("face", cfg, 9), d = generate_sample("face", cfg, 9);
  EXPECT_TRUE(fsr::testing::bitwise_equal(c.keypoints.coords, d.keypoints.coords));
  const auto e = generate_sample("face", cfg, 10);
  EXPECT_FALSE(fsr::testing::bitwise_equal(c.keypoints.coords, e.keypoints.coords));
}

TEST(Synth, UnknownLetterThrows) {
  SynthConfig cfg;
  EXPECT_THROW(generate_sample("abz", cfg, 1), DataError);
}

TEST(Synth, ShapesAndRendering) {
  SynthConfig cfg;
  const auto s = generate_sample("ab", cfg, 3);
  EXPECT_EQ(s.keypoints.keypoints(), cfg.layout.total());
  EXPECT_EQ(s.frames.frames.shape(), (Shape{s.frames.length(), 3, cfg.image_size, cfg.image_size}));
  double lit = 0;
  for (int64_t i = 0; i < s.frames.frames.size(); ++i) {
    EXPECT_GE(s.frames.frames[i], 0.0);
    EXPECT_LE(s.frames.frames[i], 1.0);
    lit += s.frames.frames[i];
  }
  EXPECT_GT(lit, 0.0);
}

TEST(Synth, PrototypesAreSeparated) {
  for (const double sigma : {0.0, 0.005, 0.02}) {
    SynthConfig cfg;
    cfg.sigma = sigma;
    const auto p = make_prototypes(cfg);
    ASSERT_EQ(p.letters.size(), 6u);
    EXPECT_GE(p.min_separation, 5 * sigma);
    EXPECT_GT(p.min_separation, 0.0);
    for (const auto& l : p.letters)
      for (int64_t k = 0; k < l.dim(0); ++k)
        for (int64_t c = 0; c < 2; ++c) {
          EXPECT_GE(l[k * 3 + c], 0.2);
          EXPECT_LE(l[k * 3 + c], 0.8);
        }
  }
}

TEST(Synth, PrototypeClassifierIsExactWithoutNoise) {
  SynthConfig cfg;
  cfg.sigma = 0.0;
  const auto protos = make_prototypes(cfg);
  const auto words = sample_words(cfg, 100);
  std::vector<LabelPair> pairs;
  for (size_t i = 0; i < words.size(); ++i) {
    const auto s = generate_sample(words[i], cfg, protos, i);
    pairs.emplace_back(s.label, classify_by_prototype(s.keypoints, protos, protos.min_separation / 2));
  }
  EXPECT_EQ(corpus_accuracy(pairs), 1.0);
}

TEST(Synth, Vocabulary) {
  SynthConfig cfg;
  EXPECT_EQ(vocabulary_size(cfg), 36.0 + 216.0 + 1296.0 + 7776.0);
  const auto words = sample_words(cfg, 350);
  EXPECT_EQ(std::set<std::string>(words.begin(), words.end()).size(), 350u);
  for (const auto& w : words) {
    EXPECT_GE(w.size(), 2u);
    EXPECT_LE(w.size(), 5u);
    for (const char c : w) EXPECT_TRUE(c >= 'a' && c <= 'f');
  }
  EXPECT_EQ(words, sample_words(cfg, 350));
}

TEST(Synth, InvalidConfigs) {
  SynthConfig cfg;
  cfg.sigma = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.min_word = 4;
  cfg.max_word = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.alphabet_size = 27;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Synth, DatasetSplitsAreDisjointAndReproducible) {
  fsr::testing::TempDir dir("synth");
  SynthConfig cfg;
  cfg.max_word = 3;
  const auto a = generate_dataset(cfg, 20, 5, dir.path() / "a", 4);
  const auto b = generate_dataset(cfg, 20, 5, dir.path() / "b", 4);
  const Alphabet alpha = cfg.alphabet();
  const auto train = load_manifest(a.train, alpha), val = load_manifest(a.val, alpha), test = load_manifest(a.test, alpha);
  EXPECT_EQ(train.size(), 20u);
  EXPECT_EQ(val.size(), 4u);
  EXPECT_EQ(test.size(), 5u);
  std::set<std::vector<int32_t>> seen;
  for (const auto* split : {&train, &val, &test})
    for (const auto& e : *split) EXPECT_TRUE(seen.insert(e.label.ids).second);
  for (const char* name : {"train.tsv", "val.tsv", "test.tsv"})
    EXPECT_EQ(file_bytes(dir.path() / "a" / name), file_bytes(dir.path() / "b" / name));
  const auto clip = read_keypoint_clip(train[0].clip_path);
  EXPECT_EQ(clip.keypoints(), cfg.layout.total());
  const auto rel = std::filesystem::relative(train[0].clip_path, dir.path() / "a");
  EXPECT_EQ(file_bytes(train[0].clip_path), file_bytes(dir.path() / "b" / rel));
}

TEST(Synth, TooSmallVocabularyThrows) {
  fsr::testing::TempDir dir("synth_small");
  SynthConfig cfg;
  cfg.alphabet_size = 2;
  cfg.min_word = cfg.max_word = 2;  // 4 words
  EXPECT_THROW(generate_dataset(cfg, 3, 2, dir.path()), ConfigError);
}
