// SPDX-License-Identifier: Apache-2.0
#include "fingerspell/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "fingerspell/decoder.hpp"
#include "fingerspell/error.hpp"
#include "fingerspell/formats.hpp"
#include "fingerspell/random.hpp"

namespace fsr {
namespace {

double xy_distance(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (int64_t i = 0; i < a.dim(0); ++i)
    for (int64_t c = 0; c < 2; ++c) {
      const double d = a[i * 3 + c] - b[i * 3 + c];
      s += d * d;
    }
  return std::sqrt(s);
}

Tensor random_hand(int64_t points, Rng& rng) {
  Tensor h({points, 3});
  for (int64_t i = 0; i < points; ++i) {
    h[i * 3 + 0] = rng.uniform(0.2, 0.8);
    h[i * 3 + 1] = rng.uniform(0.2, 0.8);
    h[i * 3 + 2] = rng.uniform(-0.1, 0.1);
  }
  return h;
}

Tensor lerp(const Tensor& a, const Tensor& b, double u) {
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = (1.0 - u) * a[i] + u * b[i];
  return out;
}

// RGB per finger: wrist, thumb, index, middle, ring, pinky.
constexpr double kFingerColours[6][3] = {{1.0, 1.0, 1.0}, {1.0, 0.2, 0.2}, {0.2, 1.0, 0.2},
                                         {0.2, 0.4, 1.0}, {1.0, 1.0, 0.2}, {1.0, 0.2, 1.0}};

int finger_of(int64_t point) { return point == 0 ? 0 : static_cast<int>(1 + (point - 1) / 4 % 5); }

}  // namespace

Alphabet SynthConfig::alphabet() const {
  std::u32string s;
  for (int i = 0; i < alphabet_size; ++i) s.push_back(static_cast<char32_t>(U'a' + i));
  return Alphabet(s);
}

void SynthConfig::validate() const {
  if (alphabet_size < 1 || alphabet_size > 26) throw ConfigError("synth.alphabet_size must lie in [1, 26]");
  if (min_word < 1 || min_word > max_word) throw ConfigError("synth word length range is empty");
  if (min_letter_frames < 1 || min_letter_frames > max_letter_frames) {
    throw ConfigError("synth frames-per-letter range is empty");
  }
  if (min_transition < 0 || min_transition > max_transition) throw ConfigError("synth transition range is empty");
  if (!(sigma >= 0.0)) throw ConfigError("synth.sigma must be >= 0");
  if (image_size < 4 || disc_radius <= 0.0) throw ConfigError("synth image size / disc radius invalid");
  layout.validate();
  if (layout.right_hand < 1) throw ConfigError("synthetic data needs a right-hand group");
}

Prototypes make_prototypes(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, "prototypes"));
  const double min_sep = 5.0 * cfg.sigma;
  Prototypes p;
  std::vector<Tensor> all;  // letters then rest
  for (int i = 0; i <= cfg.alphabet_size; ++i) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == 10000) throw ConfigError("cannot place prototypes 5 sigma apart; lower synth.sigma");
      Tensor cand = random_hand(cfg.layout.right_hand, rng);
      const bool ok = std::all_of(all.begin(), all.end(), [&](const Tensor& o) { return xy_distance(cand, o) >= min_sep; });
      if (ok) {
        all.push_back(std::move(cand));
        break;
      }
    }
  }
  p.rest = all.back();
  all.pop_back();
  p.letters = std::move(all);
  p.min_separation = std::numeric_limits<double>::infinity();
  for (size_t a = 0; a < p.letters.size(); ++a) {
    p.min_separation = std::min(p.min_separation, xy_distance(p.letters[a], p.rest));
    for (size_t b = a + 1; b < p.letters.size(); ++b)
      p.min_separation = std::min(p.min_separation, xy_distance(p.letters[a], p.letters[b]));
  }
  // upper-body pose: mirrored (left, right) pairs
  p.pose = Tensor({cfg.layout.pose, 3});
  for (int64_t i = 0; i < cfg.layout.pose; ++i) {
    const int64_t pair = i / 2;
    const double dx = 0.15 + 0.05 * static_cast<double>(pair % 3);
    const double y = 0.55 + 0.07 * static_cast<double>(pair);
    p.pose[i * 3 + 0] = i % 2 == 0 ? 0.5 + dx : 0.5 - dx;
    p.pose[i * 3 + 1] = std::min(y, 0.95);
    p.pose[i * 3 + 2] = 0.0;
  }
  return p;
}

SynthSample generate_sample(const std::string& word, const SynthConfig& cfg, uint64_t seed) {
  return generate_sample(word, cfg, make_prototypes(cfg), seed);
}

SynthSample generate_sample(const std::string& word, const SynthConfig& cfg, const Prototypes& protos, uint64_t seed) {
  const Alphabet alphabet = cfg.alphabet();
  SynthSample s;
  s.label = alphabet.encode(word);
  if (s.label.empty()) throw DataError("synthetic word must not be empty");
  Rng rng(seed);

  // hand pose per frame, before noise
  std::vector<Tensor> hand;
  for (size_t i = 0; i < s.label.size(); ++i) {
    const int32_t id = s.label.ids[i];
    if (i > 0) {
      const auto m = rng.integer(cfg.min_transition, cfg.max_transition);
      const Tensor& from = protos.letters[static_cast<size_t>(s.label.ids[i - 1] - 1)];
      const Tensor& to = protos.letters[static_cast<size_t>(id - 1)];
      for (int64_t j = 0; j < m; ++j) {
        const double u = static_cast<double>(j + 1) / static_cast<double>(m + 1);
        hand.push_back(u < 0.5 ? lerp(from, protos.rest, 2.0 * u) : lerp(protos.rest, to, 2.0 * u - 1.0));
        s.frame_letters.push_back(0);
      }
    }
    const auto hold = rng.integer(cfg.min_letter_frames, cfg.max_letter_frames);
    for (int64_t j = 0; j < hold; ++j) {
      hand.push_back(protos.letters[static_cast<size_t>(id - 1)]);
      s.frame_letters.push_back(id);
    }
  }

  const auto& lay = cfg.layout;
  const auto t_len = static_cast<int64_t>(hand.size());
  s.keypoints = KeypointClip{Tensor({t_len, lay.total(), 3}), lay};
  auto noisy = [&](double v) { return static_cast<double>(static_cast<float>(v + cfg.sigma * rng.normal())); };
  for (int64_t t = 0; t < t_len; ++t) {
    double* frame = s.keypoints.coords.data() + t * lay.total() * 3;
    for (int64_t i = 0; i < lay.right_hand; ++i)
      for (int64_t c = 0; c < 3; ++c) frame[(lay.right_begin() + i) * 3 + c] = noisy(hand[t][i * 3 + c]);
    for (int64_t i = 0; i < lay.pose; ++i)
      for (int64_t c = 0; c < 3; ++c) frame[(lay.pose_begin() + i) * 3 + c] = noisy(protos.pose[i * 3 + c]);
  }
  s.frames = render_frames(s.keypoints, cfg);
  return s;
}

FrameClip render_frames(const KeypointClip& clip, const SynthConfig& cfg) {
  clip.validate();
  const int64_t size = cfg.image_size, t_len = clip.length(), k = clip.keypoints();
  const auto& lay = clip.layout;
  FrameClip out{Tensor({t_len, 3, size, size})};
  const double r = cfg.disc_radius;
  for (int64_t t = 0; t < t_len; ++t) {
    double* img = out.frames.data() + t * 3 * size * size;
    for (int64_t i = 0; i < lay.right_hand; ++i) {
      const double* p = clip.coords.data() + (t * k + lay.right_begin() + i) * 3;
      if (p[0] == 0.0 && p[1] == 0.0 && p[2] == 0.0) continue;
      const double cx = p[0] * static_cast<double>(size) - 0.5, cy = p[1] * static_cast<double>(size) - 0.5;
      const auto* colour = kFingerColours[finger_of(i)];
      const auto y0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(cy - r - 1)));
      const auto y1 = std::min<int64_t>(size - 1, static_cast<int64_t>(std::ceil(cy + r + 1)));
      const auto x0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(cx - r - 1)));
      const auto x1 = std::min<int64_t>(size - 1, static_cast<int64_t>(std::ceil(cx + r + 1)));
      for (int64_t y = y0; y <= y1; ++y)
        for (int64_t x = x0; x <= x1; ++x) {
          // soft edge one pixel wide; overlapping discs keep the brighter value
          const double d = std::hypot(static_cast<double>(x) - cx, static_cast<double>(y) - cy);
          const double a = std::clamp(r + 0.5 - d, 0.0, 1.0);
          if (a <= 0.0) continue;
          for (int64_t c = 0; c < 3; ++c) {
            double& px = img[(c * size + y) * size + x];
            px = std::max(px, static_cast<double>(static_cast<float>(a * colour[c])));
          }
        }
    }
  }
  return out;
}

LabelSequence classify_by_prototype(const KeypointClip& clip, const Prototypes& protos, double tau) {
  clip.validate();
  const auto& lay = clip.layout;
  std::vector<int32_t> path;
  Tensor hand({lay.right_hand, 3});
  for (int64_t t = 0; t < clip.length(); ++t) {
    std::copy_n(clip.coords.data() + (t * lay.total() + lay.right_begin()) * 3, lay.right_hand * 3, hand.data());
    int32_t best = 0;
    double best_d = tau;
    for (size_t i = 0; i < protos.letters.size(); ++i) {
      const double d = xy_distance(hand, protos.letters[i]);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int32_t>(i + 1);
      }
    }
    path.push_back(best);
  }
  return ctc_collapse(path);
}

double vocabulary_size(const SynthConfig& cfg) {
  double total = 0.0;
  for (int l = cfg.min_word; l <= cfg.max_word; ++l) total += std::pow(static_cast<double>(cfg.alphabet_size), l);
  return total;
}

std::vector<std::string> sample_words(const SynthConfig& cfg, size_t count) {
  cfg.validate();
  if (static_cast<double>(count) > vocabulary_size(cfg)) {
    throw ConfigError("requested " + std::to_string(count) + " distinct words but only " +
                      std::to_string(static_cast<int64_t>(vocabulary_size(cfg))) + " exist");
  }
  Rng rng(derive_seed(cfg.seed, "words"));
  std::vector<std::string> words;
  if (2.0 * static_cast<double>(count) > vocabulary_size(cfg)) {
    // dense request: enumerate everything, then shuffle
    for (int l = cfg.min_word; l <= cfg.max_word; ++l) {
      std::string w(static_cast<size_t>(l), 'a');
      while (true) {
        words.push_back(w);
        int i = l - 1;
        while (i >= 0 && ++w[static_cast<size_t>(i)] == 'a' + cfg.alphabet_size) w[static_cast<size_t>(i--)] = 'a';
        if (i < 0) break;
      }
    }
    rng.shuffle(words);
    words.resize(count);
    return words;
  }
  std::set<std::string> seen;
  while (words.size() < count) {
    const auto len = rng.integer(cfg.min_word, cfg.max_word);
    std::string w;
    for (int64_t i = 0; i < len; ++i) w.push_back(static_cast<char>('a' + rng.integer(0, cfg.alphabet_size - 1)));
    if (seen.insert(w).second) words.push_back(w);
  }
  return words;
}

SynthSplits generate_dataset(const SynthConfig& cfg, size_t n_train, size_t n_test, const std::filesystem::path& out,
                             size_t n_val) {
  const auto words = sample_words(cfg, n_train + n_val + n_test);
  const Prototypes protos = make_prototypes(cfg);
  std::filesystem::create_directories(out / "clips");
  SynthSplits splits;
  size_t next = 0;
  auto write_split = [&](const std::string& name, size_t n) {
    std::vector<ManifestEntry> entries;
    for (size_t i = 0; i < n; ++i, ++next) {
      char id[64];
      std::snprintf(id, sizeof id, "%s_%04zu", name.c_str(), i);
      const SynthSample s = generate_sample(words[next], cfg, protos, derive_seed(cfg.seed, "sample", next));
      const auto kpc = out / "clips" / (std::string(id) + ".kpc");
      write_keypoint_clip(kpc, s.keypoints);
      write_frame_clip(out / "clips" / (std::string(id) + ".frc"), s.frames);
      entries.push_back({id, kpc, words[next], s.label});
    }
    const auto path = out / (name + ".tsv");
    write_manifest(path, entries, out);
    return path;
  };
  splits.train = write_split("train", n_train);
  if (n_val > 0) splits.val = write_split("val", n_val);
  splits.test = write_split("test", n_test);
  return splits;
}

}  // namespace fsr
