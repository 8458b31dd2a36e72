// SPDX-License-Identifier: Apache-2.0
#include "fingerspell/datamodel.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "fingerspell/error.hpp"
#include "fingerspell/utf8.hpp"

namespace fsr {

// Alphabet --------------------------------------------------------------------

Alphabet::Alphabet(std::u32string symbols) : symbols_(std::move(symbols)) {
  if (symbols_.empty()) throw ConfigError("alphabet must not be empty");
  std::set<char32_t> seen;
  for (char32_t c : symbols_)
    if (!seen.insert(c).second) throw ConfigError("alphabet contains '" + utf8::encode(c) + "' twice");
}

Alphabet Alphabet::from_utf8(std::string_view symbols) { return Alphabet(utf8::decode(symbols)); }

std::string Alphabet::to_utf8() const { return utf8::encode(symbols_); }

int32_t Alphabet::index_of(char32_t c) const {
  const auto pos = symbols_.find(c);
  return pos == std::u32string::npos ? -1 : static_cast<int32_t>(pos) + 1;
}

char32_t Alphabet::symbol(int32_t index) const {
  if (index < 1 || index > size()) throw std::out_of_range("alphabet index " + std::to_string(index));
  return symbols_[static_cast<size_t>(index - 1)];
}

LabelSequence Alphabet::encode(std::string_view text) const {
  LabelSequence label;
  for (char32_t c : utf8::decode(text)) {
    const int32_t id = index_of(c);
    if (id < 0) throw DataError("character '" + utf8::encode(c) + "' is not in the alphabet");
    label.ids.push_back(id);
  }
  return label;
}

std::string Alphabet::decode(const LabelSequence& label) const {
  std::u32string out;
  for (int32_t id : label.ids) out.push_back(symbol(id));
  return utf8::encode(out);
}

bool Alphabet::valid(const LabelSequence& label) const {
  return std::all_of(label.ids.begin(), label.ids.end(), [&](int32_t id) { return id >= 1 && id <= size(); });
}

// KeypointLayout ----------------------------------------------------------------

std::vector<int64_t> KeypointLayout::group_indices(std::string_view group) const {
  auto range = [](int64_t begin, int64_t n) {
    std::vector<int64_t> v(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) v[i] = begin + i;
    return v;
  };
  if (group == "left_hand") return range(left_begin(), left_hand);
  if (group == "right_hand") return range(right_begin(), right_hand);
  if (group == "hands") return range(left_begin(), left_hand + right_hand);
  if (group == "pose") return range(pose_begin(), pose);
  throw ConfigError("unknown keypoint group '" + std::string(group) + "'");
}

std::vector<int64_t> KeypointLayout::flip_permutation() const {
  std::vector<int64_t> perm(static_cast<size_t>(total()));
  for (int64_t i = 0; i < left_hand; ++i) {
    perm[left_begin() + i] = right_begin() + i;
    perm[right_begin() + i] = left_begin() + i;
  }
  for (int64_t i = 0; i < pose; ++i) perm[pose_begin() + i] = pose_begin() + i;
  for (auto [a, b] : pose_pairs) {
    perm[pose_begin() + a] = pose_begin() + b;
    perm[pose_begin() + b] = pose_begin() + a;
  }
  return perm;
}

void KeypointLayout::validate() const {
  if (left_hand < 0 || right_hand < 0 || pose < 0 || total() < 1) throw ConfigError("keypoint layout sizes");
  if (left_hand != right_hand) throw ConfigError("left and right hand groups must have equal size");
  std::set<int64_t> used;
  for (auto [a, b] : pose_pairs) {
    if (a < 0 || b < 0 || a >= pose || b >= pose || a == b) throw ConfigError("pose pair out of range");
    if (!used.insert(a).second || !used.insert(b).second) throw ConfigError("pose index in two pairs");
  }
}

// Clips -----------------------------------------------------------------------

void FrameClip::validate() const {
  if (frames.rank() != 4) throw ShapeError("frame clip must be (T, C, H, W), got " + shape_string(frames.shape()));
  if (frames.dim(0) < 1) throw ShapeError("frame clip has no frames");
}

void KeypointClip::validate() const {
  if (coords.rank() != 3 || coords.dim(2) != 3) {
    throw ShapeError("keypoint clip must be (T, K, 3), got " + shape_string(coords.shape()));
  }
  if (coords.dim(0) < 1) throw ShapeError("keypoint clip has no frames");
  if (coords.dim(1) != layout.total()) {
    throw ShapeError("keypoint clip has " + std::to_string(coords.dim(1)) + " keypoints, layout expects " +
                     std::to_string(layout.total()));
  }
}

std::vector<int64_t> PackedFrameBatch::offsets() const {
  std::vector<int64_t> off(lengths.size());
  int64_t at = 0;
  for (size_t i = 0; i < lengths.size(); ++i) {
    off[i] = at;
    at += lengths[i];
  }
  return off;
}

void PackedFrameBatch::validate() const {
  if (frames.rank() != 4) throw ShapeError("packed batch must be (bs, C, H, W)");
  int64_t total = 0;
  for (auto l : lengths) {
    if (l < 1) throw ShapeError("packed batch holds a clip of length " + std::to_string(l));
    total += l;
  }
  if (total != frames.dim(0)) {
    throw ShapeError("length list sums to " + std::to_string(total) + " but batch holds " +
                     std::to_string(frames.dim(0)) + " frames");
  }
}

PackedFrameBatch pack_batch(std::span<const FrameClip> clips) {
  if (clips.empty()) throw ShapeError("pack_batch: empty clip list");
  for (const auto& c : clips) c.validate();
  const auto& first = clips.front().frames.shape();
  int64_t total = 0;
  for (const auto& c : clips) {
    const auto& s = c.frames.shape();
    if (s[1] != first[1] || s[2] != first[2] || s[3] != first[3]) {
      throw ShapeError("pack_batch: clip frame shape " + shape_string(s) + " differs from " + shape_string(first));
    }
    total += s[0];
  }
  PackedFrameBatch batch;
  batch.frames = Tensor({total, first[1], first[2], first[3]});
  int64_t at = 0;
  for (const auto& c : clips) {
    std::copy_n(c.frames.data(), c.frames.size(), batch.frames.data() + at);
    at += c.frames.size();
    batch.lengths.push_back(c.length());
  }
  return batch;
}

FrameClip unpack_clip(const PackedFrameBatch& batch, size_t index) {
  batch.validate();
  if (index >= batch.lengths.size()) throw std::out_of_range("unpack_clip: index");
  const auto& s = batch.frames.shape();
  const int64_t frame = s[1] * s[2] * s[3];
  const int64_t start = batch.offsets()[index];
  const int64_t len = batch.lengths[index];
  FrameClip clip{Tensor({len, s[1], s[2], s[3]})};
  std::copy_n(batch.frames.data() + start * frame, len * frame, clip.frames.data());
  return clip;
}

PaddedKeypointBatch pad_keypoint_batch(std::span<const KeypointClip> clips) { return pad_keypoint_batch(clips, 0); }

PaddedKeypointBatch pad_keypoint_batch(std::span<const KeypointClip> clips, int64_t min_frames) {
  if (clips.empty()) throw ShapeError("pad_keypoint_batch: empty clip list");
  const int64_t k = clips.front().coords.rank() == 3 ? clips.front().coords.dim(1) : -1;
  int64_t n = std::max<int64_t>(min_frames, 1);
  for (const auto& c : clips) {
    c.validate();
    if (c.keypoints() != k) {
      throw ShapeError("pad_keypoint_batch: keypoint count " + std::to_string(c.keypoints()) + " differs from " +
                       std::to_string(k));
    }
    n = std::max(n, c.length());
  }
  const auto bs = static_cast<int64_t>(clips.size());
  PaddedKeypointBatch batch;
  batch.coords = Tensor({bs, 3, n, k});
  for (int64_t b = 0; b < bs; ++b) {
    const auto& c = clips[static_cast<size_t>(b)];
    batch.lengths.push_back(c.length());
    for (int64_t t = 0; t < c.length(); ++t)
      for (int64_t j = 0; j < k; ++j)
        for (int64_t ch = 0; ch < 3; ++ch)
          batch.coords[((b * 3 + ch) * n + t) * k + j] = c.coords[(t * k + j) * 3 + ch];
  }
  return batch;
}

// Manifest --------------------------------------------------------------------

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path, const Alphabet& alphabet) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields(1);
    for (char c : line) {
      if (c == '\t') {
        fields.emplace_back();
      } else {
        fields.back() += c;
      }
    }
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected three TAB-separated fields (sample_id, path, label)");
    }
    ManifestEntry e;
    e.sample_id = fields[0];
    e.clip_path = base / fields[1];
    e.label_text = fields[2];
    try {
      e.label = alphabet.encode(e.label_text);
    } catch (const DataError& err) {
      throw DataError("sample " + e.sample_id + ": " + err.what());
    }
    if (!std::filesystem::exists(e.clip_path)) {
      throw DataError("sample " + e.sample_id + ": missing file " + e.clip_path.string());
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& base) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest " + path.string());
  for (const auto& e : entries) {
    out << e.sample_id << '\t' << std::filesystem::relative(e.clip_path, base).generic_string() << '\t'
        << e.label_text << '\n';
  }
}

}  // namespace fsr
