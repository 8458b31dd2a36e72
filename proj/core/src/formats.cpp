// SPDX-License-Identifier: Apache-2.0
#include "fingerspell/formats.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fingerspell/error.hpp"

namespace fsr {
namespace {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto raw = std::bit_cast<std::array<uint8_t, sizeof(T)>>(v);
    std::reverse(raw.begin(), raw.end());
    return std::bit_cast<T>(raw);
  }
  return v;
}

uint32_t checked_u32(int64_t v, const char* what) {
  if (v < 0 || v > static_cast<int64_t>(UINT32_MAX)) throw ShapeError(std::string(what) + " does not fit in u32");
  return static_cast<uint32_t>(v);
}

}  // namespace

// ByteWriter --------------------------------------------------------------------

void ByteWriter::bytes(const void* p, size_t n) {
  const auto* b = static_cast<const uint8_t*>(p);
  buf_.insert(buf_.end(), b, b + n);
}

void ByteWriter::u32(uint32_t v) {
  v = to_little(v);
  bytes(&v, 4);
}

void ByteWriter::u64(uint64_t v) {
  v = to_little(v);
  bytes(&v, 8);
}

void ByteWriter::f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
void ByteWriter::f64(double v) { u64(std::bit_cast<uint64_t>(v)); }

void ByteWriter::str(const std::string& s) {
  u32(checked_u32(static_cast<int64_t>(s.size()), "string length"));
  bytes(s.data(), s.size());
}

// ByteReader --------------------------------------------------------------------

void ByteReader::fail(const std::string& message) const {
  throw DataError(source_ + ": byte " + std::to_string(at_) + ": " + message);
}

void ByteReader::need(size_t n, const char* what) {
  if (bytes_.size() - at_ < n) {
    fail(std::string("truncated ") + what + " (need " + std::to_string(n) + " bytes, " +
         std::to_string(bytes_.size() - at_) + " left)");
  }
}

void ByteReader::expect_magic(const char (&magic)[5]) {
  need(4, "magic");
  if (std::memcmp(bytes_.data() + at_, magic, 4) != 0) {
    std::string got;
    for (size_t i = 0; i < 4; ++i) {
      const auto c = static_cast<char>(bytes_[at_ + i]);
      got += (c >= 32 && c < 127) ? c : '?';
    }
    fail("bad magic '" + got + "', expected '" + magic + "'");
  }
  at_ += 4;
}

uint32_t ByteReader::u32(const char* what) {
  need(4, what);
  uint32_t v;
  std::memcpy(&v, bytes_.data() + at_, 4);
  at_ += 4;
  return to_little(v);
}

uint64_t ByteReader::u64(const char* what) {
  need(8, what);
  uint64_t v;
  std::memcpy(&v, bytes_.data() + at_, 8);
  at_ += 8;
  return to_little(v);
}

float ByteReader::f32(const char* what) { return std::bit_cast<float>(u32(what)); }
double ByteReader::f64(const char* what) { return std::bit_cast<double>(u64(what)); }

std::string ByteReader::str(const char* what) {
  const uint32_t n = u32(what);
  need(n, what);
  std::string s(reinterpret_cast<const char*>(bytes_.data() + at_), n);
  at_ += n;
  return s;
}

void ByteReader::f32_array(double* out, size_t count, const char* what) {
  if (count > (bytes_.size() - at_) / 4) need(count * 4, what);
  for (size_t i = 0; i < count; ++i) {
    uint32_t v;
    std::memcpy(&v, bytes_.data() + at_ + 4 * i, 4);
    out[i] = static_cast<double>(std::bit_cast<float>(to_little(v)));
  }
  at_ += 4 * count;
}

void ByteReader::expect_end() {
  if (at_ != bytes_.size()) fail(std::to_string(bytes_.size() - at_) + " unexpected trailing bytes");
}

// Files -------------------------------------------------------------------------

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("cannot write " + path.string());
}

// Clips -------------------------------------------------------------------------

std::vector<uint8_t> encode_keypoint_clip(const KeypointClip& clip) {
  clip.validate();
  ByteWriter w;
  w.bytes("KPC1", 4);
  w.u32(checked_u32(clip.length(), "T"));
  w.u32(checked_u32(clip.keypoints(), "K"));
  w.u32(3);
  for (double v : clip.coords.values()) w.f32(static_cast<float>(v));
  return std::move(w.buffer());
}

KeypointClip decode_keypoint_clip(std::span<const uint8_t> bytes, const KeypointLayout& layout,
                                  const std::string& source) {
  ByteReader r(bytes, source);
  r.expect_magic("KPC1");
  const uint32_t t = r.u32("frame count");
  if (t == 0) r.fail("frame count is zero");
  const uint32_t k = r.u32("keypoint count");
  if (k != layout.total()) r.fail("keypoint count " + std::to_string(k) + ", layout expects " + std::to_string(layout.total()));
  const uint32_t c = r.u32("coordinate count");
  if (c != 3) r.fail("coordinate count " + std::to_string(c) + ", expected 3");
  KeypointClip clip{Tensor({t, k, 3}), layout};
  r.f32_array(clip.coords.data(), static_cast<size_t>(clip.coords.size()), "coordinates");
  r.expect_end();
  return clip;
}

void write_keypoint_clip(const std::filesystem::path& path, const KeypointClip& clip) {
  write_file(path, encode_keypoint_clip(clip));
}

KeypointClip read_keypoint_clip(const std::filesystem::path& path, const KeypointLayout& layout) {
  return decode_keypoint_clip(read_file(path), layout, path.string());
}

std::vector<uint8_t> encode_frame_clip(const FrameClip& clip) {
  clip.validate();
  ByteWriter w;
  w.bytes("FRC1", 4);
  for (int a = 0; a < 4; ++a) w.u32(checked_u32(clip.frames.dim(a), "frame clip extent"));
  for (double v : clip.frames.values()) w.f32(static_cast<float>(v));
  return std::move(w.buffer());
}

FrameClip decode_frame_clip(std::span<const uint8_t> bytes, const std::string& source) {
  ByteReader r(bytes, source);
  r.expect_magic("FRC1");
  Shape shape;
  for (const char* what : {"frame count", "channel count", "height", "width"}) {
    const uint32_t v = r.u32(what);
    if (v == 0) r.fail(std::string(what) + " is zero");
    shape.push_back(v);
  }
  FrameClip clip{Tensor(shape)};
  r.f32_array(clip.frames.data(), static_cast<size_t>(clip.frames.size()), "pixels");
  r.expect_end();
  return clip;
}

void write_frame_clip(const std::filesystem::path& path, const FrameClip& clip) {
  write_file(path, encode_frame_clip(clip));
}

FrameClip read_frame_clip(const std::filesystem::path& path) { return decode_frame_clip(read_file(path), path.string()); }

}  // namespace fsr
