// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fingerspell/datamodel.hpp"

namespace fsr {

/// Keypoint clip file: "KPC1", u32 T, K, C (= 3), then T*K*C float32, all
/// little-endian, frame-major, then keypoint, then coordinate.
std::vector<uint8_t> encode_keypoint_clip(const KeypointClip& clip);
KeypointClip decode_keypoint_clip(std::span<const uint8_t> bytes, const KeypointLayout& layout = {},
                                  const std::string& source = "<memory>");
void write_keypoint_clip(const std::filesystem::path& path, const KeypointClip& clip);
KeypointClip read_keypoint_clip(const std::filesystem::path& path, const KeypointLayout& layout = {});

/// Frame clip file: "FRC1", u32 T, C, H, W, then T*C*H*W float32.
std::vector<uint8_t> encode_frame_clip(const FrameClip& clip);
FrameClip decode_frame_clip(std::span<const uint8_t> bytes, const std::string& source = "<memory>");
void write_frame_clip(const std::filesystem::path& path, const FrameClip& clip);
FrameClip read_frame_clip(const std::filesystem::path& path);

std::vector<uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const uint8_t> bytes);

/// Little-endian primitives shared by the binary formats. Reader errors are
/// DataError messages naming the source and the byte offset.
class ByteWriter {
 public:
  void bytes(const void* p, size_t n);
  void u32(uint32_t v);
  void u64(uint64_t v);
  void f32(float v);
  void f64(double v);
  void str(const std::string& s);  // u32 length prefix
  std::vector<uint8_t>& buffer() { return buf_; }

 private:
  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(std::span<const uint8_t> bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  void expect_magic(const char (&magic)[5]);
  uint32_t u32(const char* what);
  uint64_t u64(const char* what);
  float f32(const char* what);
  double f64(const char* what);
  std::string str(const char* what);
  /// Bulk float32 read into doubles.
  void f32_array(double* out, size_t count, const char* what);
  void expect_end();
  size_t offset() const { return at_; }
  [[noreturn]] void fail(const std::string& message) const;

 private:
  void need(size_t n, const char* what);

  std::span<const uint8_t> bytes_;
  std::string source_;
  size_t at_ = 0;
};

}  // namespace fsr
