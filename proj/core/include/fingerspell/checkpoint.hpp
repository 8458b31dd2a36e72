// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fingerspell/config.hpp"
#include "fingerspell/params.hpp"

namespace fsr {

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;  // NaN when no validation split was given

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

/// Single-file container: "FSCK", u32 version, canonical config text,
/// u32 epoch, history, then named float32 parameter blobs with shapes.
struct Checkpoint {
  static constexpr uint32_t kVersion = 1;

  RunConfig config;
  int epoch = 0;  // completed epochs
  std::vector<EpochRecord> history;
  ParamSet params;
};

std::vector<uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const uint8_t> bytes, const std::string& source = "<memory>");
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fsr
