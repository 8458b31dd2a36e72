// SPDX-License-Identifier: Apache-2.0
#include "fingerspell/checkpoint.hpp"

#include "fingerspell/error.hpp"
#include "fingerspell/formats.hpp"

namespace fsr {

std::vector<uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.bytes("FSCK", 4);
  w.u32(Checkpoint::kVersion);
  w.str(canonical_config(ckpt.config));
  w.u32(static_cast<uint32_t>(ckpt.epoch));
  w.u32(static_cast<uint32_t>(ckpt.history.size()));
  for (const auto& h : ckpt.history) {
    w.u32(static_cast<uint32_t>(h.epoch));
    w.f64(h.lr);
    w.f64(h.train_loss);
    w.f64(h.val_accuracy);
  }
  w.u32(static_cast<uint32_t>(ckpt.params.count()));
  for (const auto& e : ckpt.params.entries()) {
    w.str(e.name);
    const auto& v = e.var.value();
    w.u32(static_cast<uint32_t>(v.rank()));
    for (int a = 0; a < v.rank(); ++a) w.u32(static_cast<uint32_t>(v.dim(a)));
    for (double x : v.values()) w.f32(static_cast<float>(x));
  }
  return std::move(w.buffer());
}

Checkpoint decode_checkpoint(std::span<const uint8_t> bytes, const std::string& source) {
  ByteReader r(bytes, source);
  r.expect_magic("FSCK");
  const uint32_t version = r.u32("version");
  if (version != Checkpoint::kVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const size_t config_at = r.offset();
  const std::string text = r.str("config");
  try {
    ck.config = parse_config(text, source + " (embedded config at byte " + std::to_string(config_at) + ")");
  } catch (const ConfigError& e) {
    throw DataError(e.what());
  }
  ck.epoch = static_cast<int>(r.u32("epoch"));
  const uint32_t n_hist = r.u32("history length");
  for (uint32_t i = 0; i < n_hist; ++i) {
    EpochRecord h;
    h.epoch = static_cast<int>(r.u32("history epoch"));
    h.lr = r.f64("history lr");
    h.train_loss = r.f64("history loss");
    h.val_accuracy = r.f64("history accuracy");
    ck.history.push_back(h);
  }
  const uint32_t n_params = r.u32("parameter count");
  for (uint32_t i = 0; i < n_params; ++i) {
    const std::string name = r.str("parameter name");
    const uint32_t rank = r.u32("parameter rank");
    if (rank > 8) r.fail("parameter " + name + " has rank " + std::to_string(rank));
    Shape shape;
    for (uint32_t a = 0; a < rank; ++a) shape.push_back(r.u32("parameter extent"));
    Tensor t(shape);
    r.f32_array(t.data(), static_cast<size_t>(t.size()), "parameter data");
    if (ck.params.contains(name)) r.fail("duplicate parameter " + name);
    ck.params.add(name, std::move(t));
  }
  r.expect_end();
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  // write-then-rename so a crash never leaves a truncated checkpoint
  auto tmp = path;
  tmp += ".tmp";
  write_file(tmp, encode_checkpoint(ckpt));
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace fsr
