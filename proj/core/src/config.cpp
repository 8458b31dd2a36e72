// SPDX-License-Identifier: Apache-2.0
#include "fingerspell/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <type_traits>

#include "fingerspell/error.hpp"

namespace fsr {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string part;
  std::stringstream ss(s);
  while (std::getline(ss, part, sep)) out.push_back(trim(part));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& s) {
  T v{};
  const char* end = s.data() + s.size();
  auto r = std::from_chars(s.data(), end, v);
  if (s.empty() || r.ec != std::errc() || r.ptr != end) throw ConfigError("'" + s + "' is not a valid number");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "off" || s == "no") return false;
  throw ConfigError("'" + s + "' is not a boolean");
}

std::vector<double> parse_doubles(const std::string& s, size_t expected) {
  std::vector<double> out;
  for (const auto& p : split(s, ',')) out.push_back(parse_number<double>(p));
  if (expected && out.size() != expected) {
    throw ConfigError("expected " + std::to_string(expected) + " comma-separated values, got '" + s + "'");
  }
  return out;
}

std::string join_doubles(const double* v, size_t n) {
  std::string out;
  for (size_t i = 0; i < n; ++i) out += (i ? "," : "") + fmt_double(v[i]);
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Ref>
Field number(Ref ref) {
  using T = std::remove_reference_t<decltype(ref(std::declval<RunConfig&>()))>;
  return {[ref](RunConfig& c, const std::string& v) { ref(c) = parse_number<T>(v); },
          [ref](const RunConfig& c) {
            const T v = ref(const_cast<RunConfig&>(c));
            if constexpr (std::is_floating_point_v<T>)
              return fmt_double(v);
            else
              return std::to_string(v);
          }};
}

template <typename Ref>
Field boolean(Ref ref) {
  return {[ref](RunConfig& c, const std::string& v) { ref(c) = parse_bool(v); },
          [ref](const RunConfig& c) -> std::string { return ref(const_cast<RunConfig&>(c)) ? "true" : "false"; }};
}

template <typename Ref>
Field range(Ref ref) {
  return {[ref](RunConfig& c, const std::string& v) {
            const auto d = parse_doubles(v, 2);
            ref(c) = {d[0], d[1]};
          },
          [ref](const RunConfig& c) {
            const auto& r = ref(const_cast<RunConfig&>(c));
            const double d[2] = {r.lo, r.hi};
            return join_doubles(d, 2);
          }};
}

template <typename Ref>
Field triple(Ref ref) {
  return {[ref](RunConfig& c, const std::string& v) {
            const auto d = parse_doubles(v, 3);
            std::copy(d.begin(), d.end(), ref(c).begin());
          },
          [ref](const RunConfig& c) { return join_doubles(ref(const_cast<RunConfig&>(c)).data(), 3); }};
}

template <typename Lo, typename Hi>
Field int_range(Lo ref_lo, Hi ref_hi) {
  return {[ref_lo, ref_hi](RunConfig& c, const std::string& v) {
            const auto parts = split(v, ',');
            if (parts.size() != 2) throw ConfigError("expected 'lo,hi', got '" + v + "'");
            ref_lo(c) = parse_number<int>(parts[0]);
            ref_hi(c) = parse_number<int>(parts[1]);
          },
          [ref_lo, ref_hi](const RunConfig& c) {
            auto& m = const_cast<RunConfig&>(c);
            return std::to_string(ref_lo(m)) + "," + std::to_string(ref_hi(m));
          }};
}

template <typename Parse, typename Print, typename Ref>
Field enumerated(Ref ref, Parse parse, Print print) {
  return {[ref, parse](RunConfig& c, const std::string& v) { ref(c) = parse(v); },
          [ref, print](const RunConfig& c) { return print(ref(const_cast<RunConfig&>(c))); }};
}

#define FSR_REF(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::map<std::string, Field>& registry() {
  static const std::map<std::string, Field> fields = [] {
    std::map<std::string, Field> f;
    // model
    f["model.modality"] = enumerated(FSR_REF(model.modality), parse_modality, [](Modality m) { return to_string(m); });
    f["model.preset"] = {[](RunConfig& c, const std::string& v) { c.model.preset = v; },
                         [](const RunConfig& c) { return c.model.preset; }};
    f["model.alphabet"] = {[](RunConfig& c, const std::string& v) { c.model.alphabet = v; },
                           [](const RunConfig& c) { return c.model.alphabet; }};
    f["model.feature_dim"] = number(FSR_REF(model.feature_dim));
    f["model.fusion"] = enumerated(FSR_REF(model.fusion), parse_fusion, [](Fusion v) { return to_string(v); });
    f["model.fusion_weights"] = {[](RunConfig& c, const std::string& v) {
                                   const auto d = parse_doubles(v, 2);
                                   c.model.fusion_weights = {d[0], d[1]};
                                 },
                                 [](const RunConfig& c) { return join_doubles(c.model.fusion_weights.data(), 2); }};
    // input
    f["input.size"] = number(FSR_REF(model.input.size));
    f["input.mean"] = triple(FSR_REF(model.input.mean));
    f["input.std"] = triple(FSR_REF(model.input.std));
    f["input.left_hand"] = number(FSR_REF(model.layout.left_hand));
    f["input.right_hand"] = number(FSR_REF(model.layout.right_hand));
    f["input.pose"] = number(FSR_REF(model.layout.pose));
    f["input.pose_pairs"] = {[](RunConfig& c, const std::string& v) {
                               c.model.layout.pose_pairs.clear();
                               if (v == "none") return;
                               for (const auto& p : split(v, ',')) {
                                 const auto ab = split(p, ':');
                                 if (ab.size() != 2) throw ConfigError("pose pair '" + p + "' is not 'a:b'");
                                 c.model.layout.pose_pairs.emplace_back(parse_number<int64_t>(ab[0]),
                                                                        parse_number<int64_t>(ab[1]));
                               }
                             },
                             [](const RunConfig& c) {
                               std::string out;
                               for (auto [a, b] : c.model.layout.pose_pairs)
                                 out += (out.empty() ? "" : ",") + std::to_string(a) + ":" + std::to_string(b);
                               return out.empty() ? std::string("none") : out;
                             }};
    // tsam
    f["tsam.stem_channels"] = number(FSR_REF(model.tsam.stem_channels));
    f["tsam.stem_stride"] = number(FSR_REF(model.tsam.stem_stride));
    f["tsam.blocks"] = {[](RunConfig& c, const std::string& v) {
                          c.model.tsam.blocks.clear();
                          for (const auto& p : split(v, ',')) {
                            const auto cs = split(p, '/');
                            if (cs.size() != 2) throw ConfigError("tsam block '" + p + "' is not 'channels/stride'");
                            c.model.tsam.blocks.push_back({parse_number<int64_t>(cs[0]), parse_number<int64_t>(cs[1])});
                          }
                        },
                        [](const RunConfig& c) {
                          std::string out;
                          for (const auto& b : c.model.tsam.blocks)
                            out += (out.empty() ? "" : ",") + std::to_string(b.channels) + "/" + std::to_string(b.stride);
                          return out;
                        }};
    f["tsam.shift_fraction"] = number(FSR_REF(model.tsam.shift_fraction));
    f["tsam.count_shift"] = boolean(FSR_REF(model.tsam.count_shift));
    f["tsam.shift_type"] = enumerated(FSR_REF(model.tsam.shift_type), parse_shift_type, [](ShiftType v) { return to_string(v); });
    f["tsam.reduction"] = enumerated(FSR_REF(model.tsam.reduction), parse_reduction, [](Reduction v) { return to_string(v); });
    f["tsam.activation"] = enumerated(FSR_REF(model.tsam.activation), parse_activation, [](Activation v) { return to_string(v); });
    f["tsam.temporal_kernel"] = number(FSR_REF(model.tsam.temporal_kernel));
    // tpe
    f["tpe.c1"] = number(FSR_REF(model.tpe.c1));
    f["tpe.c2"] = number(FSR_REF(model.tpe.c2));
    f["tpe.tube_kernel"] = number(FSR_REF(model.tpe.tube_kernel));
    f["tpe.tube_stride"] = number(FSR_REF(model.tpe.tube_stride));
    f["tpe.conv_modules"] = number(FSR_REF(model.tpe.conv_modules));
    f["tpe.conv_module_kernel"] = number(FSR_REF(model.tpe.conv_module_kernel));
    f["tpe.conv_module_expansion"] = number(FSR_REF(model.tpe.conv_module_expansion));
    f["tpe.groups"] = {[](RunConfig& c, const std::string& v) {
                         c.model.tpe.groups.clear();
                         if (v != "all") c.model.tpe.groups = split(v, ',');
                       },
                       [](const RunConfig& c) {
                         std::string out;
                         for (const auto& g : c.model.tpe.groups) out += (out.empty() ? "" : ",") + g;
                         return out.empty() ? std::string("all") : out;
                       }};
    // decoder
    f["decoder.rnn"] = enumerated(FSR_REF(model.decoder.rnn), nn::parse_rnn_kind, [](nn::RnnKind v) { return nn::to_string(v); });
    f["decoder.hidden"] = number(FSR_REF(model.decoder.hidden));
    f["decoder.layers"] = number(FSR_REF(model.decoder.layers));
    f["decoder.bidirectional"] = boolean(FSR_REF(model.decoder.bidirectional));
    // train
    f["train.lr"] = number(FSR_REF(train.adamw.lr));
    f["train.weight_decay"] = number(FSR_REF(train.adamw.weight_decay));
    f["train.beta1"] = number(FSR_REF(train.adamw.beta1));
    f["train.beta2"] = number(FSR_REF(train.adamw.beta2));
    f["train.eps"] = number(FSR_REF(train.adamw.eps));
    f["train.gamma"] = number(FSR_REF(train.gamma));
    f["train.milestones"] = {[](RunConfig& c, const std::string& v) {
                               c.train.milestones.clear();
                               if (v == "none") return;
                               for (const auto& p : split(v, ',')) c.train.milestones.push_back(parse_number<int>(p));
                             },
                             [](const RunConfig& c) {
                               std::string out;
                               for (int m : c.train.milestones) out += (out.empty() ? "" : ",") + std::to_string(m);
                               return out.empty() ? std::string("none") : out;
                             }};
    f["train.epochs"] = number(FSR_REF(train.epochs));
    f["train.batch_clips"] = number(FSR_REF(train.batch_clips));
    f["train.seed"] = number(FSR_REF(train.seed));
    f["train.grad_clip"] = number(FSR_REF(train.grad_clip));
    f["train.stop_at_accuracy"] = number(FSR_REF(train.stop_at_accuracy));
    f["train.bucket_by_length"] = boolean(FSR_REF(train.bucket_by_length));
    // augment
    f["augment.enabled"] = boolean(FSR_REF(augment.enabled));
    f["augment.resample_p"] = number(FSR_REF(augment.spec.resample_p));
    f["augment.resample_rate"] = range(FSR_REF(augment.spec.resample_rate));
    f["augment.affine_p"] = number(FSR_REF(augment.spec.affine_p));
    f["augment.affine_scale"] = range(FSR_REF(augment.spec.affine_scale));
    f["augment.affine_shear"] = range(FSR_REF(augment.spec.affine_shear));
    f["augment.affine_shift"] = range(FSR_REF(augment.spec.affine_shift));
    f["augment.affine_degrees"] = range(FSR_REF(augment.spec.affine_degrees));
    f["augment.temporal_mask_p"] = number(FSR_REF(augment.spec.temporal_mask_p));
    f["augment.temporal_mask_size"] = range(FSR_REF(augment.spec.temporal_mask_size));
    f["augment.spatial_mask_p"] = number(FSR_REF(augment.spec.spatial_mask_p));
    f["augment.spatial_mask_size"] = range(FSR_REF(augment.spec.spatial_mask_size));
    f["augment.flip_p"] = number(FSR_REF(augment.spec.flip_p));
    f["augment.rotation_p"] = number(FSR_REF(augment.spec.rotation_p));
    f["augment.rotation_degrees"] = range(FSR_REF(augment.spec.rotation_degrees));
    // synth
    f["synth.alphabet_size"] = number(FSR_REF(synth.data.alphabet_size));
    f["synth.word_length"] = int_range(FSR_REF(synth.data.min_word), FSR_REF(synth.data.max_word));
    f["synth.letter_frames"] = int_range(FSR_REF(synth.data.min_letter_frames), FSR_REF(synth.data.max_letter_frames));
    f["synth.transition_frames"] = int_range(FSR_REF(synth.data.min_transition), FSR_REF(synth.data.max_transition));
    f["synth.sigma"] = number(FSR_REF(synth.data.sigma));
    f["synth.seed"] = number(FSR_REF(synth.data.seed));
    f["synth.image_size"] = number(FSR_REF(synth.data.image_size));
    f["synth.disc_radius"] = number(FSR_REF(synth.data.disc_radius));
    f["synth.train"] = number(FSR_REF(synth.n_train));
    f["synth.val"] = number(FSR_REF(synth.n_val));
    f["synth.test"] = number(FSR_REF(synth.n_test));
    return f;
  }();
  return fields;
}

#undef FSR_REF

}  // namespace

void TrainConfig::validate() const {
  if (!(adamw.lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (!(adamw.weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (!(adamw.eps > 0.0)) throw ConfigError("train.eps must be positive");
  if (!(gamma > 0.0)) throw ConfigError("train.gamma must be positive");
  for (size_t i = 1; i < milestones.size(); ++i)
    if (milestones[i] <= milestones[i - 1]) throw ConfigError("train.milestones must be strictly increasing");
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (batch_clips < 1) throw ConfigError("train.batch_clips must be >= 1");
  if (!(grad_clip >= 0.0)) throw ConfigError("train.grad_clip must be >= 0");
}

RunConfig default_config(Modality modality, const std::string& preset) {
  RunConfig c;
  auto& m = c.model;
  m.modality = modality;
  m.preset = preset;
  if (preset == "tiny") {
    m.feature_dim = 192;
    m.input.size = 32;
    m.tsam = TsamConfig::tiny(m.feature_dim);
    m.decoder.hidden = 64;
  } else if (preset == "full") {
    m.feature_dim = 512;
    m.input.size = 224;
    m.tsam = TsamConfig::resnet34(m.feature_dim, m.input.size);
    m.decoder.hidden = 256;
  } else {
    throw ConfigError("unknown model.preset '" + preset + "' (expected tiny or full)");
  }
  c.train.epochs = modality == Modality::rgb ? 60 : 100;
  c.train.milestones = modality == Modality::kp ? std::vector<int>{25, 40} : std::vector<int>{20, 40};
  m.finalize();
  return c;
}

RunConfig parse_config(const std::string& text, const std::string& source) {
  std::map<std::string, std::pair<std::string, int>> kv;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(t.substr(0, eq)), value = trim(t.substr(eq + 1));
    if (!registry().count(key)) throw ConfigError(source + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (!kv.emplace(key, std::make_pair(value, line_no)).second) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": key '" + key + "' given twice");
    }
  }
  auto lookup = [&](const std::string& key, const std::string& fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second.first;
  };
  RunConfig cfg = default_config(parse_modality(lookup("model.modality", "kp")), lookup("model.preset", "full"));
  for (const auto& [key, entry] : kv) {
    if (key == "model.modality" || key == "model.preset") continue;
    try {
      registry().at(key).set(cfg, entry.first);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(entry.second) + ": " + key + ": " + e.what());
    }
  }
  cfg.model.finalize();
  cfg.train.validate();
  cfg.augment.spec.validate();
  cfg.synth.data.layout = cfg.model.layout;
  cfg.synth.data.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string canonical_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : registry()) out += key + " = " + field.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, field] : registry()) keys.push_back(key);
  return keys;
}

}  // namespace fsr
