// SPDX-License-Identifier: Apache-2.0
#include "fingerspell/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "fingerspell/error.hpp"
#include "fingerspell/formats.hpp"
#include "fingerspell/optim.hpp"
#include "fingerspell/random.hpp"

namespace fsr {

namespace {

std::filesystem::path sibling(const std::filesystem::path& p, const char* ext) {
  auto out = p;
  out.replace_extension(ext);
  return out;
}

int64_t sample_length(const Sample& s) {
  if (s.keypoints) return s.keypoints->length();
  if (s.frames) return s.frames->length();
  return 0;
}

// Batches of indices for one epoch. Bucketing sorts windows of eight batches
// by length and then shuffles the batch order.
std::vector<std::vector<size_t>> epoch_batches(const Dataset& data, const TrainConfig& tc, int epoch) {
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(derive_seed(tc.seed, "shuffle", static_cast<uint64_t>(epoch)));
  rng.shuffle(order);
  const auto bs = static_cast<size_t>(tc.batch_clips);
  if (tc.bucket_by_length) {
    const size_t window = bs * 8;
    for (size_t i = 0; i < order.size(); i += window) {
      auto end = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + window));
      std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(i), end, [&](size_t a, size_t b) {
        return sample_length(data.samples[a]) < sample_length(data.samples[b]);
      });
    }
  }
  std::vector<std::vector<size_t>> batches;
  for (size_t i = 0; i < order.size(); i += bs)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + bs)));
  if (tc.bucket_by_length) rng.shuffle(batches);
  return batches;
}

Sample training_view(const Sample& raw, const RunConfig& cfg, uint64_t seed) {
  if (!cfg.augment.enabled) return normalize_sample(raw, cfg.model);
  Sample aug = apply_pipeline(raw, cfg.augment.spec, seed);
  // resampling can shrink a clip below what its label needs; keep the clip
  // length then so the loss stays defined
  if (sample_length(aug) < ctc_min_frames(aug.label)) {
    AugmentSpec no_resample = cfg.augment.spec;
    no_resample.resample_p = 0.0;
    aug = apply_pipeline(raw, no_resample, seed);
  }
  return normalize_sample(aug, cfg.model);
}

void write_history(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  out << "epoch\tlr\ttrain_loss\tval_accuracy\n";
  for (const auto& h : history) out << h.epoch << '\t' << h.lr << '\t' << h.train_loss << '\t' << h.val_accuracy << '\n';
  if (!out) throw DataError("cannot write " + path.string());
}

}  // namespace

Sample load_sample(const std::filesystem::path& clip, const ModelConfig& cfg) {
  Sample s;
  if (cfg.uses_kp()) s.keypoints = read_keypoint_clip(sibling(clip, ".kpc"), cfg.layout);
  if (cfg.uses_rgb()) s.frames = read_frame_clip(sibling(clip, ".frc"));
  return sanitize_sample(s, cfg);
}

Dataset load_dataset(const std::filesystem::path& manifest, const ModelConfig& cfg) {
  const auto entries = load_manifest(manifest, cfg.make_alphabet());
  if (entries.empty()) throw DataError(manifest.string() + ": manifest has no samples");
  Dataset d;
  for (const auto& e : entries) {
    Sample s;
    try {
      s = load_sample(e.clip_path, cfg);
    } catch (const DataError& err) {
      throw DataError("sample " + e.sample_id + ": " + err.what());
    }
    s.label = e.label;
    d.ids.push_back(e.sample_id);
    d.samples.push_back(std::move(s));
  }
  return d;
}

Model model_from_checkpoint(const Checkpoint& ckpt) { return Model(ckpt.config.model, ckpt.params); }

TrainResult train(const RunConfig& cfg, const Dataset& train_set, const Dataset* val_set,
                  const std::filesystem::path& out_dir, const EpochCallback& on_epoch) {
  cfg.model.validate();
  cfg.train.validate();
  if (train_set.size() == 0) throw DataError("training set is empty");
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  const TrainConfig& tc = cfg.train;
  Model model(cfg.model, derive_seed(tc.seed, "init"));
  AdamW opt(model.params(), tc.adamw);

  TrainResult result;
  result.last = Checkpoint{cfg, 0, {}, model.params()};
  result.best = result.last;
  double best_acc = -std::numeric_limits<double>::infinity();

  auto snapshot = [&](int epoch, const std::vector<EpochRecord>& history) {
    Checkpoint c{cfg, epoch, history, ParamSet{}};
    for (const auto& e : model.params().entries()) c.params.add(e.name, e.var.value());
    return c;
  };
  auto persist = [&] {
    if (out_dir.empty()) return;
    save_checkpoint(out_dir / "last.ckpt", result.last);
    save_checkpoint(out_dir / "best.ckpt", result.best);
    write_history(out_dir / "history.tsv", result.last.history);
  };
  result.last = snapshot(0, {});
  result.best = result.last;
  persist();

  std::vector<EpochRecord> history;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const double lr = multistep_lr(tc.adamw.lr, tc.gamma, tc.milestones, epoch);
    opt.set_lr(lr);
    double loss_sum = 0.0;
    size_t n_batches = 0;
    for (const auto& idx : epoch_batches(train_set, tc, epoch)) {
      std::vector<Sample> batch;
      std::vector<LabelSequence> labels;
      for (size_t i : idx) {
        const uint64_t seed = derive_seed(tc.seed, "augment", static_cast<uint64_t>(epoch) * train_set.size() + i);
        batch.push_back(training_view(train_set.samples[i], cfg, seed));
        labels.push_back(batch.back().label);
      }
      model.params().zero_grad();
      Var loss;
      try {
        loss = ctc_batch_loss(model.forward(batch), labels);
      } catch (const InfeasibleAlignment& e) {
        std::string ids;
        for (size_t i : idx) ids += (ids.empty() ? "" : ", ") + train_set.ids[i];
        throw DataError(std::string(e.what()) + " (batch: " + ids + ")");
      }
      const double value = loss.value().data()[0];
      if (!std::isfinite(value)) {
        std::string ids;
        for (size_t i : idx) ids += (ids.empty() ? "" : ", ") + train_set.ids[i];
        throw DataError("non-finite loss at epoch " + std::to_string(epoch) + " in batch: " + ids);
      }
      loss.backward();
      if (tc.grad_clip > 0.0) clip_grad_norm(model.params(), tc.grad_clip);
      opt.step();
      model.params().round_to_storage();
      loss_sum += value;
      ++n_batches;
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(n_batches);
    rec.val_accuracy = val_set ? evaluate(model, *val_set).accuracy : std::numeric_limits<double>::quiet_NaN();
    history.push_back(rec);

    result.last = snapshot(epoch + 1, history);
    // ties go to the newer epoch; without a validation split the newest wins
    const double score = val_set ? rec.val_accuracy : static_cast<double>(epoch);
    if (score >= best_acc) {
      best_acc = score;
      result.best = result.last;
    }
    persist();
    if (on_epoch) on_epoch(rec);
    if (val_set && tc.stop_at_accuracy > 0.0 && rec.val_accuracy >= tc.stop_at_accuracy) break;
  }
  return result;
}

std::vector<Tensor> infer(const Model& model, const std::vector<Sample>& samples, int batch_clips) {
  NoGradGuard no_grad;
  std::vector<Tensor> out;
  const auto bs = static_cast<size_t>(std::max(1, batch_clips));
  for (size_t i = 0; i < samples.size(); i += bs) {
    std::vector<Sample> batch;
    for (size_t j = i; j < std::min(samples.size(), i + bs); ++j) batch.push_back(normalize_sample(samples[j], model.config()));
    for (const Var& lp : model.forward(batch)) out.push_back(lp.value());
  }
  return out;
}

LabelSequence decode(const Tensor& log_probs, int beam) {
  return beam > 0 ? beam_decode(log_probs, beam) : greedy_decode(log_probs);
}

EvalReport evaluate(const Model& model, const Dataset& data, int beam, int batch_clips) {
  if (data.size() == 0) throw DataError("evaluation set is empty");
  const Alphabet alphabet = model.config().make_alphabet();
  const auto lps = infer(model, data.samples, batch_clips);
  EvalReport report;
  std::vector<LabelPair> pairs;
  for (size_t i = 0; i < data.size(); ++i) {
    const LabelSequence hyp = decode(lps[i], beam);
    const LabelSequence& ref = data.samples[i].label;
    pairs.emplace_back(ref, hyp);
    report.items.push_back({data.ids[i], alphabet.decode(ref), alphabet.decode(hyp), edit_counts(ref, hyp)});
  }
  report.accuracy = corpus_accuracy(pairs);
  report.sample_mean_accuracy = corpus_accuracy_sample_mean(pairs);
  return report;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["letter_accuracy"] = accuracy;
  j["sample_mean_accuracy"] = sample_mean_accuracy;
  EditCounts total;
  for (const auto& it : items) total += it.counts;
  j["substitutions"] = total.substitutions;
  j["deletions"] = total.deletions;
  j["insertions"] = total.insertions;
  j["reference_letters"] = total.reference_length;
  auto& arr = j["samples"] = nlohmann::ordered_json::array();
  for (const auto& it : items) {
    arr.push_back({{"id", it.id},
                   {"reference", it.reference},
                   {"hypothesis", it.hypothesis},
                   {"substitutions", it.counts.substitutions},
                   {"deletions", it.counts.deletions},
                   {"insertions", it.counts.insertions}});
  }
  return j.dump(2) + "\n";
}

std::string predict(const Model& model, const Sample& sample, int beam) {
  const auto lps = infer(model, {sample}, 1);
  return model.config().make_alphabet().decode(decode(lps[0], beam));
}

}  // namespace fsr
