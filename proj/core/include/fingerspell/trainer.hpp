// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fingerspell/checkpoint.hpp"
#include "fingerspell/metrics.hpp"
#include "fingerspell/model.hpp"

namespace fsr {

/// Sanitised samples of one split, in manifest order.
struct Dataset {
  std::vector<std::string> ids;
  std::vector<Sample> samples;

  size_t size() const { return samples.size(); }
};

/// Loads the modalities `cfg` needs for one clip. The path may name either
/// the .kpc or the .frc file; the sibling with the other extension supplies
/// the second stream.
Sample load_sample(const std::filesystem::path& clip, const ModelConfig& cfg);
/// Throws DataError on an empty manifest.
Dataset load_dataset(const std::filesystem::path& manifest, const ModelConfig& cfg);

using EpochCallback = std::function<void(const EpochRecord&)>;

struct TrainResult {
  Checkpoint best;  // highest validation accuracy, latest on ties
  Checkpoint last;
};

/// Runs cfg.train.epochs epochs (fewer with stop_at_accuracy). With a
/// non-empty `out_dir`, best.ckpt, last.ckpt and history.tsv are rewritten
/// after every epoch. Throws DataError on a non-finite loss.
TrainResult train(const RunConfig& cfg, const Dataset& train_set, const Dataset* val_set,
                  const std::filesystem::path& out_dir = {}, const EpochCallback& on_epoch = {});

/// Per-sample log-probabilities; no gradients recorded.
std::vector<Tensor> infer(const Model& model, const std::vector<Sample>& samples, int batch_clips = 8);
/// beam <= 0 decodes greedily.
LabelSequence decode(const Tensor& log_probs, int beam = 0);

struct EvalItem {
  std::string id;
  std::string reference;
  std::string hypothesis;
  EditCounts counts;
};

struct EvalReport {
  double accuracy = 0.0;              // pooled over the corpus
  double sample_mean_accuracy = 0.0;  // mean of per-sample accuracies
  std::vector<EvalItem> items;

  std::string to_json() const;
};

EvalReport evaluate(const Model& model, const Dataset& data, int beam = 0, int batch_clips = 8);
std::string predict(const Model& model, const Sample& sample, int beam = 0);

Model model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace fsr
