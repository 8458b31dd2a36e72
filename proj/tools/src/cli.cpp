// SPDX-License-Identifier: Apache-2.0
#include "fingerspell_cli/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <optional>

#include "fingerspell/config.hpp"
#include "fingerspell/error.hpp"
#include "fingerspell/synthgen.hpp"
#include "fingerspell/trainer.hpp"

namespace fsr::cli {

namespace {

namespace fs = std::filesystem;

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

int cmd_train(const fs::path& config, const fs::path& train_manifest, const std::optional<fs::path>& val_manifest,
              const fs::path& out_dir, std::optional<uint64_t> seed, std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_config(config);
  if (seed) cfg.train.seed = *seed;
  const Dataset train_set = load_dataset(train_manifest, cfg.model);
  std::optional<Dataset> val_set;
  if (val_manifest) val_set = load_dataset(*val_manifest, cfg.model);
  err << "training " << to_string(cfg.model.modality) << " model on " << train_set.size() << " clips for "
      << cfg.train.epochs << " epochs\n";
  const auto result = train(cfg, train_set, val_set ? &*val_set : nullptr, out_dir, [&](const EpochRecord& r) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %3d  lr %.3g  train_loss %.5f  val_accuracy %.4f\n", r.epoch, r.lr,
                  r.train_loss, r.val_accuracy);
    err << line << std::flush;
  });
  out << (out_dir / "best.ckpt").string() << "\n";
  if (!result.best.history.empty()) {
    err << "best epoch " << result.best.epoch << " val_accuracy " << result.best.history.back().val_accuracy << "\n";
  }
  return kExitOk;
}

int cmd_evaluate(const fs::path& ckpt_path, const fs::path& manifest, int beam, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Model model = model_from_checkpoint(ckpt);
  const Dataset data = load_dataset(manifest, model.config());
  out << evaluate(model, data, beam).to_json();
  return kExitOk;
}

int cmd_predict(const fs::path& ckpt_path, const fs::path& input, int beam, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Model model = model_from_checkpoint(ckpt);
  out << quoted(predict(model, load_sample(input, model.config()), beam)) << "\n";
  return kExitOk;
}

int cmd_synth(const fs::path& config, const fs::path& out_dir, std::optional<uint64_t> seed, std::ostream& out) {
  RunConfig cfg = load_config(config);
  if (seed) cfg.synth.data.seed = *seed;
  const auto splits = generate_dataset(cfg.synth.data, cfg.synth.n_train, cfg.synth.n_test, out_dir, cfg.synth.n_val);
  out << splits.train.string() << "\n";
  if (!splits.val.empty()) out << splits.val.string() << "\n";
  out << splits.test.string() << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fingerspelling recognition: train, evaluate, predict and generate synthetic data"};
  app.require_subcommand(1);
  std::optional<uint64_t> seed;

  fs::path config, train_manifest, out_dir, checkpoint, manifest, input;
  std::optional<fs::path> val_manifest;
  int beam = 0;

  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", seed, "Root seed; overrides the config file"); };

  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoints");
  train_cmd->add_option("--config", config, "Run configuration")->required();
  train_cmd->add_option("--train-manifest", train_manifest, "Training manifest")->required();
  train_cmd->add_option("--val-manifest", val_manifest, "Validation manifest used for model selection");
  train_cmd->add_option("--out", out_dir, "Output directory")->required();
  add_seed(train_cmd);

  auto* eval_cmd = app.add_subcommand("evaluate", "Letter accuracy of a checkpoint on a manifest (JSON report)");
  eval_cmd->add_option("--checkpoint", checkpoint)->required();
  eval_cmd->add_option("--manifest", manifest)->required();
  eval_cmd->add_option("--beam", beam, "Prefix beam width; greedy decoding when omitted")->check(CLI::PositiveNumber);
  add_seed(eval_cmd);

  auto* predict_cmd = app.add_subcommand("predict", "Decode a single clip");
  predict_cmd->add_option("--checkpoint", checkpoint)->required();
  predict_cmd->add_option("--input", input, "Keypoint (.kpc) or frame (.frc) clip")->required();
  predict_cmd->add_option("--beam", beam)->check(CLI::PositiveNumber);
  add_seed(predict_cmd);

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic fingerspelling dataset");
  synth_cmd->add_option("--config", config, "Run configuration (synth.* keys)")->required();
  synth_cmd->add_option("--out", out_dir)->required();
  add_seed(synth_cmd);

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(config, train_manifest, val_manifest, out_dir, seed, out, err);
    if (eval_cmd->parsed()) return cmd_evaluate(checkpoint, manifest, beam, out);
    if (predict_cmd->parsed()) return cmd_predict(checkpoint, input, beam, out);
    if (synth_cmd->parsed()) return cmd_synth(config, out_dir, seed, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitConfig;
}

}  // namespace fsr::cli
