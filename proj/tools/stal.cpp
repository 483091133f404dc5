// Command-line front door: synth / train / infer / eval.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stal/checkpoint.hpp"
#include "stal/config.hpp"
#include "stal/data.hpp"
#include "stal/eval.hpp"
#include "stal/model.hpp"
#include "stal/train.hpp"

namespace fs = std::filesystem;

namespace {

struct TrainFlags {
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  bool no_augment = false;
  bool per_class_regression = false;
  bool static_backbone = false;
  bool use_context = false;
};

stal::ExperimentConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return stal::ExperimentConfig{};
  return stal::load_experiment_config(path);
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

void cmd_synth(const std::string& config_path, const std::string& out_dir) {
  const stal::ExperimentConfig cfg = load_config_or_default(config_path);
  fs::create_directories(out_dir);
  const auto train = stal::data::generate_synthetic(cfg.synth.train_split());
  const auto val = stal::data::generate_synthetic(cfg.synth.val_split());
  stal::data::save_dataset(out_dir, "train", train);
  stal::data::save_dataset(out_dir, "val", val);
  std::printf("wrote %zu train / %zu val clips to %s\n", train.size(), val.size(),
              out_dir.c_str());
}

void apply_train_flags(stal::ExperimentConfig& cfg, const TrainFlags& flags) {
  if (flags.steps) cfg.train.total_steps = *flags.steps;
  if (flags.seed) cfg.train.seed = *flags.seed;
  if (flags.no_augment) cfg.train.augment = false;
  if (flags.per_class_regression) cfg.model.per_class_regression = true;
  if (flags.static_backbone) cfg.model.static_backbone = true;
  if (flags.use_context) cfg.model.use_context = true;
  cfg.model.validate();
  cfg.train.validate();
}

void write_loss_log_file(const std::string& path, const stal::ExperimentConfig& cfg,
                         const std::vector<stal::StepStats>& stats) {
  std::ofstream out = open_output(path);
  char header[256];
  std::snprintf(header, sizeof(header),
                "# stal train seed=%llu steps=%d base_lr=%.17g batch_size=%d "
                "augment=%s per_class_regression=%s static_backbone=%s use_context=%s\n",
                static_cast<unsigned long long>(cfg.train.seed), cfg.train.total_steps,
                cfg.train.base_lr, cfg.train.batch_size,
                cfg.train.augment ? "true" : "false",
                cfg.model.per_class_regression ? "true" : "false",
                cfg.model.static_backbone ? "true" : "false",
                cfg.model.use_context ? "true" : "false");
  out << header;
  stal::write_loss_log(out, stats);
  if (!out) throw std::runtime_error("cannot write " + path);
}

void cmd_train(const std::string& config_path, const std::string& data_dir,
               const std::string& out_checkpoint, const std::string& loss_log,
               const TrainFlags& flags) {
  stal::ExperimentConfig cfg = load_config_or_default(config_path);
  apply_train_flags(cfg, flags);

  const auto samples = stal::data::load_dataset(data_dir, "train");
  if (samples.empty()) throw std::runtime_error("no training clips in " + data_dir);

  stal::ActionDetector model(cfg.model);
  model.init_params(cfg.train.seed);
  const auto stats = stal::train(model, samples, cfg.train);

  if (!out_checkpoint.empty()) {
    stal::nn::save_checkpoint(out_checkpoint, model.params());
    std::ofstream sidecar = open_output(out_checkpoint + ".json");
    sidecar << stal::serialize_experiment_config(cfg);
    if (!sidecar) throw std::runtime_error("cannot write " + out_checkpoint + ".json");
  }
  if (!loss_log.empty()) write_loss_log_file(loss_log, cfg, stats);
  std::printf("final loss %.17g\n", stats.back().total);
}

void cmd_infer(const std::string& checkpoint, const std::string& config_path,
               const std::string& data_dir, const std::string& split,
               const std::string& out_detections) {
  std::string effective_config = config_path;
  if (effective_config.empty() && fs::exists(checkpoint + ".json")) {
    effective_config = checkpoint + ".json";
  }
  const stal::ExperimentConfig cfg = load_config_or_default(effective_config);

  stal::ActionDetector model(cfg.model);
  stal::nn::load_checkpoint(checkpoint, model.params());

  const auto samples = stal::data::load_dataset(data_dir, split);
  std::vector<stal::data::DetectionRow> rows;
  for (const auto& sample : samples) {
    const auto& s = sample.clip.shape();
    const stal::Tensor batch = sample.clip.reshaped({1, s[0], s[1], s[2], s[3]});
    const auto detections = model.infer(batch);
    for (const auto& det : detections[0]) {
      rows.push_back({sample.video_id, sample.timestamp, det.box, det.class_id, det.score});
    }
  }
  stal::data::save_detections_csv(out_detections, std::move(rows));
  std::printf("wrote detections for %zu keyframes to %s\n", samples.size(),
              out_detections.c_str());
}

void cmd_eval(const std::string& detections, const std::string& groundtruth,
              const std::string& report) {
  const auto gt = stal::data::load_groundtruth_csv(groundtruth);
  const auto dets = stal::data::load_detections_csv(detections);
  const stal::eval::EvalReport result = stal::eval::evaluate(gt, dets);
  if (!report.empty()) {
    std::ofstream out = open_output(report);
    stal::eval::write_report_csv(out, result);
    if (!out) throw std::runtime_error("cannot write " + report);
  }
  std::printf("mAP=%.6f\n", result.mean_ap);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatiotemporal action detection on synthetic clips"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  auto* synth = app.add_subcommand("synth", "generate train/val synthetic datasets");
  synth->add_option("--config", config_path, "experiment config JSON");
  synth->add_option("--out-dir", out_dir, "output dataset directory")->required();

  std::string data_dir;
  std::string out_checkpoint;
  std::string loss_log;
  TrainFlags flags;
  int steps_value = 0;
  std::uint64_t seed_value = 0;
  auto* train = app.add_subcommand("train", "train a model on a synthesized dataset");
  train->add_option("--config", config_path, "experiment config JSON");
  train->add_option("--data-dir", data_dir, "dataset directory")->required();
  train->add_option("--out-checkpoint", out_checkpoint, "checkpoint output path");
  train->add_option("--loss-log", loss_log, "loss CSV output path");
  auto* steps_opt = train->add_option("--steps", steps_value, "override train.total_steps");
  auto* seed_opt = train->add_option("--seed", seed_value, "override train.seed");
  train->add_flag("--no-augment", flags.no_augment, "disable augmentation");
  train->add_flag("--per-class-regression", flags.per_class_regression,
                  "per-class box regression (ablation)");
  train->add_flag("--static-backbone", flags.static_backbone,
                  "collapse temporal kernels (ablation)");
  train->add_flag("--use-context", flags.use_context, "enable the context stack");

  std::string checkpoint;
  std::string split = "val";
  std::string out_detections;
  auto* infer = app.add_subcommand("infer", "run inference over a dataset split");
  infer->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  infer->add_option("--config", config_path,
                    "experiment config JSON (default: <checkpoint>.json)");
  infer->add_option("--data-dir", data_dir, "dataset directory")->required();
  infer->add_option("--split", split, "dataset split (default val)");
  infer->add_option("--out-detections", out_detections, "detections CSV path")->required();

  std::string detections;
  std::string groundtruth;
  std::string report;
  auto* eval = app.add_subcommand("eval", "score detections against ground truth");
  eval->add_option("--detections", detections, "detections CSV")->required();
  eval->add_option("--groundtruth", groundtruth, "ground-truth CSV")->required();
  eval->add_option("--report", report, "per-class report CSV output path");

  try {
    app.parse(argc, argv);
    if (steps_opt->count() > 0) flags.steps = steps_value;
    if (seed_opt->count() > 0) flags.seed = seed_value;
    if (synth->parsed()) cmd_synth(config_path, out_dir);
    if (train->parsed()) cmd_train(config_path, data_dir, out_checkpoint, loss_log, flags);
    if (infer->parsed()) cmd_infer(checkpoint, config_path, data_dir, split, out_detections);
    if (eval->parsed()) cmd_eval(detections, groundtruth, report);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "stal: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
