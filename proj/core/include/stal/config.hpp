#pragma once

#include <cstdint>
#include <string>

#include "stal/data.hpp"
#include "stal/model.hpp"
#include "stal/train.hpp"

namespace stal {

// Synthetic-dataset section of the experiment config; expands into one
// SynthConfig per split.
struct SynthSection {
  int train_clips = 64;
  int val_clips = 32;
  int frames = 16;
  int size = 64;
  int min_actors = 1;
  int max_actors = 3;
  std::uint64_t seed = 0;

  data::SynthConfig split(const std::string& name, int clips) const;
  data::SynthConfig train_split() const { return split("train", train_clips); }
  data::SynthConfig val_split() const { return split("val", val_clips); }
};

// Whole-experiment configuration. Every key has a default; unknown keys in
// the JSON file are errors. See README for the schema.
struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  SynthSection synth;
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

// Full JSON (every key explicit); parse_experiment_config round-trips it.
std::string serialize_experiment_config(const ExperimentConfig& config);

}  // namespace stal
