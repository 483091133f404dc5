#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "stal/geometry.hpp"
#include "stal/rng.hpp"
#include "stal/tensor.hpp"

namespace stal::data {

// One ground-truth box with its (multi-label) action set.
struct Annotation {
  geom::Box box;
  std::vector<int> actions;  // sorted, unique
  int person_id = -1;
};

struct ClipSample {
  std::string video_id;
  int timestamp = 0;
  Tensor clip;  // (T, H, W, C) in [0, 1]
  std::vector<Annotation> boxes;
};

// Action classes of the synthetic motion dataset.
enum SynthAction : int {
  kActionStatic = 0,
  kActionMoveRight = 1,
  kActionMoveLeft = 2,
  kActionExpand = 3,
};

struct SynthConfig {
  int num_clips = 64;
  int frames = 16;
  int size = 64;
  int min_actors = 1;
  int max_actors = 3;
  std::uint64_t seed = 0;
  std::string split = "train";  // video-id prefix
};

// Colored rectangles on a dim static noise background. Actor motion is
// pixel-quantized and trajectories never overlap, so ground-truth boxes
// align exactly with the rendered rectangles. Annotations describe the
// center frame; timestamps follow the AVA convention (900 + offset).
std::vector<ClipSample> generate_synthetic(const SynthConfig& config);

// --- AVA-style CSV rows -----------------------------------------------------

struct DetectionRow {
  std::string video_id;
  int timestamp = 0;
  geom::Box box;
  int action_id = 0;
  double score = 0.0;
};

// Ground truth merged per (video, timestamp, box): rows whose coordinates
// agree within 1e-6 fold their action ids into one annotation.
struct GroundTruthBox {
  std::string video_id;
  int timestamp = 0;
  Annotation annotation;
};

// `video_id,timestamp,x1,y1,x2,y2,action_id[,person_id]`. Malformed input
// raises std::runtime_error naming the line number.
std::vector<GroundTruthBox> parse_groundtruth_csv(std::istream& in);
std::vector<GroundTruthBox> load_groundtruth_csv(const std::string& path);
// One row per (box, action); floats use 6 decimals.
void write_groundtruth_csv(std::ostream& out, const std::vector<ClipSample>& samples);

// `video_id,timestamp,x1,y1,x2,y2,action_id,score`, 6-decimal floats,
// sorted by (video_id, timestamp, score desc).
void write_detections_csv(std::ostream& out, std::vector<DetectionRow> rows);
std::vector<DetectionRow> parse_detections_csv(std::istream& in);
std::vector<DetectionRow> load_detections_csv(const std::string& path);
void save_detections_csv(const std::string& path, std::vector<DetectionRow> rows);

// --- dataset container ------------------------------------------------------

// Clips live in `<dir>/<split>.stlc` under names "<video_id>/<timestamp>";
// boxes live in `<dir>/<split>_gt.csv`.
void save_dataset(const std::string& dir, const std::string& split,
                  const std::vector<ClipSample>& samples);
std::vector<ClipSample> load_dataset(const std::string& dir, const std::string& split);

// --- augmentation -----------------------------------------------------------

struct AugmentConfig {
  double flip_prob = 0.5;
  double min_crop_scale = 0.7;  // square crop side, fraction of the frame
  int crop_retries = 10;
};

// Horizontal flip (swapping the move-right/move-left labels) followed by a
// random square crop resized back with nearest-neighbor sampling. Boxes that
// keep less than a quarter of their area are dropped; if a crop would drop
// every box it is retried, then skipped.
ClipSample augment_sample(const ClipSample& sample, const AugmentConfig& config,
                          Rng& rng);

}  // namespace stal::data
