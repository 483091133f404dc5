#pragma once

#include <vector>

#include "stal/geometry.hpp"
#include "stal/nn.hpp"
#include "stal/tensor.hpp"

namespace stal {

struct AnchorConfig {
  std::vector<double> scales{0.1, 0.25, 0.5};
  std::vector<double> aspects{0.5, 1.0, 2.0};

  int anchors_per_cell() const {
    return static_cast<int>(scales.size() * aspects.size());
  }
};

// One anchor per (cell, scale, aspect), centered on the cell in normalized
// coordinates and left unclipped. Anchor index for cell (i,j) is
// (i*grid_w + j)*A + scale_index*n_aspects + aspect_index.
std::vector<geom::Box> generate_anchors(int grid_h, int grid_w,
                                        const AnchorConfig& config);

// Region proposal head over the center-frame feature map: a 3x3 conv + ReLU
// trunk with sibling 1x1 convs for objectness (sigmoid) and box deltas.
class RpnHead {
 public:
  // hidden == 0 keeps the trunk width equal to in_channels.
  RpnHead(int in_channels, int anchors_per_cell, int hidden = 0);

  struct Output {
    Tensor scores;  // (B, N) objectness probabilities, N = h*w*A
    Tensor deltas;  // (B, N, 4) box deltas in anchor order
  };

  Output forward(const Tensor& feature_map);  // (B, h, w, c)
  Tensor backward(const Tensor& grad_scores, const Tensor& grad_deltas);
  void collect_params(std::vector<nn::Param*>& out);

 private:
  int anchors_;
  nn::Conv3d conv_;
  nn::ReLU relu_;
  nn::Conv3d score_conv_;
  nn::Conv3d delta_conv_;
  nn::Sigmoid sigmoid_;
  std::vector<int> map_shape_;
};

struct ProposalConfig {
  int pre_nms_top_n = 1000;
  int post_nms_top_n = 300;
  double nms_threshold = 0.7;
};

// Scores/deltas are one batch row (N and N*4 values in anchor order).
// Ranks by score, decodes the surviving anchors, clips to the unit square,
// and applies NMS. Ties rank by lower anchor index.
std::vector<geom::Box> propose(const double* scores, const double* deltas,
                               const std::vector<geom::Box>& anchors,
                               const ProposalConfig& config);

struct RoiRef {
  int batch = 0;
  geom::Box box;
};

// Quantized max pooling of RoIs over every time step of a feature volume.
// Bin edges follow floor(k*extent/pool_size); an empty bin reads the single
// cell at its start edge, and zero-area windows collapse to one cell.
class RoiPool3d {
 public:
  explicit RoiPool3d(int pool_size);

  // volume: (B, T, h, w, c); output: (R, T, P, P, c).
  Tensor forward(const Tensor& volume, const std::vector<RoiRef>& rois);
  // grad_out: (R, T, P, P, c) -> gradient w.r.t. the input volume.
  Tensor backward(const Tensor& grad_out);
  int pool_size() const { return pool_size_; }

 private:
  int pool_size_;
  std::vector<int> argmax_;  // flat input index per output element
  std::vector<int> volume_shape_;
};

struct PostprocessConfig {
  double score_floor = 0.0;
  double nms_threshold = 0.5;
  int max_detections = 300;
};

// Decodes per-RoI boxes, runs per-class NMS, then keeps the global top
// detections by score. cls_probs is (R, C); reg_deltas is (R, 4) when
// class-agnostic, else (R, 4*C) with class c at columns [4c, 4c+4).
std::vector<geom::ScoredBox> postprocess(const std::vector<geom::Box>& proposals,
                                         const Tensor& cls_probs,
                                         const Tensor& reg_deltas,
                                         bool per_class_regression,
                                         const PostprocessConfig& config);

}  // namespace stal
