#pragma once

#include <cstdint>
#include <vector>

#include "stal/backbone.hpp"
#include "stal/detection.hpp"
#include "stal/geometry.hpp"
#include "stal/nn.hpp"
#include "stal/tensor.hpp"

namespace stal {

struct ModelConfig {
  BackboneConfig backbone = BackboneConfig::toy_default();
  AnchorConfig anchors;
  ProposalConfig proposals;
  PostprocessConfig postprocess;
  int num_classes = 4;
  int pool_size = 4;
  int rpn_hidden = 0;  // 0 -> match the trunk feature width
  bool per_class_regression = false;
  bool use_context = false;
  bool static_backbone = false;  // collapse temporal kernels (ablation)

  int reg_columns() const { return per_class_regression ? 4 * num_classes : 4; }

  // Throws std::invalid_argument on inconsistent settings (static_backbone is
  // folded in first, as ActionDetector would).
  void validate() const;
};

// Action detector: 3d-conv trunk over the clip, RPN on the center-frame
// feature slice, RoI head over per-timestep pooled volumes, and sigmoid
// multi-label classification with box regression.
class ActionDetector {
 public:
  explicit ActionDetector(const ModelConfig& config);

  // Effective config; static_backbone has already been folded in.
  const ModelConfig& config() const { return config_; }
  const std::vector<geom::Box>& anchors() const { return anchors_; }

  // Stable parameter registry: trunk, head, context, rpn, cls/reg heads.
  std::vector<nn::Param*> params();
  // U[-1/sqrt(fan_in), 1/sqrt(fan_in)] weights, zero biases. Every parameter
  // draws from its own name-derived stream, so width changes in one head do
  // not shift the values of any other parameter.
  void init_params(std::uint64_t seed);
  void zero_grads();

  Backbone& backbone() { return backbone_; }
  RpnHead& rpn() { return rpn_; }
  RoiPool3d& roi_pool() { return roi_pool_; }

  struct HeadOutput {
    Tensor probs;  // (R, C) sigmoid class probabilities
    Tensor reg;    // (R, reg_columns())
  };
  // embed: (R, c'') RoI embeddings. When the context stack is enabled,
  // context must be the (B, D_ctx) features and roi_batch maps each RoI row
  // to its clip; both are ignored otherwise.
  HeadOutput heads_forward(const Tensor& embed, const Tensor* context,
                           const std::vector<int>& roi_batch);
  struct HeadGrads {
    Tensor grad_embed;    // (R, c'')
    Tensor grad_context;  // (B, D_ctx); rank 0 stand-in when context is off
  };
  HeadGrads heads_backward(const Tensor& grad_probs, const Tensor& grad_reg);

  // Per-clip proposals from one RPN output batch.
  std::vector<std::vector<geom::Box>> propose_batch(const RpnHead::Output& rpn_out) const;

  // Full pipeline on (B,T,H,W,C) clips; per-clip detections sorted by
  // descending score.
  std::vector<std::vector<geom::ScoredBox>> infer(const Tensor& clips);

 private:
  ModelConfig config_;
  Backbone backbone_;
  RpnHead rpn_;
  RoiPool3d roi_pool_;
  nn::Linear cls_head_;
  nn::Linear reg_head_;
  nn::Sigmoid cls_sigmoid_;
  std::vector<geom::Box> anchors_;
  std::vector<int> roi_batch_;  // trace for heads_backward
  int context_rows_ = 0;
};

}  // namespace stal
