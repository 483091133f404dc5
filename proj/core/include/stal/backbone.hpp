#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "stal/nn.hpp"
#include "stal/tensor.hpp"

namespace stal {

// One conv stage: conv -> frozen batch norm -> relu -> optional max pool.
// pool == {1,1,1} disables the pooling step.
struct StageSpec {
  int channels = 0;
  std::array<int, 3> kernel{3, 3, 3};
  std::array<int, 3> stride{1, 1, 1};
  std::array<int, 3> pool{1, 1, 1};
  std::array<int, 3> pool_stride{1, 1, 1};

  bool has_pool() const {
    return pool[0] != 1 || pool[1] != 1 || pool[2] != 1 || pool_stride[0] != 1 ||
           pool_stride[1] != 1 || pool_stride[2] != 1;
  }
};

struct BackboneConfig {
  int input_frames = 16;
  int input_size = 64;  // square frames
  int input_channels = 3;
  std::vector<StageSpec> trunk;
  std::vector<StageSpec> head;
  std::vector<StageSpec> context;  // per-frame 2d stack (temporal kernels = 1)

  static BackboneConfig toy_default();

  // Motion-blind variant: temporal kernels and pool windows collapse to 1 and
  // temporal conv strides move onto pool strides, so frames are subsampled but
  // never mixed. Output extents match the original config.
  BackboneConfig to_static() const;

  // Throws std::invalid_argument on inconsistent configs. The temporal-kernel
  // requirement is waived for configs produced by to_static().
  void validate(bool require_temporal_kernel = true) const;

  int temporal_stride() const;
  int spatial_stride() const;
  int trunk_channels() const { return trunk.back().channels; }
  int head_channels() const { return head.back().channels; }
  int context_channels() const { return context.back().channels; }
  // (T', h', w') of the trunk feature volume for the configured input.
  std::array<int, 3> trunk_output_extents() const;
};

// Sequential stack of StageSpec stages with a single forward trace.
class StageStack {
 public:
  StageStack(const std::string& prefix, int in_channels,
             const std::vector<StageSpec>& stages);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);
  void collect_params(std::vector<nn::Param*>& out);
  int out_channels() const { return out_channels_; }

 private:
  struct Stage {
    nn::Conv3d conv;
    nn::FrozenBatchNorm bn;
    nn::ReLU relu;
    std::optional<nn::MaxPool3d> pool;
  };
  std::vector<Stage> stages_;
  int out_channels_ = 0;
};

// Center-frame index of a feature volume with T time steps.
inline int center_frame_index(int t) { return t / 2; }

// (B,T,H,W,C) -> (B,H,W,C) slice at the center frame.
Tensor slice_center_frame(const Tensor& volume);
// Scatter of the slice gradient back into a zero volume of `volume_shape`.
Tensor slice_center_frame_backward(const Tensor& grad_slice,
                                   const std::vector<int>& volume_shape);

// I3D-style backbone: trunk over the clip, RoI head over pooled volumes, and
// an optional global context stack over the center input frame.
class Backbone {
 public:
  Backbone(const BackboneConfig& config, bool use_context);

  // (B,T,H,W,C) clip -> (B,T',h',w',c') feature volume.
  Tensor trunk_forward(const Tensor& clip);
  Tensor trunk_backward(const Tensor& grad_volume);

  // (R,T',P,P,c') pooled RoI volumes -> (R,c'') embeddings.
  Tensor head_forward(const Tensor& roi_volumes);
  Tensor head_backward(const Tensor& grad_embed);

  // (B,1,H,W,C) center frames -> (B,D_ctx) context features.
  Tensor context_forward(const Tensor& frames);
  Tensor context_backward(const Tensor& grad_context);

  void collect_params(std::vector<nn::Param*>& out);
  const BackboneConfig& config() const { return config_; }
  bool has_context() const { return context_.has_value(); }
  int embed_dim() const;  // c'' (+ D_ctx when the context stack is enabled)

 private:
  BackboneConfig config_;
  StageStack trunk_;
  StageStack head_;
  nn::GlobalAvgPool head_pool_;
  std::optional<StageStack> context_;
  nn::GlobalAvgPool context_pool_;
};

}  // namespace stal
