#include "stal/backbone.hpp"

#include <cstring>
#include <stdexcept>
#include <string>

namespace stal {
namespace {

std::string stage_name(const std::string& prefix, int index) {
  return prefix + ".stage" + std::to_string(index);
}

nn::Conv3dSpec conv_spec(int in_channels, const StageSpec& s) {
  nn::Conv3dSpec spec;
  spec.in_channels = in_channels;
  spec.out_channels = s.channels;
  spec.kernel = s.kernel;
  spec.stride = s.stride;
  spec.padding = nn::Padding::kSame;
  spec.bias = false;  // frozen bn supplies the shift
  return spec;
}

nn::MaxPool3dSpec pool_spec(const StageSpec& s) {
  nn::MaxPool3dSpec spec;
  spec.window = s.pool;
  spec.stride = s.pool_stride;
  return spec;
}

}  // namespace

BackboneConfig BackboneConfig::toy_default() {
  BackboneConfig c;
  c.input_frames = 16;
  c.input_size = 64;
  c.input_channels = 3;
  c.trunk = {
      {8, {3, 3, 3}, {2, 2, 2}},
      {16, {3, 3, 3}, {2, 2, 2}},
      {32, {3, 3, 3}, {1, 2, 2}},
      {64, {3, 3, 3}, {1, 1, 1}},
  };
  c.head = {
      {32, {3, 3, 3}, {2, 2, 2}},
      {128, {1, 3, 3}, {1, 1, 1}},
  };
  c.context = {
      {8, {1, 3, 3}, {1, 2, 2}},
      {16, {1, 3, 3}, {1, 2, 2}},
      {32, {1, 3, 3}, {1, 2, 2}},
  };
  return c;
}

BackboneConfig BackboneConfig::to_static() const {
  // Motion-blind control: no layer may mix frames. Temporal kernels and pool
  // windows collapse to 1; temporal strides stay, so the time axis is
  // subsampled instead of aggregated and every activation depends on exactly
  // one input frame.
  BackboneConfig c = *this;
  for (auto* stages : {&c.trunk, &c.head}) {
    for (StageSpec& s : *stages) {
      s.kernel[0] = 1;
      s.pool[0] = 1;  // a one-frame window never mixes frames
      s.pool_stride[0] *= s.stride[0];
      s.stride[0] = 1;
    }
  }
  return c;
}

void BackboneConfig::validate(bool require_temporal_kernel) const {
  auto check_stage = [](const std::string& where, const StageSpec& s) {
    if (s.channels <= 0) {
      throw std::invalid_argument(where + ": channels must be positive");
    }
    for (int d = 0; d < 3; ++d) {
      if (s.kernel[d] <= 0 || s.stride[d] <= 0 || s.pool[d] <= 0 ||
          s.pool_stride[d] <= 0) {
        throw std::invalid_argument(where + ": extents must be positive");
      }
    }
  };
  if (input_frames <= 0 || input_size <= 0 || input_channels <= 0) {
    throw std::invalid_argument("backbone config: input extents must be positive");
  }
  if (trunk.empty() || head.empty()) {
    throw std::invalid_argument("backbone config: trunk and head must be non-empty");
  }
  int index = 0;
  for (const StageSpec& s : trunk) check_stage(stage_name("trunk", index++), s);
  index = 0;
  for (const StageSpec& s : head) check_stage(stage_name("head", index++), s);
  index = 0;
  for (const StageSpec& s : context) {
    const std::string where = stage_name("context", index++);
    check_stage(where, s);
    if (s.kernel[0] != 1 || s.stride[0] != 1 || s.pool[0] != 1 ||
        s.pool_stride[0] != 1) {
      throw std::invalid_argument(where + ": context stages must be temporally flat");
    }
  }
  if (input_frames % temporal_stride() != 0) {
    throw std::invalid_argument(
        "backbone config: input_frames must be divisible by the temporal stride " +
        std::to_string(temporal_stride()));
  }
  if (input_size % spatial_stride() != 0) {
    throw std::invalid_argument(
        "backbone config: input_size must be divisible by the spatial stride " +
        std::to_string(spatial_stride()));
  }
  if (require_temporal_kernel) {
    bool has_temporal = false;
    for (const StageSpec& s : trunk) has_temporal |= s.kernel[0] > 1;
    if (!has_temporal) {
      throw std::invalid_argument(
          "backbone config: trunk needs a temporal kernel extent > 1");
    }
  }
}

int BackboneConfig::temporal_stride() const {
  int stride = 1;
  for (const StageSpec& s : trunk) stride *= s.stride[0] * s.pool_stride[0];
  return stride;
}

int BackboneConfig::spatial_stride() const {
  int stride = 1;
  for (const StageSpec& s : trunk) stride *= s.stride[1] * s.pool_stride[1];
  return stride;
}

std::array<int, 3> BackboneConfig::trunk_output_extents() const {
  return {input_frames / temporal_stride(), input_size / spatial_stride(),
          input_size / spatial_stride()};
}

StageStack::StageStack(const std::string& prefix, int in_channels,
                       const std::vector<StageSpec>& stages) {
  int channels = in_channels;
  stages_.reserve(stages.size());
  for (size_t i = 0; i < stages.size(); ++i) {
    const StageSpec& s = stages[i];
    const std::string name = stage_name(prefix, static_cast<int>(i));
    Stage stage{nn::Conv3d(name + ".conv", conv_spec(channels, s)),
                nn::FrozenBatchNorm(name + ".bn", s.channels), nn::ReLU{},
                std::nullopt};
    if (s.has_pool()) stage.pool.emplace(pool_spec(s));
    stages_.push_back(std::move(stage));
    channels = s.channels;
  }
  out_channels_ = channels;
}

Tensor StageStack::forward(const Tensor& x) {
  Tensor y = x;
  for (Stage& s : stages_) {
    y = s.conv.forward(y);
    y = s.bn.forward(y);
    y = s.relu.forward(y);
    if (s.pool) y = s.pool->forward(y);
  }
  return y;
}

Tensor StageStack::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) {
    if (it->pool) g = it->pool->backward(g);
    g = it->relu.backward(g);
    g = it->bn.backward(g);
    g = it->conv.backward(g);
  }
  return g;
}

void StageStack::collect_params(std::vector<nn::Param*>& out) {
  for (Stage& s : stages_) {
    s.conv.collect_params(out);
    s.bn.collect_params(out);
  }
}

Tensor slice_center_frame(const Tensor& volume) {
  if (volume.rank() != 5) {
    throw std::invalid_argument("slice_center_frame expects a rank-5 volume");
  }
  const int b = volume.dim(0), t = volume.dim(1), h = volume.dim(2),
            w = volume.dim(3), c = volume.dim(4);
  const int tc = center_frame_index(t);
  Tensor slice({b, h, w, c});
  const int frame = h * w * c;
  for (int n = 0; n < b; ++n) {
    std::memcpy(slice.data() + static_cast<size_t>(n) * frame,
                volume.data() + (static_cast<size_t>(n) * t + tc) * frame,
                sizeof(double) * frame);
  }
  return slice;
}

Tensor slice_center_frame_backward(const Tensor& grad_slice,
                                   const std::vector<int>& volume_shape) {
  if (volume_shape.size() != 5) {
    throw std::invalid_argument("slice_center_frame_backward expects a rank-5 shape");
  }
  Tensor grad(volume_shape);
  const int b = volume_shape[0], t = volume_shape[1];
  const int frame = volume_shape[2] * volume_shape[3] * volume_shape[4];
  if (grad_slice.size() != static_cast<size_t>(b) * frame) {
    throw std::invalid_argument("slice gradient does not match the volume shape");
  }
  const int tc = center_frame_index(t);
  for (int n = 0; n < b; ++n) {
    std::memcpy(grad.data() + (static_cast<size_t>(n) * t + tc) * frame,
                grad_slice.data() + static_cast<size_t>(n) * frame,
                sizeof(double) * frame);
  }
  return grad;
}

namespace {
const BackboneConfig& checked(const BackboneConfig& config) {
  // Structural checks only; static configs are legal here, so the
  // temporal-kernel requirement stays with ModelConfig::validate.
  config.validate(false);
  return config;
}
}  // namespace

Backbone::Backbone(const BackboneConfig& config, bool use_context)
    : config_(checked(config)),
      trunk_("trunk", config.input_channels, config.trunk),
      head_("head", config.trunk.back().channels, config.head) {
  if (use_context) {
    context_.emplace("context", config.input_channels, config.context);
  }
}

Tensor Backbone::trunk_forward(const Tensor& clip) { return trunk_.forward(clip); }

Tensor Backbone::trunk_backward(const Tensor& grad_volume) {
  return trunk_.backward(grad_volume);
}

Tensor Backbone::head_forward(const Tensor& roi_volumes) {
  return head_pool_.forward(head_.forward(roi_volumes));
}

Tensor Backbone::head_backward(const Tensor& grad_embed) {
  return head_.backward(head_pool_.backward(grad_embed));
}

Tensor Backbone::context_forward(const Tensor& frames) {
  if (!context_) throw std::logic_error("context stack is disabled");
  return context_pool_.forward(context_->forward(frames));
}

Tensor Backbone::context_backward(const Tensor& grad_context) {
  if (!context_) throw std::logic_error("context stack is disabled");
  return context_->backward(context_pool_.backward(grad_context));
}

void Backbone::collect_params(std::vector<nn::Param*>& out) {
  trunk_.collect_params(out);
  head_.collect_params(out);
  if (context_) context_->collect_params(out);
}

int Backbone::embed_dim() const {
  int dim = config_.head_channels();
  if (context_) dim += config_.context_channels();
  return dim;
}

}  // namespace stal
