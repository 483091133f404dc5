#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stal/rng.hpp"
#include "stal/tensor.hpp"

namespace stal::nn {

// Named parameter with its gradient accumulator. Frozen parameters keep
// trainable = false; the optimizer skips them but checkpoints include them.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Param() = default;
  Param(std::string n, std::vector<int> shape, bool train = true)
      : name(std::move(n)), value(shape), grad(std::move(shape)), trainable(train) {}
};

// Centered uniform init with scale 1/sqrt(fan_in).
void init_uniform(Param& p, int fan_in, Rng& rng);

enum class Padding { kSame, kValid };

// "same" pads with zeros to ceil(extent/stride) outputs, putting the odd pad
// element on the trailing side. "valid" requires kernel <= extent.
int conv_output_extent(int input, int kernel, int stride, Padding padding);
int conv_pad_lo(int input, int kernel, int stride, Padding padding);

struct Conv3dSpec {
  int in_channels = 0;
  int out_channels = 0;
  std::array<int, 3> kernel{1, 1, 1};  // (kt, kh, kw)
  std::array<int, 3> stride{1, 1, 1};  // (st, sh, sw)
  Padding padding = Padding::kSame;
  bool bias = true;
};

// 3D cross-correlation over (time, height, width) on (B,T,H,W,C) tensors.
// Lowered to a GEMM over an im2col buffer; the buffer doubles as the forward
// trace for the backward pass.
class Conv3d {
 public:
  Conv3d(std::string name, const Conv3dSpec& spec);

  Tensor forward(const Tensor& input);
  // Accumulates kernel/bias grads and returns the input grad.
  Tensor backward(const Tensor& grad_out);

  void collect_params(std::vector<Param*>& out);
  const Conv3dSpec& spec() const { return spec_; }
  std::array<int, 3> output_extents(const std::array<int, 3>& in) const;

 private:
  Conv3dSpec spec_;
  Param kernel_;  // (kt,kh,kw,cin,cout)
  Param bias_;    // (cout)
  std::vector<double> col_;  // (B*OT*OH*OW, kt*kh*kw*cin)
  std::vector<int> in_shape_;
  std::vector<int> out_shape_;
  bool has_trace_ = false;
};

struct MaxPool3dSpec {
  std::array<int, 3> window{1, 1, 1};
  std::array<int, 3> stride{1, 1, 1};
};

// Valid-region max pooling per channel; ties route to the lowest linear index
// so the backward pass is deterministic.
class MaxPool3d {
 public:
  explicit MaxPool3d(const MaxPool3dSpec& spec);

  Tensor forward(const Tensor& input);
  Tensor backward(const Tensor& grad_out);

  const MaxPool3dSpec& spec() const { return spec_; }

 private:
  MaxPool3dSpec spec_;
  std::vector<std::int64_t> argmax_;  // linear index into the input per output
  std::vector<int> in_shape_;
  std::vector<int> out_shape_;
  bool has_trace_ = false;
};

// Batch norm applied as a fixed per-channel affine map from stored statistics;
// no statistic updates ever happen. Channels are the last axis.
class FrozenBatchNorm {
 public:
  FrozenBatchNorm(std::string name, int channels, double eps = 1e-5);

  Tensor forward(const Tensor& input);
  Tensor backward(const Tensor& grad_out);

  void collect_params(std::vector<Param*>& out);
  int channels() const { return channels_; }

 private:
  int channels_;
  double eps_;
  Param scale_, offset_, mean_, var_;
  std::vector<double> a_;  // scale/sqrt(var+eps) captured at forward
  bool has_trace_ = false;
};

class ReLU {
 public:
  Tensor forward(const Tensor& input);
  Tensor backward(const Tensor& grad_out);

 private:
  std::vector<std::uint8_t> mask_;
  bool has_trace_ = false;
};

class Sigmoid {
 public:
  Tensor forward(const Tensor& input);
  Tensor backward(const Tensor& grad_out);

 private:
  Tensor output_;
  bool has_trace_ = false;
};

// Affine map on (N, in) -> (N, out).
class Linear {
 public:
  Linear(std::string name, int in_features, int out_features, bool bias = true);

  Tensor forward(const Tensor& input);
  Tensor backward(const Tensor& grad_out);

  void collect_params(std::vector<Param*>& out);
  int in_features() const { return in_features_; }
  int out_features() const { return out_features_; }

 private:
  int in_features_, out_features_;
  bool has_bias_;
  Param weight_;  // (in, out)
  Param bias_;    // (out)
  Tensor input_;
  bool has_trace_ = false;
};

// Mean over (time, height, width): (N,T,H,W,C) -> (N,C).
class GlobalAvgPool {
 public:
  Tensor forward(const Tensor& input);
  Tensor backward(const Tensor& grad_out);

 private:
  std::vector<int> in_shape_;
  bool has_trace_ = false;
};

}  // namespace stal::nn
