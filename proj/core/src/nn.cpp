#include "stal/nn.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace stal::nn {

namespace {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

const char* axis_name(int axis) {
  switch (axis) {
    case 0: return "time";
    case 1: return "height";
    default: return "width";
  }
}

void require_trace(bool has_trace, const char* layer) {
  if (!has_trace) {
    throw std::logic_error(std::string(layer) + ": backward without a matching forward trace");
  }
}

}  // namespace

void init_uniform(Param& p, int fan_in, Rng& rng) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < p.value.size(); ++i) {
    p.value[i] = rng.uniform(-scale, scale);
  }
}

int conv_output_extent(int input, int kernel, int stride, Padding padding) {
  if (padding == Padding::kSame) return (input + stride - 1) / stride;
  return (input - kernel) / stride + 1;
}

int conv_pad_lo(int input, int kernel, int stride, Padding padding) {
  if (padding == Padding::kValid) return 0;
  const int out = conv_output_extent(input, kernel, stride, padding);
  const int pad_total = std::max((out - 1) * stride + kernel - input, 0);
  return pad_total / 2;  // odd pad goes to the trailing side
}

// ---------------------------------------------------------------------------
// Conv3d

Conv3d::Conv3d(std::string name, const Conv3dSpec& spec)
    : spec_(spec),
      kernel_(name + "/kernel",
              {spec.kernel[0], spec.kernel[1], spec.kernel[2], spec.in_channels,
               spec.out_channels}),
      bias_(name + "/bias", {spec.out_channels}) {
  if (spec.in_channels <= 0 || spec.out_channels <= 0) {
    throw std::invalid_argument("conv3d: channel counts must be positive");
  }
  for (int a = 0; a < 3; ++a) {
    if (spec.kernel[static_cast<std::size_t>(a)] <= 0 ||
        spec.stride[static_cast<std::size_t>(a)] <= 0) {
      throw std::invalid_argument(std::string("conv3d: non-positive kernel or stride on ") +
                                  axis_name(a) + " axis");
    }
  }
}

std::array<int, 3> Conv3d::output_extents(const std::array<int, 3>& in) const {
  std::array<int, 3> out{};
  for (int a = 0; a < 3; ++a) {
    const auto i = static_cast<std::size_t>(a);
    if (spec_.padding == Padding::kValid && spec_.kernel[i] > in[i]) {
      throw std::invalid_argument(std::string("conv3d: kernel exceeds input on ") + axis_name(a) +
                                  " axis under valid padding");
    }
    out[i] = conv_output_extent(in[i], spec_.kernel[i], spec_.stride[i], spec_.padding);
  }
  return out;
}

Tensor Conv3d::forward(const Tensor& input) {
  if (input.rank() != 5) throw std::invalid_argument("conv3d: expected rank-5 input");
  if (input.dim(4) != spec_.in_channels) {
    throw std::invalid_argument("conv3d: channel axis mismatch: got " +
                                std::to_string(input.dim(4)) + ", expected " +
                                std::to_string(spec_.in_channels));
  }
  const int B = input.dim(0);
  const std::array<int, 3> in{input.dim(1), input.dim(2), input.dim(3)};
  const std::array<int, 3> out = output_extents(in);
  const int C = spec_.in_channels;
  const int Cout = spec_.out_channels;
  const auto [KT, KH, KW] = spec_.kernel;
  const auto [ST, SH, SW] = spec_.stride;
  const int pt = conv_pad_lo(in[0], KT, ST, spec_.padding);
  const int ph = conv_pad_lo(in[1], KH, SH, spec_.padding);
  const int pw = conv_pad_lo(in[2], KW, SW, spec_.padding);

  const std::int64_t rows = static_cast<std::int64_t>(B) * out[0] * out[1] * out[2];
  const std::int64_t cols = static_cast<std::int64_t>(KT) * KH * KW * C;
  col_.assign(static_cast<std::size_t>(rows * cols), 0.0);

  const double* x = input.data();
  const std::int64_t in_w_stride = C;
  const std::int64_t in_h_stride = static_cast<std::int64_t>(in[2]) * C;
  const std::int64_t in_t_stride = static_cast<std::int64_t>(in[1]) * in_h_stride;
  const std::int64_t in_b_stride = static_cast<std::int64_t>(in[0]) * in_t_stride;

  std::int64_t row = 0;
  for (int b = 0; b < B; ++b) {
    const double* xb = x + b * in_b_stride;
    for (int ot = 0; ot < out[0]; ++ot) {
      const int t0 = ot * ST - pt;
      for (int oh = 0; oh < out[1]; ++oh) {
        const int h0 = oh * SH - ph;
        for (int ow = 0; ow < out[2]; ++ow, ++row) {
          const int w0 = ow * SW - pw;
          double* dst = col_.data() + row * cols;
          for (int kt = 0; kt < KT; ++kt) {
            const int t = t0 + kt;
            if (t < 0 || t >= in[0]) {
              dst += static_cast<std::int64_t>(KH) * KW * C;
              continue;
            }
            for (int kh = 0; kh < KH; ++kh) {
              const int h = h0 + kh;
              if (h < 0 || h >= in[1]) {
                dst += static_cast<std::int64_t>(KW) * C;
                continue;
              }
              const double* src_row = xb + t * in_t_stride + h * in_h_stride;
              for (int kw = 0; kw < KW; ++kw, dst += C) {
                const int w = w0 + kw;
                if (w < 0 || w >= in[2]) continue;
                std::memcpy(dst, src_row + w * in_w_stride,
                            static_cast<std::size_t>(C) * sizeof(double));
              }
            }
          }
        }
      }
    }
  }

  Tensor output({B, out[0], out[1], out[2], Cout});
  ConstMapRM col_m(col_.data(), rows, cols);
  ConstMapRM w_m(kernel_.value.data(), cols, Cout);
  MapRM out_m(output.data(), rows, Cout);
  out_m.noalias() = col_m * w_m;
  if (spec_.bias) {
    ConstMapRM b_m(bias_.value.data(), 1, Cout);
    out_m.rowwise() += b_m.row(0);
  }

  in_shape_ = input.shape();
  out_shape_ = output.shape();
  has_trace_ = true;
  return output;
}

Tensor Conv3d::backward(const Tensor& grad_out) {
  require_trace(has_trace_, "conv3d");
  has_trace_ = false;
  if (grad_out.shape() != out_shape_) {
    throw std::invalid_argument("conv3d: upstream grad shape " + grad_out.shape_str() +
                                " does not match forward output");
  }
  const int B = in_shape_[0];
  const std::array<int, 3> in{in_shape_[1], in_shape_[2], in_shape_[3]};
  const std::array<int, 3> out{out_shape_[1], out_shape_[2], out_shape_[3]};
  const int C = spec_.in_channels;
  const int Cout = spec_.out_channels;
  const auto [KT, KH, KW] = spec_.kernel;
  const auto [ST, SH, SW] = spec_.stride;
  const int pt = conv_pad_lo(in[0], KT, ST, spec_.padding);
  const int ph = conv_pad_lo(in[1], KH, SH, spec_.padding);
  const int pw = conv_pad_lo(in[2], KW, SW, spec_.padding);

  const std::int64_t rows = static_cast<std::int64_t>(B) * out[0] * out[1] * out[2];
  const std::int64_t cols = static_cast<std::int64_t>(KT) * KH * KW * C;

  ConstMapRM gout_m(grad_out.data(), rows, Cout);
  ConstMapRM col_m(col_.data(), rows, cols);
  MapRM gw_m(kernel_.grad.data(), cols, Cout);
  gw_m.noalias() += col_m.transpose() * gout_m;
  if (spec_.bias) {
    MapRM gb_m(bias_.grad.data(), 1, Cout);
    gb_m.row(0) += gout_m.colwise().sum();
  }

  // dcol = gout * W^T, then scatter back to the input layout.
  MatrixRM dcol(rows, cols);
  ConstMapRM w_m(kernel_.value.data(), cols, Cout);
  dcol.noalias() = gout_m * w_m.transpose();

  Tensor grad_in(in_shape_);
  double* gx = grad_in.data();
  const std::int64_t in_w_stride = C;
  const std::int64_t in_h_stride = static_cast<std::int64_t>(in[2]) * C;
  const std::int64_t in_t_stride = static_cast<std::int64_t>(in[1]) * in_h_stride;
  const std::int64_t in_b_stride = static_cast<std::int64_t>(in[0]) * in_t_stride;

  std::int64_t row = 0;
  for (int b = 0; b < B; ++b) {
    double* gxb = gx + b * in_b_stride;
    for (int ot = 0; ot < out[0]; ++ot) {
      const int t0 = ot * ST - pt;
      for (int oh = 0; oh < out[1]; ++oh) {
        const int h0 = oh * SH - ph;
        for (int ow = 0; ow < out[2]; ++ow, ++row) {
          const int w0 = ow * SW - pw;
          const double* src = dcol.data() + row * cols;
          for (int kt = 0; kt < KT; ++kt) {
            const int t = t0 + kt;
            if (t < 0 || t >= in[0]) {
              src += static_cast<std::int64_t>(KH) * KW * C;
              continue;
            }
            for (int kh = 0; kh < KH; ++kh) {
              const int h = h0 + kh;
              if (h < 0 || h >= in[1]) {
                src += static_cast<std::int64_t>(KW) * C;
                continue;
              }
              double* dst_row = gxb + t * in_t_stride + h * in_h_stride;
              for (int kw = 0; kw < KW; ++kw, src += C) {
                const int w = w0 + kw;
                if (w < 0 || w >= in[2]) continue;
                double* dst = dst_row + w * in_w_stride;
                for (int c = 0; c < C; ++c) dst[c] += src[c];
              }
            }
          }
        }
      }
    }
  }
  col_.clear();
  col_.shrink_to_fit();
  return grad_in;
}

void Conv3d::collect_params(std::vector<Param*>& out) {
  out.push_back(&kernel_);
  if (spec_.bias) out.push_back(&bias_);
}

// ---------------------------------------------------------------------------
// MaxPool3d

MaxPool3d::MaxPool3d(const MaxPool3dSpec& spec) : spec_(spec) {
  for (int a = 0; a < 3; ++a) {
    const auto i = static_cast<std::size_t>(a);
    if (spec.window[i] <= 0) {
      throw std::invalid_argument(std::string("maxpool3d: zero-extent window on ") + axis_name(a) +
                                  " axis");
    }
    if (spec.stride[i] <= 0) {
      throw std::invalid_argument(std::string("maxpool3d: non-positive stride on ") +
                                  axis_name(a) + " axis");
    }
  }
}

Tensor MaxPool3d::forward(const Tensor& input) {
  if (input.rank() != 5) throw std::invalid_argument("maxpool3d: expected rank-5 input");
  const int B = input.dim(0), C = input.dim(4);
  const std::array<int, 3> in{input.dim(1), input.dim(2), input.dim(3)};
  std::array<int, 3> out{};
  for (int a = 0; a < 3; ++a) {
    const auto i = static_cast<std::size_t>(a);
    if (spec_.window[i] > in[i]) {
      throw std::invalid_argument(std::string("maxpool3d: window exceeds input on ") +
                                  axis_name(a) + " axis");
    }
    out[i] = (in[i] - spec_.window[i]) / spec_.stride[i] + 1;
  }

  Tensor output({B, out[0], out[1], out[2], C});
  argmax_.assign(static_cast<std::size_t>(output.size()), 0);

  const double* x = input.data();
  double* y = output.data();
  const std::int64_t hw = static_cast<std::int64_t>(in[2]) * C;
  const std::int64_t thw = static_cast<std::int64_t>(in[1]) * hw;
  const std::int64_t bthw = static_cast<std::int64_t>(in[0]) * thw;

  std::int64_t o = 0;
  for (int b = 0; b < B; ++b) {
    for (int ot = 0; ot < out[0]; ++ot) {
      for (int oh = 0; oh < out[1]; ++oh) {
        for (int ow = 0; ow < out[2]; ++ow) {
          for (int c = 0; c < C; ++c, ++o) {
            double best = -std::numeric_limits<double>::infinity();
            std::int64_t best_idx = -1;
            for (int kt = 0; kt < spec_.window[0]; ++kt) {
              for (int kh = 0; kh < spec_.window[1]; ++kh) {
                for (int kw = 0; kw < spec_.window[2]; ++kw) {
                  const std::int64_t idx = b * bthw +
                                           (ot * spec_.stride[0] + kt) * thw +
                                           (oh * spec_.stride[1] + kh) * hw +
                                           (ow * spec_.stride[2] + kw) * C + c;
                  if (x[idx] > best) {  // strict: first max wins on ties
                    best = x[idx];
                    best_idx = idx;
                  }
                }
              }
            }
            y[o] = best;
            argmax_[static_cast<std::size_t>(o)] = best_idx;
          }
        }
      }
    }
  }

  in_shape_ = input.shape();
  out_shape_ = output.shape();
  has_trace_ = true;
  return output;
}

Tensor MaxPool3d::backward(const Tensor& grad_out) {
  require_trace(has_trace_, "maxpool3d");
  has_trace_ = false;
  if (grad_out.shape() != out_shape_) {
    throw std::invalid_argument("maxpool3d: upstream grad shape mismatch");
  }
  Tensor grad_in(in_shape_);
  for (std::int64_t o = 0; o < grad_out.size(); ++o) {
    grad_in[argmax_[static_cast<std::size_t>(o)]] += grad_out[o];
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// FrozenBatchNorm

FrozenBatchNorm::FrozenBatchNorm(std::string name, int channels, double eps)
    : channels_(channels),
      eps_(eps),
      scale_(name + "/scale", {channels}, false),
      offset_(name + "/offset", {channels}, false),
      mean_(name + "/mean", {channels}, false),
      var_(name + "/var", {channels}, false) {
  scale_.value.fill(1.0);
  var_.value.fill(1.0);
}

Tensor FrozenBatchNorm::forward(const Tensor& input) {
  if (input.rank() < 1 || input.dim(input.rank() - 1) != channels_) {
    throw std::invalid_argument("batchnorm: channel axis mismatch");
  }
  a_.resize(static_cast<std::size_t>(channels_));
  std::vector<double> shift(static_cast<std::size_t>(channels_));
  for (int c = 0; c < channels_; ++c) {
    const double v = var_.value[c] + eps_;
    if (v <= 0.0) throw std::invalid_argument("batchnorm: running variance + eps must be positive");
    const auto i = static_cast<std::size_t>(c);
    a_[i] = scale_.value[c] / std::sqrt(v);
    shift[i] = offset_.value[c] - mean_.value[c] * a_[i];
  }

  Tensor output(input.shape());
  const double* x = input.data();
  double* y = output.data();
  const std::int64_t rows = input.size() / channels_;
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xr = x + r * channels_;
    double* yr = y + r * channels_;
    for (int c = 0; c < channels_; ++c) {
      yr[c] = xr[c] * a_[static_cast<std::size_t>(c)] + shift[static_cast<std::size_t>(c)];
    }
  }
  has_trace_ = true;
  return output;
}

Tensor FrozenBatchNorm::backward(const Tensor& grad_out) {
  require_trace(has_trace_, "batchnorm");
  has_trace_ = false;
  Tensor grad_in(grad_out.shape());
  const double* g = grad_out.data();
  double* gx = grad_in.data();
  const std::int64_t rows = grad_out.size() / channels_;
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* gr = g + r * channels_;
    double* gxr = gx + r * channels_;
    for (int c = 0; c < channels_; ++c) {
      gxr[c] = gr[c] * a_[static_cast<std::size_t>(c)];
    }
  }
  return grad_in;
}

void FrozenBatchNorm::collect_params(std::vector<Param*>& out) {
  out.push_back(&scale_);
  out.push_back(&offset_);
  out.push_back(&mean_);
  out.push_back(&var_);
}

// ---------------------------------------------------------------------------
// Elementwise layers

Tensor ReLU::forward(const Tensor& input) {
  Tensor output(input.shape());
  mask_.resize(static_cast<std::size_t>(input.size()));
  for (std::int64_t i = 0; i < input.size(); ++i) {
    const bool on = input[i] > 0.0;
    mask_[static_cast<std::size_t>(i)] = on;
    output[i] = on ? input[i] : 0.0;
  }
  has_trace_ = true;
  return output;
}

Tensor ReLU::backward(const Tensor& grad_out) {
  require_trace(has_trace_, "relu");
  has_trace_ = false;
  if (grad_out.size() != static_cast<std::int64_t>(mask_.size())) {
    throw std::invalid_argument("relu: upstream grad shape mismatch");
  }
  Tensor grad_in(grad_out.shape());
  for (std::int64_t i = 0; i < grad_out.size(); ++i) {
    grad_in[i] = mask_[static_cast<std::size_t>(i)] ? grad_out[i] : 0.0;
  }
  return grad_in;
}

Tensor Sigmoid::forward(const Tensor& input) {
  Tensor output(input.shape());
  for (std::int64_t i = 0; i < input.size(); ++i) {
    output[i] = 1.0 / (1.0 + std::exp(-input[i]));
  }
  output_ = output;
  has_trace_ = true;
  return output;
}

Tensor Sigmoid::backward(const Tensor& grad_out) {
  require_trace(has_trace_, "sigmoid");
  has_trace_ = false;
  if (!grad_out.same_shape(output_)) {
    throw std::invalid_argument("sigmoid: upstream grad shape mismatch");
  }
  Tensor grad_in(grad_out.shape());
  for (std::int64_t i = 0; i < grad_out.size(); ++i) {
    grad_in[i] = grad_out[i] * output_[i] * (1.0 - output_[i]);
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(std::string name, int in_features, int out_features, bool bias)
    : in_features_(in_features),
      out_features_(out_features),
      has_bias_(bias),
      weight_(name + "/weight", {in_features, out_features}),
      bias_(name + "/bias", {out_features}) {}

Tensor Linear::forward(const Tensor& input) {
  if (input.rank() != 2 || input.dim(1) != in_features_) {
    throw std::invalid_argument("linear: expected (N," + std::to_string(in_features_) +
                                ") input, got " + input.shape_str());
  }
  const int N = input.dim(0);
  Tensor output({N, out_features_});
  ConstMapRM x_m(input.data(), N, in_features_);
  ConstMapRM w_m(weight_.value.data(), in_features_, out_features_);
  MapRM y_m(output.data(), N, out_features_);
  y_m.noalias() = x_m * w_m;
  if (has_bias_) {
    ConstMapRM b_m(bias_.value.data(), 1, out_features_);
    y_m.rowwise() += b_m.row(0);
  }
  input_ = input;
  has_trace_ = true;
  return output;
}

Tensor Linear::backward(const Tensor& grad_out) {
  require_trace(has_trace_, "linear");
  has_trace_ = false;
  const int N = input_.dim(0);
  if (grad_out.rank() != 2 || grad_out.dim(0) != N || grad_out.dim(1) != out_features_) {
    throw std::invalid_argument("linear: upstream grad shape mismatch");
  }
  ConstMapRM g_m(grad_out.data(), N, out_features_);
  ConstMapRM x_m(input_.data(), N, in_features_);
  MapRM gw_m(weight_.grad.data(), in_features_, out_features_);
  gw_m.noalias() += x_m.transpose() * g_m;
  if (has_bias_) {
    MapRM gb_m(bias_.grad.data(), 1, out_features_);
    gb_m.row(0) += g_m.colwise().sum();
  }
  Tensor grad_in({N, in_features_});
  ConstMapRM w_m(weight_.value.data(), in_features_, out_features_);
  MapRM gx_m(grad_in.data(), N, in_features_);
  gx_m.noalias() = g_m * w_m.transpose();
  return grad_in;
}

void Linear::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

// ---------------------------------------------------------------------------
// GlobalAvgPool

Tensor GlobalAvgPool::forward(const Tensor& input) {
  if (input.rank() != 5) throw std::invalid_argument("global_avg_pool: expected rank-5 input");
  const int N = input.dim(0), C = input.dim(4);
  const std::int64_t cells = static_cast<std::int64_t>(input.dim(1)) * input.dim(2) * input.dim(3);
  Tensor output({N, C});
  const double* x = input.data();
  for (int n = 0; n < N; ++n) {
    double* y = output.data() + static_cast<std::int64_t>(n) * C;
    for (std::int64_t cell = 0; cell < cells; ++cell) {
      const double* row = x + (n * cells + cell) * C;
      for (int c = 0; c < C; ++c) y[c] += row[c];
    }
    for (int c = 0; c < C; ++c) y[c] /= static_cast<double>(cells);
  }
  in_shape_ = input.shape();
  has_trace_ = true;
  return output;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out) {
  require_trace(has_trace_, "global_avg_pool");
  has_trace_ = false;
  const int N = in_shape_[0], C = in_shape_[4];
  if (grad_out.rank() != 2 || grad_out.dim(0) != N || grad_out.dim(1) != C) {
    throw std::invalid_argument("global_avg_pool: upstream grad shape mismatch");
  }
  const std::int64_t cells = static_cast<std::int64_t>(in_shape_[1]) * in_shape_[2] * in_shape_[3];
  Tensor grad_in(in_shape_);
  double* gx = grad_in.data();
  for (int n = 0; n < N; ++n) {
    const double* g = grad_out.data() + static_cast<std::int64_t>(n) * C;
    for (std::int64_t cell = 0; cell < cells; ++cell) {
      double* row = gx + (n * cells + cell) * C;
      for (int c = 0; c < C; ++c) row[c] = g[c] / static_cast<double>(cells);
    }
  }
  return grad_in;
}

}  // namespace stal::nn
