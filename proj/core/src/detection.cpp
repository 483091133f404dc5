#include "stal/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace stal {
namespace {

nn::Conv3dSpec rpn_conv_spec(int in, int out, int spatial_kernel) {
  nn::Conv3dSpec spec;
  spec.in_channels = in;
  spec.out_channels = out;
  spec.kernel = {1, spatial_kernel, spatial_kernel};
  spec.stride = {1, 1, 1};
  spec.padding = nn::Padding::kSame;
  spec.bias = true;
  return spec;
}

}  // namespace

std::vector<geom::Box> generate_anchors(int grid_h, int grid_w,
                                        const AnchorConfig& config) {
  if (grid_h <= 0 || grid_w <= 0) {
    throw std::invalid_argument("anchor grid extents must be positive");
  }
  if (config.scales.empty() || config.aspects.empty()) {
    throw std::invalid_argument("anchor config needs scales and aspects");
  }
  std::vector<geom::Box> anchors;
  anchors.reserve(static_cast<size_t>(grid_h) * grid_w * config.anchors_per_cell());
  for (int i = 0; i < grid_h; ++i) {
    for (int j = 0; j < grid_w; ++j) {
      const double cx = (j + 0.5) / grid_w;
      const double cy = (i + 0.5) / grid_h;
      for (double scale : config.scales) {
        for (double aspect : config.aspects) {
          const double w = scale * std::sqrt(aspect);
          const double h = scale / std::sqrt(aspect);
          anchors.push_back({cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h});
        }
      }
    }
  }
  return anchors;
}

RpnHead::RpnHead(int in_channels, int anchors_per_cell, int hidden)
    : anchors_(anchors_per_cell),
      conv_("rpn.conv", rpn_conv_spec(in_channels, hidden > 0 ? hidden : in_channels, 3)),
      score_conv_("rpn.score", rpn_conv_spec(conv_.spec().out_channels, anchors_per_cell, 1)),
      delta_conv_("rpn.delta", rpn_conv_spec(conv_.spec().out_channels, 4 * anchors_per_cell, 1)) {
  if (anchors_per_cell <= 0) {
    throw std::invalid_argument("rpn needs a positive anchor count");
  }
}

RpnHead::Output RpnHead::forward(const Tensor& feature_map) {
  if (feature_map.rank() != 4) {
    throw std::invalid_argument("rpn expects a rank-4 (B,h,w,c) feature map");
  }
  map_shape_ = feature_map.shape();
  const int b = map_shape_[0], h = map_shape_[1], w = map_shape_[2];
  Tensor x = feature_map.reshaped({b, 1, h, w, map_shape_[3]});
  Tensor hidden = relu_.forward(conv_.forward(x));
  Tensor scores = sigmoid_.forward(score_conv_.forward(hidden));
  Tensor deltas = delta_conv_.forward(hidden);
  const int n = h * w * anchors_;
  return {scores.reshaped({b, n}), deltas.reshaped({b, n, 4})};
}

Tensor RpnHead::backward(const Tensor& grad_scores, const Tensor& grad_deltas) {
  if (map_shape_.empty()) {
    throw std::logic_error("rpn backward without a matching forward trace");
  }
  const int b = map_shape_[0], h = map_shape_[1], w = map_shape_[2];
  Tensor gs = sigmoid_.backward(grad_scores.reshaped({b, 1, h, w, anchors_}));
  Tensor grad_hidden = score_conv_.backward(gs);
  grad_hidden.add(delta_conv_.backward(grad_deltas.reshaped({b, 1, h, w, 4 * anchors_})));
  Tensor grad_in = conv_.backward(relu_.backward(grad_hidden));
  std::vector<int> shape = map_shape_;
  map_shape_.clear();
  return grad_in.reshaped(shape);
}

void RpnHead::collect_params(std::vector<nn::Param*>& out) {
  conv_.collect_params(out);
  score_conv_.collect_params(out);
  delta_conv_.collect_params(out);
}

std::vector<geom::Box> propose(const double* scores, const double* deltas,
                               const std::vector<geom::Box>& anchors,
                               const ProposalConfig& config) {
  const int n = static_cast<int>(anchors.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  const int pre = std::min(config.pre_nms_top_n, n);

  std::vector<geom::ScoredBox> candidates;
  candidates.reserve(pre);
  for (int k = 0; k < pre; ++k) {
    const int a = order[k];
    const geom::BoxDelta d{deltas[4 * a], deltas[4 * a + 1], deltas[4 * a + 2],
                           deltas[4 * a + 3]};
    candidates.push_back({geom::clip_to_unit(geom::decode(d, anchors[a])), scores[a]});
  }
  std::vector<geom::ScoredBox> kept = geom::nms(candidates, config.nms_threshold);
  if (static_cast<int>(kept.size()) > config.post_nms_top_n) {
    kept.resize(config.post_nms_top_n);
  }
  std::vector<geom::Box> boxes;
  boxes.reserve(kept.size());
  for (const geom::ScoredBox& sb : kept) boxes.push_back(sb.box);
  return boxes;
}

RoiPool3d::RoiPool3d(int pool_size) : pool_size_(pool_size) {
  if (pool_size <= 0) throw std::invalid_argument("pool_size must be positive");
}

Tensor RoiPool3d::forward(const Tensor& volume, const std::vector<RoiRef>& rois) {
  if (volume.rank() != 5) {
    throw std::invalid_argument("roi pool expects a rank-5 (B,T,h,w,c) volume");
  }
  const int b = volume.dim(0), t = volume.dim(1), h = volume.dim(2),
            w = volume.dim(3), c = volume.dim(4);
  const int r = static_cast<int>(rois.size());
  const int p = pool_size_;
  Tensor out({r, t, p, p, c});
  argmax_.assign(out.size(), -1);
  volume_shape_ = volume.shape();
  const double* src = volume.data();
  double* dst = out.data();

  for (int ri = 0; ri < r; ++ri) {
    const RoiRef& roi = rois[ri];
    if (roi.batch < 0 || roi.batch >= b) {
      throw std::invalid_argument("roi batch index " + std::to_string(roi.batch) +
                                  " out of range for batch " + std::to_string(b));
    }
    // Quantize the normalized box onto the feature grid. Degenerate windows
    // collapse to the nearest valid cell so every bin has a source.
    int xs = static_cast<int>(std::floor(roi.box.x1 * w));
    int xe = static_cast<int>(std::ceil(roi.box.x2 * w));
    int ys = static_cast<int>(std::floor(roi.box.y1 * h));
    int ye = static_cast<int>(std::ceil(roi.box.y2 * h));
    xs = std::clamp(xs, 0, w - 1);
    ys = std::clamp(ys, 0, h - 1);
    xe = std::clamp(xe, xs + 1, w);
    ye = std::clamp(ye, ys + 1, h);
    const int wr = xe - xs;
    const int hr = ye - ys;

    for (int ti = 0; ti < t; ++ti) {
      for (int pi = 0; pi < p; ++pi) {
        int y0 = ys + static_cast<int>((static_cast<long long>(pi) * hr) / p);
        int y1 = ys + static_cast<int>((static_cast<long long>(pi + 1) * hr) / p);
        if (y1 <= y0) y1 = y0 + 1;  // empty bin: read its start cell
        for (int pj = 0; pj < p; ++pj) {
          int x0 = xs + static_cast<int>((static_cast<long long>(pj) * wr) / p);
          int x1 = xs + static_cast<int>((static_cast<long long>(pj + 1) * wr) / p);
          if (x1 <= x0) x1 = x0 + 1;
          const size_t out_base =
              (((static_cast<size_t>(ri) * t + ti) * p + pi) * p + pj) * c;
          const size_t batch_base = (static_cast<size_t>(roi.batch) * t + ti) * h;
          for (int ch = 0; ch < c; ++ch) {
            size_t best_idx = ((batch_base + y0) * w + x0) * c + ch;
            double best = src[best_idx];
            for (int y = y0; y < y1; ++y) {
              for (int x = x0; x < x1; ++x) {
                const size_t idx = ((batch_base + y) * w + x) * c + ch;
                if (src[idx] > best) {  // first max wins ties
                  best = src[idx];
                  best_idx = idx;
                }
              }
            }
            dst[out_base + ch] = best;
            argmax_[out_base + ch] = static_cast<int>(best_idx);
          }
        }
      }
    }
  }
  return out;
}

Tensor RoiPool3d::backward(const Tensor& grad_out) {
  if (volume_shape_.empty()) {
    throw std::logic_error("roi pool backward without a matching forward trace");
  }
  if (grad_out.size() != argmax_.size()) {
    throw std::invalid_argument("roi pool gradient has " +
                                std::to_string(grad_out.size()) +
                                " elements, expected " + std::to_string(argmax_.size()));
  }
  Tensor grad(volume_shape_);
  const double* g = grad_out.data();
  double* out = grad.data();
  for (size_t i = 0; i < argmax_.size(); ++i) out[argmax_[i]] += g[i];
  argmax_.clear();
  volume_shape_.clear();
  return grad;
}

std::vector<geom::ScoredBox> postprocess(const std::vector<geom::Box>& proposals,
                                         const Tensor& cls_probs,
                                         const Tensor& reg_deltas,
                                         bool per_class_regression,
                                         const PostprocessConfig& config) {
  const int r = static_cast<int>(proposals.size());
  if (cls_probs.rank() != 2 || cls_probs.dim(0) != r) {
    throw std::invalid_argument("cls_probs must be (R, C) with one row per proposal");
  }
  const int classes = cls_probs.dim(1);
  const int expected_cols = per_class_regression ? 4 * classes : 4;
  if (reg_deltas.rank() != 2 || reg_deltas.dim(0) != r ||
      reg_deltas.dim(1) != expected_cols) {
    throw std::invalid_argument("reg_deltas must be (R, " +
                                std::to_string(expected_cols) + ")");
  }

  std::vector<geom::ScoredBox> all;
  for (int cls = 0; cls < classes; ++cls) {
    std::vector<geom::ScoredBox> candidates;
    std::vector<int> roi_of;
    for (int i = 0; i < r; ++i) {
      const double score = cls_probs[static_cast<size_t>(i) * classes + cls];
      if (score <= config.score_floor) continue;
      const double* row = reg_deltas.data() + static_cast<size_t>(i) * expected_cols +
                          (per_class_regression ? 4 * cls : 0);
      const geom::BoxDelta d{row[0], row[1], row[2], row[3]};
      candidates.push_back(
          {geom::clip_to_unit(geom::decode(d, proposals[i])), score, cls});
    }
    std::vector<geom::ScoredBox> kept = geom::nms(candidates, config.nms_threshold);
    all.insert(all.end(), kept.begin(), kept.end());
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const geom::ScoredBox& a, const geom::ScoredBox& b) {
                     return a.score > b.score;
                   });
  if (static_cast<int>(all.size()) > config.max_detections) {
    all.resize(config.max_detections);
  }
  return all;
}

}  // namespace stal
