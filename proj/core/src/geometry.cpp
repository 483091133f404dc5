#include "stal/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace stal::geom {

namespace {
constexpr double kDeltaClamp = 6.907755278982137;  // ln(1000)
}

double iou(const Box& a, const Box& b) {
  const double ix1 = std::max(a.x1, b.x1);
  const double iy1 = std::max(a.y1, b.y1);
  const double ix2 = std::min(a.x2, b.x2);
  const double iy2 = std::min(a.y2, b.y2);
  const double iw = std::max(0.0, ix2 - ix1);
  const double ih = std::max(0.0, iy2 - iy1);
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

BoxDelta encode(const Box& target, const Box& anchor) {
  if (anchor.width() <= 0.0 || anchor.height() <= 0.0) {
    throw std::invalid_argument("encode: anchor has non-positive extent");
  }
  if (target.width() <= 0.0 || target.height() <= 0.0) {
    throw std::invalid_argument("encode: target has non-positive extent");
  }
  BoxDelta d;
  d.tx = (target.cx() - anchor.cx()) / anchor.width();
  d.ty = (target.cy() - anchor.cy()) / anchor.height();
  d.tw = std::log(target.width() / anchor.width());
  d.th = std::log(target.height() / anchor.height());
  return d;
}

Box decode(const BoxDelta& delta, const Box& anchor) {
  const double tw = std::min(delta.tw, kDeltaClamp);
  const double th = std::min(delta.th, kDeltaClamp);
  const double cx = anchor.cx() + delta.tx * anchor.width();
  const double cy = anchor.cy() + delta.ty * anchor.height();
  const double w = anchor.width() * std::exp(tw);
  const double h = anchor.height() * std::exp(th);
  return Box{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

Box clip_to_unit(const Box& b) {
  auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
  return Box{clamp01(b.x1), clamp01(b.y1), clamp01(b.x2), clamp01(b.y2)};
}

Box flip_horizontal(const Box& b) { return Box{1.0 - b.x2, b.y1, 1.0 - b.x1, b.y2}; }

std::optional<Box> crop_transform(const Box& b, const Box& window) {
  const double ww = window.width();
  const double wh = window.height();
  if (ww <= 0.0 || wh <= 0.0) {
    throw std::invalid_argument("crop_transform: window has non-positive area");
  }
  const double ix1 = std::max(b.x1, window.x1);
  const double iy1 = std::max(b.y1, window.y1);
  const double ix2 = std::min(b.x2, window.x2);
  const double iy2 = std::min(b.y2, window.y2);
  if (ix2 <= ix1 || iy2 <= iy1) return std::nullopt;
  const double inter_area = (ix2 - ix1) * (iy2 - iy1);
  if (inter_area < 0.25 * b.area()) return std::nullopt;
  return Box{(ix1 - window.x1) / ww, (iy1 - window.y1) / wh, (ix2 - window.x1) / ww,
             (iy2 - window.y1) / wh};
}

std::vector<ScoredBox> nms(const std::vector<ScoredBox>& candidates, double iou_threshold) {
  std::vector<int> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return candidates[static_cast<std::size_t>(a)].score >
           candidates[static_cast<std::size_t>(b)].score;
  });

  std::vector<ScoredBox> kept;
  for (int idx : order) {
    const ScoredBox& cand = candidates[static_cast<std::size_t>(idx)];
    bool keep = true;
    for (const ScoredBox& k : kept) {
      if (iou(cand.box, k.box) > iou_threshold) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(cand);
  }
  return kept;
}

}  // namespace stal::geom
