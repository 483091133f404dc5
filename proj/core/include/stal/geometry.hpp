#pragma once

#include <optional>
#include <vector>

namespace stal::geom {

// Axis-aligned box in normalized image coordinates, (x1,y1) top-left and
// (x2,y2) bottom-right with x1 <= x2 and y1 <= y2.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
};

inline bool operator==(const Box& a, const Box& b) {
  return a.x1 == b.x1 && a.y1 == b.y1 && a.x2 == b.x2 && a.y2 == b.y2;
}

// Faster R-CNN style regression offsets: center shifts relative to the anchor
// extents plus log-scale size ratios.
struct BoxDelta {
  double tx = 0.0;
  double ty = 0.0;
  double tw = 0.0;
  double th = 0.0;
};

struct ScoredBox {
  Box box;
  double score = 0.0;
  int class_id = -1;  // -1 when class-agnostic
};

// Intersection over union. Returns 0 for disjoint or doubly-degenerate input.
double iou(const Box& a, const Box& b);

// Regression target for predicting `target` from `anchor`. Both must have
// positive extents.
BoxDelta encode(const Box& target, const Box& anchor);

// Inverse of encode. tw/th are clamped to ln(1000) so early-training deltas
// cannot overflow exp. The result may extend past [0,1]; see clip_to_unit.
Box decode(const BoxDelta& delta, const Box& anchor);

Box clip_to_unit(const Box& b);

// Mirrors the box across the vertical image centerline.
Box flip_horizontal(const Box& b);

// Re-expresses `b` in window-normalized coordinates. Returns nullopt when the
// intersection keeps less than 25% of the original area.
std::optional<Box> crop_transform(const Box& b, const Box& window);

// Greedy single-class non-maximum suppression, descending score with ties
// broken by lower input index. A candidate is kept iff its IoU with every
// already-kept box is <= iou_threshold.
std::vector<ScoredBox> nms(const std::vector<ScoredBox>& candidates, double iou_threshold);

}  // namespace stal::geom
