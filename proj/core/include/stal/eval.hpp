#pragma once

#include <iosfwd>
#include <utility>
#include <vector>

#include "stal/data.hpp"
#include "stal/geometry.hpp"

namespace stal::eval {

struct ClassAp {
  int class_id = 0;
  double ap = 0.0;
  int n_gt = 0;
  int n_det = 0;
};

struct EvalReport {
  std::vector<ClassAp> per_class;  // classes with ground truth, ascending id
  double mean_ap = 0.0;            // unweighted mean over per_class
};

// Greedy matching for one class within one frame: detections in descending
// score order (ties by input order) claim their best-IoU unmatched gt when
// that IoU reaches the threshold. Returns a TP flag per detection, aligned
// with the input order.
std::vector<bool> match_class(const std::vector<geom::ScoredBox>& dets,
                              const std::vector<geom::Box>& gts, double iou_threshold);

// All-point interpolated average precision. `flags` carries (score, is_tp)
// in insertion order; ranking is by descending score with insertion-order
// tie-breaks. n_gt must be >= 1.
double average_precision(const std::vector<std::pair<double, bool>>& flags, int n_gt);

// Frame-level mAP: per class, detections are matched frame by frame and
// ranked globally. Detections on frames absent from the ground truth count
// as false positives. Classes without ground truth are excluded.
EvalReport evaluate(const std::vector<data::GroundTruthBox>& groundtruth,
                    const std::vector<data::DetectionRow>& detections,
                    double iou_threshold = 0.5);

// `class_id,ap,n_gt,n_det` rows (one per gt-present class) followed by a
// `mAP=<value>` summary line; values use 6 decimals.
void write_report_csv(std::ostream& out, const EvalReport& report);

}  // namespace stal::eval
