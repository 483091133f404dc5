#include "stal/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>

namespace stal::eval {

std::vector<bool> match_class(const std::vector<geom::ScoredBox>& dets,
                              const std::vector<geom::Box>& gts, double iou_threshold) {
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return dets[static_cast<size_t>(a)].score > dets[static_cast<size_t>(b)].score;
  });

  std::vector<bool> matched(gts.size(), false);
  std::vector<bool> tp(dets.size(), false);
  for (int idx : order) {
    double best = 0.0;
    int best_gt = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (matched[g]) continue;
      const double v = geom::iou(dets[static_cast<size_t>(idx)].box, gts[g]);
      if (v > best) {
        best = v;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0 && best >= iou_threshold) {
      matched[static_cast<size_t>(best_gt)] = true;
      tp[static_cast<size_t>(idx)] = true;
    }
  }
  return tp;
}

double average_precision(const std::vector<std::pair<double, bool>>& flags, int n_gt) {
  if (n_gt < 1) throw std::invalid_argument("average_precision needs n_gt >= 1");
  if (flags.empty()) return 0.0;

  std::vector<int> order(flags.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return flags[static_cast<size_t>(a)].first > flags[static_cast<size_t>(b)].first;
  });

  const size_t k = flags.size();
  std::vector<double> precision(k), recall(k);
  int tp = 0;
  for (size_t i = 0; i < k; ++i) {
    if (flags[static_cast<size_t>(order[i])].second) ++tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / n_gt;
  }
  // all-point interpolation: precision envelope from the right
  for (size_t i = k - 1; i > 0; --i) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (size_t i = 0; i < k; ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

EvalReport evaluate(const std::vector<data::GroundTruthBox>& groundtruth,
                    const std::vector<data::DetectionRow>& detections,
                    double iou_threshold) {
  using FrameKey = std::pair<std::string, int>;

  // gt boxes per (class, frame); gt counts per class
  std::map<int, std::map<FrameKey, std::vector<geom::Box>>> gt_by_class;
  std::map<int, int> gt_counts;
  for (const data::GroundTruthBox& g : groundtruth) {
    for (int action : g.annotation.actions) {
      gt_by_class[action][{g.video_id, g.timestamp}].push_back(g.annotation.box);
      ++gt_counts[action];
    }
  }

  EvalReport report;
  double ap_sum = 0.0;
  for (const auto& [class_id, frames] : gt_by_class) {
    // pool this class's detections, keeping input order per frame and globally
    std::map<FrameKey, std::vector<int>> det_rows;
    std::vector<int> class_rows;
    for (size_t i = 0; i < detections.size(); ++i) {
      if (detections[i].action_id != class_id) continue;
      det_rows[{detections[i].video_id, detections[i].timestamp}].push_back(
          static_cast<int>(i));
      class_rows.push_back(static_cast<int>(i));
    }

    std::map<int, bool> tp_by_row;
    static const std::vector<geom::Box> kNoGt;
    for (const auto& [frame, rows] : det_rows) {
      auto it = frames.find(frame);
      const std::vector<geom::Box>& gts = it == frames.end() ? kNoGt : it->second;
      std::vector<geom::ScoredBox> frame_dets;
      frame_dets.reserve(rows.size());
      for (int row : rows) {
        frame_dets.push_back({detections[static_cast<size_t>(row)].box,
                              detections[static_cast<size_t>(row)].score, class_id});
      }
      const std::vector<bool> tp = match_class(frame_dets, gts, iou_threshold);
      for (size_t j = 0; j < rows.size(); ++j) {
        tp_by_row[rows[static_cast<size_t>(j)]] = tp[j];
      }
    }

    std::vector<std::pair<double, bool>> flags;
    flags.reserve(class_rows.size());
    for (int row : class_rows) {
      flags.emplace_back(detections[static_cast<size_t>(row)].score, tp_by_row[row]);
    }

    ClassAp entry;
    entry.class_id = class_id;
    entry.n_gt = gt_counts[class_id];
    entry.n_det = static_cast<int>(class_rows.size());
    entry.ap = average_precision(flags, entry.n_gt);
    ap_sum += entry.ap;
    report.per_class.push_back(entry);
  }
  if (!report.per_class.empty()) {
    report.mean_ap = ap_sum / static_cast<double>(report.per_class.size());
  }
  return report;
}

void write_report_csv(std::ostream& out, const EvalReport& report) {
  char buf[32];
  out << "class_id,ap,n_gt,n_det\n";
  for (const ClassAp& c : report.per_class) {
    std::snprintf(buf, sizeof(buf), "%.6f", c.ap);
    out << c.class_id << ',' << buf << ',' << c.n_gt << ',' << c.n_det << '\n';
  }
  std::snprintf(buf, sizeof(buf), "%.6f", report.mean_ap);
  out << "mAP=" << buf << '\n';
}

}  // namespace stal::eval
