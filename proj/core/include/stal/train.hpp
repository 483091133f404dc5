#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "stal/data.hpp"
#include "stal/geometry.hpp"
#include "stal/model.hpp"
#include "stal/rng.hpp"

namespace stal {

// --- target assignment -------------------------------------------------------

struct RpnExample {
  int anchor = 0;
  double label = 0.0;     // 1 positive, 0 negative
  geom::BoxDelta delta;   // regression target; meaningful when label == 1
};

struct RpnAssignConfig {
  double positive_iou = 0.7;
  double negative_iou = 0.3;
  int positive_cap = 64;
  int negative_cap = 64;
};

// An anchor is positive when its IoU with some gt reaches positive_iou or it
// is a gt's best-IoU anchor (lowest index on ties); negative when its best
// IoU is at most negative_iou; anything else is ignored. At most the capped
// number of each survives, sampled uniformly with `rng`. Positive targets
// encode the anchor's best-IoU gt. With no gt every anchor is negative.
std::vector<RpnExample> assign_rpn_targets(const std::vector<geom::Box>& anchors,
                                           const std::vector<geom::Box>& gt,
                                           const RpnAssignConfig& config, Rng& rng);

struct RoiExample {
  geom::Box box;
  bool positive = false;
  std::vector<int> actions;  // matched gt's label set (positives only)
  geom::BoxDelta delta;      // encode(gt, box) (positives only)
};

struct RoiAssignConfig {
  double positive_iou = 0.5;
  int rois_per_clip = 16;
  int positive_cap = 8;
};

// Matches each candidate (the proposals plus the gt boxes themselves, which
// are appended so early training always sees positives) to its argmax-IoU gt.
// Matches at or above positive_iou inherit the gt's full label set and an
// encoded regression target; the rest get all-zero labels. Keeps at most
// positive_cap positives and fills up to rois_per_clip with negatives.
std::vector<RoiExample> assign_detection_targets(const std::vector<geom::Box>& proposals,
                                                 const std::vector<data::Annotation>& gt,
                                                 const RoiAssignConfig& config, Rng& rng);

// --- losses --------------------------------------------------------------------

// Mean binary cross-entropy over n elements with probabilities clamped into
// [1e-7, 1-1e-7] before the logs. When grad is non-null, weight * dL/dp_i is
// added to grad[i] (zero where the clamp is active). Returns weight * L;
// n == 0 yields 0.
double bce_mean(const double* probs, const double* targets, int n, double weight,
                double* grad);

// Mean smooth-L1 (quadratic inside |d| < 1) over n elements; same grad and
// weighting conventions as bce_mean.
double smooth_l1_mean(const double* pred, const double* target, int n, double weight,
                      double* grad);

// --- schedule / optimizer -------------------------------------------------------

// 0.5 * base_lr * (1 + cos(pi * step / total_steps)); exactly base_lr at
// step 0 and exactly 0 at step == total_steps.
double cosine_lr(int step, int total_steps, double base_lr);

class SgdMomentum {
 public:
  // Tracks the trainable subset of `params`.
  SgdMomentum(const std::vector<nn::Param*>& params, double momentum);

  // v <- momentum*v + g; w <- w - lr*v. A non-finite gradient aborts the
  // step with an error naming the parameter.
  void step(double lr);

 private:
  std::vector<nn::Param*> params_;
  std::vector<Tensor> velocity_;
  double momentum_;
};

// --- training loop ---------------------------------------------------------------

struct TrainConfig {
  double base_lr = 0.01;
  double momentum = 0.9;
  int total_steps = 4000;
  int batch_size = 2;
  std::uint64_t seed = 0;
  bool augment = true;
  double rpn_cls_weight = 1.0;
  double rpn_reg_weight = 1.0;
  double cls_weight = 1.0;
  double reg_weight = 1.0;
  RpnAssignConfig rpn;
  RoiAssignConfig roi;
  data::AugmentConfig augmentation;

  void validate() const;  // throws std::invalid_argument
};

struct StepStats {
  int step = 0;
  double lr = 0.0;
  double rpn_cls = 0.0;
  double rpn_reg = 0.0;
  double cls = 0.0;
  double reg = 0.0;
  double total = 0.0;
};

// `step,lr,rpn_cls,rpn_reg,cls,reg,total`, one row per step, header first.
// Values print with round-trip precision so identical runs produce identical
// bytes.
void write_loss_log(std::ostream& out, const std::vector<StepStats>& stats);

// Runs the full training loop on `model` and returns the per-step losses.
// Bit-identical results for identical seeds and inputs.
std::vector<StepStats> train(ActionDetector& model,
                             const std::vector<data::ClipSample>& samples,
                             const TrainConfig& config);

}  // namespace stal
