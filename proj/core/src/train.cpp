#include "stal/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>

namespace stal {
namespace {

constexpr double kProbClamp = 1e-7;

std::vector<geom::Box> annotation_boxes(const std::vector<data::Annotation>& anns) {
  std::vector<geom::Box> boxes;
  boxes.reserve(anns.size());
  for (const data::Annotation& a : anns) boxes.push_back(a.box);
  return boxes;
}

// Uniform subset of `pool` (already ascending), emitted in ascending order.
std::vector<int> pick_sorted(const std::vector<int>& pool, int cap, Rng& rng) {
  if (cap < 0) cap = 0;
  if (static_cast<int>(pool.size()) <= cap) return pool;
  const std::vector<int> sel =
      rng.sample_without_replacement(static_cast<int>(pool.size()), cap);
  std::vector<int> out;
  out.reserve(sel.size());
  for (int i : sel) out.push_back(pool[static_cast<size_t>(i)]);
  std::sort(out.begin(), out.end());
  return out;
}

std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<RpnExample> assign_rpn_targets(const std::vector<geom::Box>& anchors,
                                           const std::vector<geom::Box>& gt,
                                           const RpnAssignConfig& config, Rng& rng) {
  const int n = static_cast<int>(anchors.size());
  const int m = static_cast<int>(gt.size());
  std::vector<double> best_iou(static_cast<size_t>(n), 0.0);
  std::vector<int> best_gt(static_cast<size_t>(n), -1);
  std::vector<bool> forced(static_cast<size_t>(n), false);

  for (int g = 0; g < m; ++g) {
    double gt_best = 0.0;
    int gt_best_anchor = -1;
    for (int a = 0; a < n; ++a) {
      const double v = geom::iou(anchors[static_cast<size_t>(a)], gt[static_cast<size_t>(g)]);
      if (v > best_iou[static_cast<size_t>(a)]) {
        best_iou[static_cast<size_t>(a)] = v;
        best_gt[static_cast<size_t>(a)] = g;
      }
      if (v > gt_best) {
        gt_best = v;
        gt_best_anchor = a;
      }
    }
    // the gt's argmax anchor is positive regardless of the threshold
    if (gt_best_anchor >= 0) forced[static_cast<size_t>(gt_best_anchor)] = true;
  }

  std::vector<int> positives, negatives;
  for (int a = 0; a < n; ++a) {
    const bool pos = forced[static_cast<size_t>(a)] ||
                     (best_gt[static_cast<size_t>(a)] >= 0 &&
                      best_iou[static_cast<size_t>(a)] >= config.positive_iou);
    if (pos) {
      positives.push_back(a);
    } else if (best_iou[static_cast<size_t>(a)] <= config.negative_iou) {
      negatives.push_back(a);
    }
  }
  const std::vector<int> pos_sel = pick_sorted(positives, config.positive_cap, rng);
  const std::vector<int> neg_sel = pick_sorted(negatives, config.negative_cap, rng);

  std::vector<RpnExample> examples;
  examples.reserve(pos_sel.size() + neg_sel.size());
  for (int a : pos_sel) {
    RpnExample e;
    e.anchor = a;
    e.label = 1.0;
    e.delta = geom::encode(gt[static_cast<size_t>(best_gt[static_cast<size_t>(a)])],
                           anchors[static_cast<size_t>(a)]);
    examples.push_back(e);
  }
  for (int a : neg_sel) {
    RpnExample e;
    e.anchor = a;
    e.label = 0.0;
    examples.push_back(e);
  }
  return examples;
}

std::vector<RoiExample> assign_detection_targets(const std::vector<geom::Box>& proposals,
                                                 const std::vector<data::Annotation>& gt,
                                                 const RoiAssignConfig& config, Rng& rng) {
  std::vector<geom::Box> candidates = proposals;
  for (const data::Annotation& a : gt) candidates.push_back(a.box);
  const int n = static_cast<int>(candidates.size());
  const int m = static_cast<int>(gt.size());

  std::vector<double> best_iou(static_cast<size_t>(n), 0.0);
  std::vector<int> best_gt(static_cast<size_t>(n), -1);
  for (int c = 0; c < n; ++c) {
    for (int g = 0; g < m; ++g) {
      const double v = geom::iou(candidates[static_cast<size_t>(c)], gt[static_cast<size_t>(g)].box);
      if (v > best_iou[static_cast<size_t>(c)]) {
        best_iou[static_cast<size_t>(c)] = v;
        best_gt[static_cast<size_t>(c)] = g;
      }
    }
  }
  std::vector<int> positives, negatives;
  for (int c = 0; c < n; ++c) {
    if (best_gt[static_cast<size_t>(c)] >= 0 &&
        best_iou[static_cast<size_t>(c)] >= config.positive_iou) {
      positives.push_back(c);
    } else {
      negatives.push_back(c);
    }
  }
  const std::vector<int> pos_sel = pick_sorted(positives, config.positive_cap, rng);
  const std::vector<int> neg_sel =
      pick_sorted(negatives, config.rois_per_clip - static_cast<int>(pos_sel.size()), rng);

  std::vector<RoiExample> examples;
  examples.reserve(pos_sel.size() + neg_sel.size());
  for (int c : pos_sel) {
    const data::Annotation& matched = gt[static_cast<size_t>(best_gt[static_cast<size_t>(c)])];
    RoiExample e;
    e.box = candidates[static_cast<size_t>(c)];
    e.positive = true;
    e.actions = matched.actions;
    e.delta = geom::encode(matched.box, e.box);
    examples.push_back(std::move(e));
  }
  for (int c : neg_sel) {
    RoiExample e;
    e.box = candidates[static_cast<size_t>(c)];
    examples.push_back(std::move(e));
  }
  return examples;
}

double bce_mean(const double* probs, const double* targets, int n, double weight,
                double* grad) {
  if (n <= 0) return 0.0;
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double p = std::clamp(probs[i], kProbClamp, 1.0 - kProbClamp);
    const double t = targets[i];
    loss += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
    if (grad != nullptr && probs[i] >= kProbClamp && probs[i] <= 1.0 - kProbClamp) {
      grad[i] += weight * (p - t) / (p * (1.0 - p)) / n;
    }
  }
  return weight * loss / n;
}

double smooth_l1_mean(const double* pred, const double* target, int n, double weight,
                      double* grad) {
  if (n <= 0) return 0.0;
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = pred[i] - target[i];
    const double ad = std::abs(d);
    if (ad < 1.0) {
      loss += 0.5 * d * d;
      if (grad != nullptr) grad[i] += weight * d / n;
    } else {
      loss += ad - 0.5;
      if (grad != nullptr) grad[i] += weight * (d > 0.0 ? 1.0 : -1.0) / n;
    }
  }
  return weight * loss / n;
}

double cosine_lr(int step, int total_steps, double base_lr) {
  if (total_steps < 1) {
    throw std::invalid_argument("cosine_lr: total_steps must be >= 1");
  }
  if (step < 0 || step > total_steps) {
    throw std::invalid_argument("cosine_lr: step " + std::to_string(step) +
                                " outside [0, " + std::to_string(total_steps) + "]");
  }
  if (step == 0) return base_lr;
  if (step == total_steps) return 0.0;
  return 0.5 * base_lr *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                         static_cast<double>(total_steps)));
}

SgdMomentum::SgdMomentum(const std::vector<nn::Param*>& params, double momentum)
    : momentum_(momentum) {
  if (momentum < 0.0 || momentum >= 1.0) {
    throw std::invalid_argument("momentum must be in [0, 1)");
  }
  for (nn::Param* p : params) {
    if (!p->trainable) continue;
    params_.push_back(p);
    velocity_.emplace_back(p->value.shape());
  }
}

void SgdMomentum::step(double lr) {
  for (nn::Param* p : params_) {
    if (!p->grad.all_finite()) {
      throw std::runtime_error("non-finite gradient for " + p->name);
    }
  }
  for (size_t i = 0; i < params_.size(); ++i) {
    velocity_[i].scale(momentum_);
    velocity_[i].add(params_[i]->grad);
    params_[i]->value.add_scaled(velocity_[i], -lr);
  }
}

void TrainConfig::validate() const {
  if (!(base_lr > 0.0)) throw std::invalid_argument("base_lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw std::invalid_argument("momentum must be in [0, 1)");
  }
  if (total_steps < 1) throw std::invalid_argument("total_steps must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (roi.rois_per_clip < 1) throw std::invalid_argument("rois_per_clip must be >= 1");
  if (rpn.positive_cap < 0 || rpn.negative_cap < 0 || roi.positive_cap < 0) {
    throw std::invalid_argument("sampling caps must be non-negative");
  }
}

void write_loss_log(std::ostream& out, const std::vector<StepStats>& stats) {
  out << "step,lr,rpn_cls,rpn_reg,cls,reg,total\n";
  for (const StepStats& s : stats) {
    out << s.step << ',' << format_g17(s.lr) << ',' << format_g17(s.rpn_cls) << ','
        << format_g17(s.rpn_reg) << ',' << format_g17(s.cls) << ','
        << format_g17(s.reg) << ',' << format_g17(s.total) << '\n';
  }
}

std::vector<StepStats> train(ActionDetector& model,
                             const std::vector<data::ClipSample>& samples,
                             const TrainConfig& config) {
  config.validate();
  if (samples.empty()) throw std::invalid_argument("training set is empty");

  const ModelConfig& mc = model.config();
  const int frames = mc.backbone.input_frames;
  const int size = mc.backbone.input_size;
  const int chans = mc.backbone.input_channels;
  for (const data::ClipSample& s : samples) {
    if (s.clip.rank() != 4 || s.clip.dim(0) != frames || s.clip.dim(1) != size ||
        s.clip.dim(2) != size || s.clip.dim(3) != chans) {
      throw std::invalid_argument("clip " + s.video_id + " has shape " +
                                  s.clip.shape_str() + ", expected (" +
                                  std::to_string(frames) + "," + std::to_string(size) +
                                  "," + std::to_string(size) + "," +
                                  std::to_string(chans) + ")");
    }
    for (const data::Annotation& a : s.boxes) {
      for (int action : a.actions) {
        if (action < 0 || action >= mc.num_classes) {
          throw std::invalid_argument("clip " + s.video_id + " has action id " +
                                      std::to_string(action) + " outside [0, " +
                                      std::to_string(mc.num_classes) + ")");
        }
      }
    }
  }

  Rng order_rng(mix_seed(config.seed, 11));
  Rng augment_rng(mix_seed(config.seed, 12));
  Rng rpn_rng(mix_seed(config.seed, 13));
  Rng roi_rng(mix_seed(config.seed, 14));

  SgdMomentum optimizer(model.params(), config.momentum);
  const int n_samples = static_cast<int>(samples.size());
  std::vector<int> order(static_cast<size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) order[static_cast<size_t>(i)] = i;
  int cursor = n_samples;  // forces a shuffle before the first batch

  const int n_anchors = static_cast<int>(model.anchors().size());
  const int classes = mc.num_classes;
  const int reg_cols = mc.reg_columns();
  const std::int64_t clip_elems =
      static_cast<std::int64_t>(frames) * size * size * chans;

  std::vector<StepStats> log;
  log.reserve(static_cast<size_t>(config.total_steps));

  for (int step = 0; step < config.total_steps; ++step) {
    std::vector<data::ClipSample> batch;
    batch.reserve(static_cast<size_t>(config.batch_size));
    for (int k = 0; k < config.batch_size; ++k) {
      if (cursor == n_samples) {
        order_rng.shuffle(order);
        cursor = 0;
      }
      const data::ClipSample& src = samples[static_cast<size_t>(order[static_cast<size_t>(cursor++)])];
      batch.push_back(config.augment
                          ? data::augment_sample(src, config.augmentation, augment_rng)
                          : src);
    }
    const int b = config.batch_size;
    Tensor clips({b, frames, size, size, chans});
    for (int k = 0; k < b; ++k) {
      std::memcpy(clips.data() + static_cast<std::int64_t>(k) * clip_elems,
                  batch[static_cast<size_t>(k)].clip.data(),
                  sizeof(double) * static_cast<size_t>(clip_elems));
    }

    model.zero_grads();
    Tensor volume = model.backbone().trunk_forward(clips);
    Tensor center = slice_center_frame(volume);
    RpnHead::Output rpn_out = model.rpn().forward(center);
    std::vector<std::vector<geom::Box>> proposals = model.propose_batch(rpn_out);

    // RPN losses over the sampled anchors of the whole batch.
    std::vector<double> rpn_probs, rpn_labels, rpn_pred, rpn_target;
    std::vector<std::int64_t> cls_pos, reg_pos;  // flat offsets for scatter
    for (int k = 0; k < b; ++k) {
      const std::vector<RpnExample> ex = assign_rpn_targets(
          model.anchors(), annotation_boxes(batch[static_cast<size_t>(k)].boxes),
          config.rpn, rpn_rng);
      for (const RpnExample& e : ex) {
        const std::int64_t at = static_cast<std::int64_t>(k) * n_anchors + e.anchor;
        rpn_probs.push_back(rpn_out.scores[at]);
        rpn_labels.push_back(e.label);
        cls_pos.push_back(at);
        if (e.label == 1.0) {
          const double t[4] = {e.delta.tx, e.delta.ty, e.delta.tw, e.delta.th};
          for (int d = 0; d < 4; ++d) {
            rpn_pred.push_back(rpn_out.deltas[at * 4 + d]);
            rpn_target.push_back(t[d]);
            reg_pos.push_back(at * 4 + d);
          }
        }
      }
    }
    std::vector<double> rpn_cls_grad(rpn_probs.size(), 0.0);
    std::vector<double> rpn_reg_grad(rpn_pred.size(), 0.0);
    const double rpn_cls_loss =
        bce_mean(rpn_probs.data(), rpn_labels.data(), static_cast<int>(rpn_probs.size()),
                 config.rpn_cls_weight, rpn_cls_grad.data());
    const double rpn_reg_loss = smooth_l1_mean(
        rpn_pred.data(), rpn_target.data(), static_cast<int>(rpn_pred.size()),
        config.rpn_reg_weight, rpn_reg_grad.data());
    Tensor grad_scores({b, n_anchors});
    Tensor grad_deltas({b, n_anchors, 4});
    for (size_t i = 0; i < cls_pos.size(); ++i) grad_scores[cls_pos[i]] += rpn_cls_grad[i];
    for (size_t i = 0; i < reg_pos.size(); ++i) grad_deltas[reg_pos[i]] += rpn_reg_grad[i];

    // Detection targets: sampled RoIs over proposals + gt boxes.
    std::vector<RoiRef> rois;
    std::vector<int> roi_batch;
    std::vector<RoiExample> roi_examples;
    for (int k = 0; k < b; ++k) {
      const std::vector<RoiExample> ex =
          assign_detection_targets(proposals[static_cast<size_t>(k)],
                                   batch[static_cast<size_t>(k)].boxes, config.roi, roi_rng);
      for (const RoiExample& e : ex) {
        rois.push_back({k, e.box});
        roi_batch.push_back(k);
        roi_examples.push_back(e);
      }
    }

    double cls_loss = 0.0, reg_loss = 0.0;
    const int r = static_cast<int>(rois.size());
    if (r > 0) {
      Tensor pooled = model.roi_pool().forward(volume, rois);
      Tensor embed = model.backbone().head_forward(pooled);
      Tensor context;
      if (mc.use_context) {
        Tensor frames_slice = slice_center_frame(clips);
        context = model.backbone().context_forward(
            frames_slice.reshaped({b, 1, size, size, chans}));
      }
      ActionDetector::HeadOutput heads =
          model.heads_forward(embed, mc.use_context ? &context : nullptr, roi_batch);

      std::vector<double> cls_targets(static_cast<size_t>(r) * classes, 0.0);
      for (int i = 0; i < r; ++i) {
        for (int action : roi_examples[static_cast<size_t>(i)].actions) {
          cls_targets[static_cast<size_t>(i) * classes + action] = 1.0;
        }
      }
      Tensor grad_probs({r, classes});
      cls_loss = bce_mean(heads.probs.data(), cls_targets.data(), r * classes,
                          config.cls_weight, grad_probs.data());

      std::vector<double> reg_pred, reg_target;
      std::vector<std::int64_t> reg_at;
      for (int i = 0; i < r; ++i) {
        const RoiExample& e = roi_examples[static_cast<size_t>(i)];
        if (!e.positive) continue;
        const double t[4] = {e.delta.tx, e.delta.ty, e.delta.tw, e.delta.th};
        if (mc.per_class_regression) {
          for (int action : e.actions) {
            for (int d = 0; d < 4; ++d) {
              const std::int64_t at =
                  static_cast<std::int64_t>(i) * reg_cols + 4 * action + d;
              reg_pred.push_back(heads.reg[at]);
              reg_target.push_back(t[d]);
              reg_at.push_back(at);
            }
          }
        } else {
          for (int d = 0; d < 4; ++d) {
            const std::int64_t at = static_cast<std::int64_t>(i) * reg_cols + d;
            reg_pred.push_back(heads.reg[at]);
            reg_target.push_back(t[d]);
            reg_at.push_back(at);
          }
        }
      }
      std::vector<double> reg_grad(reg_pred.size(), 0.0);
      reg_loss = smooth_l1_mean(reg_pred.data(), reg_target.data(),
                                static_cast<int>(reg_pred.size()), config.reg_weight,
                                reg_grad.data());
      Tensor grad_reg({r, reg_cols});
      for (size_t i = 0; i < reg_at.size(); ++i) grad_reg[reg_at[i]] += reg_grad[i];

      ActionDetector::HeadGrads hg = model.heads_backward(grad_probs, grad_reg);
      Tensor grad_pooled = model.backbone().head_backward(hg.grad_embed);
      Tensor grad_volume = model.roi_pool().backward(grad_pooled);
      if (mc.use_context) model.backbone().context_backward(hg.grad_context);
      Tensor grad_center = model.rpn().backward(grad_scores, grad_deltas);
      grad_volume.add(slice_center_frame_backward(grad_center, volume.shape()));
      model.backbone().trunk_backward(grad_volume);
    } else {
      Tensor grad_center = model.rpn().backward(grad_scores, grad_deltas);
      Tensor grad_volume =
          slice_center_frame_backward(grad_center, volume.shape());
      model.backbone().trunk_backward(grad_volume);
    }

    const double lr = cosine_lr(step, config.total_steps, config.base_lr);
    optimizer.step(lr);

    StepStats s;
    s.step = step;
    s.lr = lr;
    s.rpn_cls = rpn_cls_loss;
    s.rpn_reg = rpn_reg_loss;
    s.cls = cls_loss;
    s.reg = reg_loss;
    s.total = rpn_cls_loss + rpn_reg_loss + cls_loss + reg_loss;
    log.push_back(s);
  }
  return log;
}

}  // namespace stal
