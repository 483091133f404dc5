#include "stal/model.hpp"

#include <cstring>
#include <stdexcept>
#include <string>

#include "stal/rng.hpp"

namespace stal {
namespace {

ModelConfig effective_config(ModelConfig config) {
  if (config.num_classes <= 0) {
    throw std::invalid_argument("model config: num_classes must be positive");
  }
  if (config.pool_size <= 0) {
    throw std::invalid_argument("model config: pool_size must be positive");
  }
  if (config.static_backbone) {
    config.backbone = config.backbone.to_static();
  }
  config.backbone.validate(/*require_temporal_kernel=*/!config.static_backbone);
  return config;
}

}  // namespace

void ModelConfig::validate() const { effective_config(*this); }

ActionDetector::ActionDetector(const ModelConfig& config)
    : config_(effective_config(config)),
      backbone_(config_.backbone, config_.use_context),
      rpn_(config_.backbone.trunk_channels(), config_.anchors.anchors_per_cell(),
           config_.rpn_hidden),
      roi_pool_(config_.pool_size),
      cls_head_("cls_head", backbone_.embed_dim(), config_.num_classes),
      reg_head_("reg_head", backbone_.embed_dim(), config_.reg_columns()) {
  const auto extents = config_.backbone.trunk_output_extents();
  anchors_ = generate_anchors(extents[1], extents[2], config_.anchors);
}

std::vector<nn::Param*> ActionDetector::params() {
  std::vector<nn::Param*> out;
  backbone_.collect_params(out);
  rpn_.collect_params(out);
  cls_head_.collect_params(out);
  reg_head_.collect_params(out);
  return out;
}

void ActionDetector::init_params(std::uint64_t seed) {
  for (nn::Param* p : params()) {
    if (!p->trainable) continue;
    if (p->value.rank() >= 2) {
      const int fan_in =
          static_cast<int>(p->value.size()) / p->value.dim(p->value.rank() - 1);
      Rng rng(mix_seed(seed, hash_name(p->name)));
      nn::init_uniform(*p, fan_in, rng);
    } else {
      p->value.fill(0.0);  // biases
    }
  }
}

void ActionDetector::zero_grads() {
  for (nn::Param* p : params()) p->grad.fill(0.0);
}

ActionDetector::HeadOutput ActionDetector::heads_forward(
    const Tensor& embed, const Tensor* context, const std::vector<int>& roi_batch) {
  if (embed.rank() != 2) {
    throw std::invalid_argument("heads expect (R, c'') embeddings");
  }
  const int r = embed.dim(0);
  const int base = embed.dim(1);
  Tensor full = embed;
  if (config_.use_context) {
    if (context == nullptr || context->rank() != 2) {
      throw std::invalid_argument("context features missing for a context model");
    }
    if (static_cast<int>(roi_batch.size()) != r) {
      throw std::invalid_argument("roi_batch must map every embedding row");
    }
    const int ctx_dim = context->dim(1);
    full = Tensor({r, base + ctx_dim});
    for (int i = 0; i < r; ++i) {
      const int b = roi_batch[i];
      if (b < 0 || b >= context->dim(0)) {
        throw std::invalid_argument("roi_batch index out of range");
      }
      std::memcpy(full.data() + static_cast<size_t>(i) * (base + ctx_dim),
                  embed.data() + static_cast<size_t>(i) * base,
                  sizeof(double) * base);
      std::memcpy(full.data() + static_cast<size_t>(i) * (base + ctx_dim) + base,
                  context->data() + static_cast<size_t>(b) * ctx_dim,
                  sizeof(double) * ctx_dim);
    }
    roi_batch_ = roi_batch;
    context_rows_ = context->dim(0);
  }
  Tensor probs = cls_sigmoid_.forward(cls_head_.forward(full));
  Tensor reg = reg_head_.forward(full);
  return {std::move(probs), std::move(reg)};
}

ActionDetector::HeadGrads ActionDetector::heads_backward(const Tensor& grad_probs,
                                                         const Tensor& grad_reg) {
  Tensor grad_full = cls_head_.backward(cls_sigmoid_.backward(grad_probs));
  grad_full.add(reg_head_.backward(grad_reg));
  if (!config_.use_context) {
    return {std::move(grad_full), Tensor()};
  }
  const int r = grad_full.dim(0);
  const int base = config_.backbone.head_channels();
  const int ctx_dim = config_.backbone.context_channels();
  if (static_cast<int>(roi_batch_.size()) != r) {
    throw std::logic_error("heads backward without a matching forward trace");
  }
  Tensor grad_embed({r, base});
  Tensor grad_context({context_rows_, ctx_dim});
  for (int i = 0; i < r; ++i) {
    std::memcpy(grad_embed.data() + static_cast<size_t>(i) * base,
                grad_full.data() + static_cast<size_t>(i) * (base + ctx_dim),
                sizeof(double) * base);
    double* ctx_row = grad_context.data() + static_cast<size_t>(roi_batch_[i]) * ctx_dim;
    const double* src = grad_full.data() + static_cast<size_t>(i) * (base + ctx_dim) + base;
    for (int k = 0; k < ctx_dim; ++k) ctx_row[k] += src[k];
  }
  roi_batch_.clear();
  return {std::move(grad_embed), std::move(grad_context)};
}

std::vector<std::vector<geom::Box>> ActionDetector::propose_batch(
    const RpnHead::Output& rpn_out) const {
  const int b = rpn_out.scores.dim(0);
  const int n = rpn_out.scores.dim(1);
  if (n != static_cast<int>(anchors_.size())) {
    throw std::invalid_argument("rpn output does not match the anchor grid");
  }
  std::vector<std::vector<geom::Box>> proposals(b);
  for (int i = 0; i < b; ++i) {
    proposals[i] = propose(rpn_out.scores.data() + static_cast<size_t>(i) * n,
                           rpn_out.deltas.data() + static_cast<size_t>(i) * n * 4,
                           anchors_, config_.proposals);
  }
  return proposals;
}

std::vector<std::vector<geom::ScoredBox>> ActionDetector::infer(const Tensor& clips) {
  if (clips.rank() != 5) {
    throw std::invalid_argument("infer expects (B,T,H,W,C) clips");
  }
  const int b = clips.dim(0);
  Tensor volume = backbone_.trunk_forward(clips);
  Tensor center = slice_center_frame(volume);
  RpnHead::Output rpn_out = rpn_.forward(center);
  std::vector<std::vector<geom::Box>> proposals = propose_batch(rpn_out);

  std::vector<RoiRef> rois;
  std::vector<int> roi_batch;
  for (int i = 0; i < b; ++i) {
    for (const geom::Box& box : proposals[i]) {
      rois.push_back({i, box});
      roi_batch.push_back(i);
    }
  }
  std::vector<std::vector<geom::ScoredBox>> detections(b);
  if (rois.empty()) return detections;

  Tensor pooled = roi_pool_.forward(volume, rois);
  Tensor embed = backbone_.head_forward(pooled);
  Tensor context;
  if (config_.use_context) {
    Tensor frames = slice_center_frame(clips);
    context = backbone_.context_forward(frames.reshaped(
        {b, 1, clips.dim(2), clips.dim(3), clips.dim(4)}));
  }
  HeadOutput heads =
      heads_forward(embed, config_.use_context ? &context : nullptr, roi_batch);

  const int classes = config_.num_classes;
  const int reg_cols = config_.reg_columns();
  size_t row = 0;
  for (int i = 0; i < b; ++i) {
    const int count = static_cast<int>(proposals[i].size());
    if (count == 0) continue;
    Tensor probs({count, classes});
    Tensor reg({count, reg_cols});
    std::memcpy(probs.data(), heads.probs.data() + row * classes,
                sizeof(double) * probs.size());
    std::memcpy(reg.data(), heads.reg.data() + row * reg_cols,
                sizeof(double) * reg.size());
    detections[i] = postprocess(proposals[i], probs, reg,
                                config_.per_class_regression, config_.postprocess);
    row += static_cast<size_t>(count);
  }
  return detections;
}

}  // namespace stal
