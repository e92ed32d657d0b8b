#pragma once

#include <torch/torch.h>

#include <vector>

#include "neounet/error.hpp"

namespace neounet {

// Hyperparameters of the hybrid loss. alpha weighs false positives, beta
// false negatives (alpha + beta must equal 1), gamma is the focal exponent
// parameter, w_class / w_seg weigh the multi-class and segmentation terms.
struct LossConfig {
  double alpha = 0.3;
  double beta = 0.7;
  double gamma = 4.0 / 3.0;
  double w_class = 0.75;
  double w_seg = 0.25;
  double smooth = 1.0;

  void validate() const;
};

// Per-pixel supervision derived from a 4-valued label mask:
//   class_targets  [N,2,H,W]  one-hot over {non-neoplastic, neoplastic};
//                             zero on background and unknown pixels
//   known_mask     [N,1,H,W]  0 where the label is unknown (3), else 1
//   seg_target     [N,1,H,W]  1 where the label is any polyp (1, 2 or 3)
struct SupervisionTarget {
  torch::Tensor class_targets;
  torch::Tensor known_mask;
  torch::Tensor seg_target;

  int64_t height() const { return seg_target.size(2); }
  int64_t width() const { return seg_target.size(3); }
};

// Builds supervision maps from integer labels [N,H,W] (values in {0,1,2,3}).
SupervisionTarget make_supervision_target(const torch::Tensor& labels,
                                          torch::Dtype dtype = torch::kFloat32);

// Soft Tversky loss 1 - (TP+s)/(TP + a*FP + b*FN + s) over the whole tensor.
torch::Tensor tversky_loss(const torch::Tensor& pred,
                           const torch::Tensor& target, double alpha,
                           double beta, double smooth);

// (1 - TI)^(1/gamma); identical to tversky_loss when gamma == 1.
torch::Tensor focal_tversky_loss(const torch::Tensor& pred,
                                 const torch::Tensor& target, double alpha,
                                 double beta, double gamma, double smooth);

// Mean binary cross-entropy over elements where mask == 1 (0 if none).
// mask must be binary and broadcastable to pred's shape.
torch::Tensor masked_bce(const torch::Tensor& pred, const torch::Tensor& target,
                         const torch::Tensor& mask);

// Probabilistic OR of the two class channels: 1 - (1-p0)(1-p1), shape [N,1,H,W].
// Coincides with the boolean OR on {0,1}-valued inputs.
torch::Tensor soft_or(const torch::Tensor& pred);

// Multi-class loss: (masked BCE + masked focal Tversky) / 2. Unknown pixels
// are excluded from both the BCE mean and the per-channel soft counts, so
// they contribute neither value nor gradient.
torch::Tensor multi_class_loss(const torch::Tensor& pred,
                               const SupervisionTarget& target,
                               const LossConfig& config);

// Segmentation loss on the OR mask: (BCE + Tversky) / 2, no unknown masking.
torch::Tensor segmentation_loss(const torch::Tensor& pred,
                                const SupervisionTarget& target,
                                const LossConfig& config);

// Deep-supervised hybrid loss: every head is upsampled to the target size,
// scored with w_class * L_c + w_seg * L_s, and the per-head values summed.
torch::Tensor total_loss(const std::vector<torch::Tensor>& heads,
                         const SupervisionTarget& target,
                         const LossConfig& config);

} // namespace neounet
