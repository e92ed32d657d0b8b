#include "neounet/loss.hpp"

#include <cmath>
#include <sstream>

namespace neounet {

namespace F = torch::nn::functional;

namespace {

// Clamp bound for probabilities inside logarithms.
constexpr double kLogEps = 1e-7;
// Below this, (1-TI)^(1/gamma) is treated as exactly 0; keeps the pow
// gradient finite when the Tversky index saturates at 1.
constexpr double kPowEps = 1e-16;

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b,
                      const char* what) {
  if (!a.sizes().equals(b.sizes())) {
    std::ostringstream os;
    os << what << ": shape mismatch " << a.sizes() << " vs " << b.sizes();
    throw DomainError(os.str());
  }
}

void check_unit_range(const torch::Tensor& t, const char* what) {
  if (t.numel() == 0) return;
  const double lo = t.min().item<double>();
  const double hi = t.max().item<double>();
  if (lo < 0.0 || hi > 1.0) {
    std::ostringstream os;
    os << what << ": values outside [0,1] (min " << lo << ", max " << hi << ")";
    throw DomainError(os.str());
  }
}

// Elementwise BCE with clamped logs; finite for any pred in [0,1].
torch::Tensor bce_elements(const torch::Tensor& pred,
                           const torch::Tensor& target) {
  auto log_p = torch::log(pred.clamp(kLogEps, 1.0 - kLogEps));
  auto log_not_p = torch::log((1.0 - pred).clamp(kLogEps, 1.0 - kLogEps));
  return -(target * log_p + (1.0 - target) * log_not_p);
}

// (1 - TI)^(1/gamma) with an exact-zero branch so a saturated Tversky index
// yields value 0 and gradient 0 instead of 0 * inf = NaN.
torch::Tensor focal_pow(const torch::Tensor& one_minus_ti, double gamma) {
  if (gamma == 1.0) return one_minus_ti;
  auto powed = torch::pow(one_minus_ti.clamp_min(kPowEps), 1.0 / gamma);
  return torch::where(one_minus_ti > kPowEps, powed, one_minus_ti * 0.0);
}

} // namespace

void LossConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0)) {
    throw ConfigError("loss: alpha and beta must lie in (0,1)");
  }
  if (std::abs(alpha + beta - 1.0) > 1e-9) {
    throw ConfigError("loss: alpha + beta must equal 1, got " +
                      std::to_string(alpha + beta));
  }
  if (!(gamma >= 1.0)) {
    throw ConfigError("loss: gamma must be >= 1");
  }
  if (w_class < 0.0 || w_seg < 0.0) {
    throw ConfigError("loss: w_class and w_seg must be >= 0");
  }
  if (!(smooth > 0.0)) {
    throw ConfigError("loss: smooth must be > 0");
  }
}

SupervisionTarget make_supervision_target(const torch::Tensor& labels,
                                          torch::Dtype dtype) {
  if (labels.dim() != 3) {
    throw DomainError("make_supervision_target: labels must be [N,H,W]");
  }
  auto opts = torch::TensorOptions().dtype(dtype);
  auto non = (labels == 1).to(opts).unsqueeze(1);
  auto neo = (labels == 2).to(opts).unsqueeze(1);
  SupervisionTarget t;
  t.class_targets = torch::cat({non, neo}, 1);
  t.known_mask = (labels != 3).to(opts).unsqueeze(1);
  t.seg_target = (labels >= 1).to(opts).unsqueeze(1);
  return t;
}

torch::Tensor tversky_loss(const torch::Tensor& pred,
                           const torch::Tensor& target, double alpha,
                           double beta, double smooth) {
  check_same_shape(pred, target, "tversky_loss");
  check_unit_range(pred, "tversky_loss: pred");
  check_unit_range(target, "tversky_loss: target");
  auto tp = (pred * target).sum();
  auto fp = (pred * (1.0 - target)).sum();
  auto fn = ((1.0 - pred) * target).sum();
  auto ti = (tp + smooth) / (tp + alpha * fp + beta * fn + smooth);
  return 1.0 - ti;
}

torch::Tensor focal_tversky_loss(const torch::Tensor& pred,
                                 const torch::Tensor& target, double alpha,
                                 double beta, double gamma, double smooth) {
  if (!(gamma >= 1.0)) {
    throw DomainError("focal_tversky_loss: gamma must be >= 1");
  }
  return focal_pow(tversky_loss(pred, target, alpha, beta, smooth), gamma);
}

torch::Tensor masked_bce(const torch::Tensor& pred, const torch::Tensor& target,
                         const torch::Tensor& mask) {
  check_same_shape(pred, target, "masked_bce");
  check_unit_range(pred, "masked_bce: pred");
  auto mask_b = mask.broadcast_to(pred.sizes());
  if (mask.numel() > 0 &&
      (mask * (1.0 - mask)).abs().max().item<double>() != 0.0) {
    throw DomainError("masked_bce: mask must be binary");
  }
  auto num = (bce_elements(pred, target) * mask_b).sum();
  auto denom = mask_b.sum().clamp_min(1.0);
  return num / denom;
}

torch::Tensor soft_or(const torch::Tensor& pred) {
  if (pred.dim() != 4 || pred.size(1) != 2) {
    throw DomainError("soft_or: expected a 2-channel map [N,2,H,W]");
  }
  auto p0 = pred.narrow(1, 0, 1);
  auto p1 = pred.narrow(1, 1, 1);
  return 1.0 - (1.0 - p0) * (1.0 - p1);
}

torch::Tensor multi_class_loss(const torch::Tensor& pred,
                               const SupervisionTarget& target,
                               const LossConfig& config) {
  check_same_shape(pred, target.class_targets, "multi_class_loss");
  auto bce = masked_bce(pred, target.class_targets, target.known_mask);

  // Per-channel soft counts restricted to known pixels, then the two focal
  // Tversky losses are averaged.
  auto m = target.known_mask;
  auto t = target.class_targets;
  auto tp = (m * pred * t).sum({0, 2, 3});
  auto fp = (m * pred * (1.0 - t)).sum({0, 2, 3});
  auto fn = (m * (1.0 - pred) * t).sum({0, 2, 3});
  auto ti = (tp + config.smooth) /
            (tp + config.alpha * fp + config.beta * fn + config.smooth);
  auto ft = focal_pow(1.0 - ti, config.gamma).mean();

  return (bce + ft) / 2.0;
}

torch::Tensor segmentation_loss(const torch::Tensor& pred,
                                const SupervisionTarget& target,
                                const LossConfig& config) {
  check_same_shape(pred, target.class_targets, "segmentation_loss");
  auto or_map = soft_or(pred);
  auto bce = bce_elements(or_map, target.seg_target).mean();
  auto tv = tversky_loss(or_map, target.seg_target, config.alpha, config.beta,
                         config.smooth);
  return (bce + tv) / 2.0;
}

torch::Tensor total_loss(const std::vector<torch::Tensor>& heads,
                         const SupervisionTarget& target,
                         const LossConfig& config) {
  if (heads.empty()) {
    throw DomainError("total_loss: no heads given");
  }
  const std::vector<int64_t> size{target.height(), target.width()};
  torch::Tensor total;
  for (const auto& head : heads) {
    auto up = head;
    if (head.size(2) != size[0] || head.size(3) != size[1]) {
      up = F::interpolate(head, F::InterpolateFuncOptions()
                                    .size(size)
                                    .mode(torch::kBilinear)
                                    .align_corners(false));
    }
    auto term = torch::zeros({}, up.options());
    if (config.w_class != 0.0) {
      term = term + config.w_class * multi_class_loss(up, target, config);
    }
    if (config.w_seg != 0.0) {
      term = term + config.w_seg * segmentation_loss(up, target, config);
    }
    total = total.defined() ? total + term : term;
  }
  return total;
}

} // namespace neounet
