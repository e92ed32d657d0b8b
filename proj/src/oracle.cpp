#include "neounet/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace neounet::oracle {

namespace {

double clamp01_log(double p) {
  const double lo = 1e-7;
  return std::log(std::min(std::max(p, lo), 1.0 - lo));
}

double bce_term(double p, double t) {
  return -(t * clamp01_log(p) + (1.0 - t) * clamp01_log(1.0 - p));
}

double focal_of(double one_minus_ti, double gamma) {
  if (gamma == 1.0) return one_minus_ti;
  if (one_minus_ti <= 1e-16) return 0.0;
  return std::pow(one_minus_ti, 1.0 / gamma);
}

} // namespace

ConfusionCounts confusion(const std::vector<int>& pred,
                          const std::vector<int>& truth, int h, int w) {
  if (pred.size() != static_cast<size_t>(h) * w ||
      truth.size() != static_cast<size_t>(h) * w) {
    throw std::invalid_argument("oracle::confusion: size mismatch");
  }
  ConfusionCounts c;
  for (int i = 0; i < h * w; ++i) {
    const int p = pred[i];
    const int t = truth[i];
    const bool pred_polyp = (p == 1 || p == 2);
    const bool true_polyp = (t == 1 || t == 2 || t == 3);
    if (pred_polyp && true_polyp) c.seg.tp++;
    if (pred_polyp && !true_polyp) c.seg.fp++;
    if (!pred_polyp && true_polyp) c.seg.fn++;
    if (t != 3) {
      if (p == 1 && t == 1) c.non.tp++;
      if (p == 1 && t != 1) c.non.fp++;
      if (p != 1 && t == 1) c.non.fn++;
      if (p == 2 && t == 2) c.neo.tp++;
      if (p == 2 && t != 2) c.neo.fp++;
      if (p != 2 && t == 2) c.neo.fn++;
    }
  }
  return c;
}

double dice(const Counts& c) {
  if (c.tp == 0 && c.fp == 0 && c.fn == 0) return 1.0;
  return 2.0 * c.tp / static_cast<double>(2 * c.tp + c.fp + c.fn);
}

double iou(const Counts& c) {
  if (c.tp == 0 && c.fp == 0 && c.fn == 0) return 1.0;
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp + c.fn);
}

double tversky(const std::vector<double>& pred, const std::vector<double>& target,
               double alpha, double beta, double smooth) {
  if (pred.size() != target.size()) {
    throw std::invalid_argument("oracle::tversky: size mismatch");
  }
  double tp = 0.0, fp = 0.0, fn = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    tp += pred[i] * target[i];
    fp += pred[i] * (1.0 - target[i]);
    fn += (1.0 - pred[i]) * target[i];
  }
  const double ti = (tp + smooth) / (tp + alpha * fp + beta * fn + smooth);
  return 1.0 - ti;
}

double focal_tversky(const std::vector<double>& pred,
                     const std::vector<double>& target, double alpha, double beta,
                     double gamma, double smooth) {
  return focal_of(tversky(pred, target, alpha, beta, smooth), gamma);
}

double bce_masked(const std::vector<double>& pred,
                  const std::vector<double>& target,
                  const std::vector<double>& mask) {
  if (pred.size() != target.size() || pred.size() != mask.size()) {
    throw std::invalid_argument("oracle::bce_masked: size mismatch");
  }
  double sum = 0.0;
  double count = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    sum += mask[i] * bce_term(pred[i], target[i]);
    count += mask[i];
  }
  return count > 0.0 ? sum / count : 0.0;
}

double multi_class(const ProbMap& pred, const std::vector<int>& labels,
                   const LossParams& params) {
  const int n = pred.h * pred.w;
  if (static_cast<int>(labels.size()) != n) {
    throw std::invalid_argument("oracle::multi_class: size mismatch");
  }
  double bce_sum = 0.0;
  double known = 0.0;
  double tp0 = 0.0, fp0 = 0.0, fn0 = 0.0;
  double tp1 = 0.0, fp1 = 0.0, fn1 = 0.0;
  for (int i = 0; i < n; ++i) {
    if (labels[i] == 3) continue;
    const double t0 = labels[i] == 1 ? 1.0 : 0.0;
    const double t1 = labels[i] == 2 ? 1.0 : 0.0;
    bce_sum += bce_term(pred.p0[i], t0) + bce_term(pred.p1[i], t1);
    known += 2.0;
    tp0 += pred.p0[i] * t0;
    fp0 += pred.p0[i] * (1.0 - t0);
    fn0 += (1.0 - pred.p0[i]) * t0;
    tp1 += pred.p1[i] * t1;
    fp1 += pred.p1[i] * (1.0 - t1);
    fn1 += (1.0 - pred.p1[i]) * t1;
  }
  const double bce = known > 0.0 ? bce_sum / known : 0.0;
  const double s = params.smooth;
  const double ti0 = (tp0 + s) / (tp0 + params.alpha * fp0 + params.beta * fn0 + s);
  const double ti1 = (tp1 + s) / (tp1 + params.alpha * fp1 + params.beta * fn1 + s);
  const double ft =
      0.5 * (focal_of(1.0 - ti0, params.gamma) + focal_of(1.0 - ti1, params.gamma));
  return (bce + ft) / 2.0;
}

double segmentation(const ProbMap& pred, const std::vector<int>& labels,
                    const LossParams& params) {
  const int n = pred.h * pred.w;
  if (static_cast<int>(labels.size()) != n) {
    throw std::invalid_argument("oracle::segmentation: size mismatch");
  }
  double bce_sum = 0.0;
  std::vector<double> or_map(n), seg_t(n);
  for (int i = 0; i < n; ++i) {
    or_map[i] = 1.0 - (1.0 - pred.p0[i]) * (1.0 - pred.p1[i]);
    seg_t[i] = labels[i] >= 1 ? 1.0 : 0.0;
    bce_sum += bce_term(or_map[i], seg_t[i]);
  }
  const double bce = bce_sum / n;
  const double tv = tversky(or_map, seg_t, params.alpha, params.beta, params.smooth);
  return (bce + tv) / 2.0;
}

std::vector<double> upsample_bilinear(const std::vector<double>& src, int sh,
                                      int sw, int dh, int dw) {
  std::vector<double> dst(static_cast<size_t>(dh) * dw);
  const double sy = static_cast<double>(sh) / dh;
  const double sx = static_cast<double>(sw) / dw;
  for (int y = 0; y < dh; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::max(fy, 0.0);
    const int y0 = std::min(static_cast<int>(fy), sh - 1);
    const int y1 = std::min(y0 + 1, sh - 1);
    const double wy = fy - y0;
    for (int x = 0; x < dw; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::max(fx, 0.0);
      const int x0 = std::min(static_cast<int>(fx), sw - 1);
      const int x1 = std::min(x0 + 1, sw - 1);
      const double wx = fx - x0;
      const double top = src[y0 * sw + x0] * (1.0 - wx) + src[y0 * sw + x1] * wx;
      const double bot = src[y1 * sw + x0] * (1.0 - wx) + src[y1 * sw + x1] * wx;
      dst[y * dw + x] = top * (1.0 - wy) + bot * wy;
    }
  }
  return dst;
}

double total(const std::vector<ProbMap>& heads, const std::vector<int>& labels,
             int h, int w, const LossParams& params) {
  double sum = 0.0;
  for (const auto& head : heads) {
    ProbMap up;
    up.h = h;
    up.w = w;
    up.p0 = upsample_bilinear(head.p0, head.h, head.w, h, w);
    up.p1 = upsample_bilinear(head.p1, head.h, head.w, h, w);
    sum += params.w_class * multi_class(up, labels, params) +
           params.w_seg * segmentation(up, labels, params);
  }
  return sum;
}

} // namespace neounet::oracle
