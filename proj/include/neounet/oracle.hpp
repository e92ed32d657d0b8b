#pragma once

// Brute-force reference computations used by tests and the acceptance suite.
// Everything here is written as literal per-pixel enumeration over plain
// buffers, with no code shared with the main modules, so agreement between
// the two routes is evidence rather than tautology.

#include <cstdint>
#include <vector>

namespace neounet::oracle {

struct Counts {
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
};

struct ConfusionCounts {
  Counts seg;
  Counts non;
  Counts neo;
};

// Pixel-wise confusion counts for a predicted vs true 4-valued mask, both
// row-major h*w. Unknown truth pixels (3) count as positives for `seg` and
// are left out of the per-class counts.
ConfusionCounts confusion(const std::vector<int>& pred,
                          const std::vector<int>& truth, int h, int w);

double dice(const Counts& c);
double iou(const Counts& c);

struct LossParams {
  double alpha = 0.3;
  double beta = 0.7;
  double gamma = 4.0 / 3.0;
  double w_class = 0.75;
  double w_seg = 0.25;
  double smooth = 1.0;
};

// A two-channel probability map plus its size; channel 0 is non-neoplastic.
struct ProbMap {
  int h = 0;
  int w = 0;
  std::vector<double> p0;
  std::vector<double> p1;
};

double tversky(const std::vector<double>& pred, const std::vector<double>& target,
               double alpha, double beta, double smooth);
double focal_tversky(const std::vector<double>& pred,
                     const std::vector<double>& target, double alpha, double beta,
                     double gamma, double smooth);
double bce_masked(const std::vector<double>& pred,
                  const std::vector<double>& target,
                  const std::vector<double>& mask);

// Multi-class loss over a probability map and integer labels (row-major h*w).
double multi_class(const ProbMap& pred, const std::vector<int>& labels,
                   const LossParams& params);

// Segmentation loss via the OR map.
double segmentation(const ProbMap& pred, const std::vector<int>& labels,
                    const LossParams& params);

// Bilinear upsample (half-pixel centers, no corner alignment) of one channel.
std::vector<double> upsample_bilinear(const std::vector<double>& src, int sh,
                                      int sw, int dh, int dw);

// Deep-supervised total: each head upsampled to (h, w), then
// w_class * L_c + w_seg * L_s, summed over heads.
double total(const std::vector<ProbMap>& heads, const std::vector<int>& labels,
             int h, int w, const LossParams& params);

} // namespace neounet::oracle
