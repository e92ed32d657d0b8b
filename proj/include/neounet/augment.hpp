#pragma once

#include <cstdint>

#include "neounet/dataset.hpp"

namespace neounet {

// On-the-fly augmentation. With probability apply_probability a uniformly
// chosen subset of the enabled operations is applied (geometric first, so
// image and mask stay aligned; photometric operations never touch the mask).
struct AugmentationPolicy {
  bool rotate = true;
  bool horizontal_flip = true;
  bool vertical_flip = true;
  bool motion_blur = true;
  bool color_jitter = true;
  double apply_probability = 0.7;

  // Operation magnitudes.
  double max_rotation_deg = 30.0;
  int blur_kernel_min = 3;
  int blur_kernel_max = 7;
  double jitter_strength = 0.2;  // +-20% brightness/contrast/saturation
};

LoadedSample augment(const LoadedSample& sample, const AugmentationPolicy& policy,
                     uint64_t seed);

// Individual operations, exposed for direct testing.
void rotate_sample(LoadedSample& sample, double degrees);
void flip_sample(LoadedSample& sample, bool horizontal);
void motion_blur_image(cv::Mat3b& image, int kernel_size, double angle_deg);
void color_jitter_image(cv::Mat3b& image, double brightness, double contrast,
                        double saturation);

} // namespace neounet
