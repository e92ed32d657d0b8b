#include "neounet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <opencv2/imgproc.hpp>

namespace neounet {

void rotate_sample(LoadedSample& sample, double degrees) {
  const cv::Point2f center((sample.image.cols - 1) * 0.5f,
                           (sample.image.rows - 1) * 0.5f);
  const cv::Mat rot = cv::getRotationMatrix2D(center, degrees, 1.0);
  cv::Mat3b image_out;
  cv::Mat1b labels_out;
  cv::warpAffine(sample.image, image_out, rot, sample.image.size(),
                 cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar(0, 0, 0));
  cv::warpAffine(sample.labels, labels_out, rot, sample.labels.size(),
                 cv::INTER_NEAREST, cv::BORDER_CONSTANT, cv::Scalar(0));
  sample.image = image_out;
  sample.labels = labels_out;
}

void flip_sample(LoadedSample& sample, bool horizontal) {
  const int code = horizontal ? 1 : 0;
  cv::flip(sample.image, sample.image, code);
  cv::flip(sample.labels, sample.labels, code);
}

void motion_blur_image(cv::Mat3b& image, int kernel_size, double angle_deg) {
  kernel_size = std::max(kernel_size, 3);
  cv::Mat kernel = cv::Mat::zeros(kernel_size, kernel_size, CV_32F);
  const double rad = angle_deg * CV_PI / 180.0;
  const double cx = (kernel_size - 1) * 0.5;
  // Rasterize a centered line at the given angle.
  for (int i = 0; i < kernel_size; ++i) {
    const double t = i - cx;
    const int x = static_cast<int>(std::round(cx + t * std::cos(rad)));
    const int y = static_cast<int>(std::round(cx + t * std::sin(rad)));
    if (x >= 0 && x < kernel_size && y >= 0 && y < kernel_size) {
      kernel.at<float>(y, x) = 1.0f;
    }
  }
  kernel /= cv::sum(kernel)[0];
  cv::filter2D(image, image, -1, kernel, cv::Point(-1, -1), 0,
               cv::BORDER_REFLECT_101);
}

void color_jitter_image(cv::Mat3b& image, double brightness, double contrast,
                        double saturation) {
  // Saturation in HSV space, then brightness/contrast on RGB.
  cv::Mat3b hsv;
  cv::cvtColor(image, hsv, cv::COLOR_RGB2HSV);
  for (int y = 0; y < hsv.rows; ++y) {
    auto* row = hsv.ptr<cv::Vec3b>(y);
    for (int x = 0; x < hsv.cols; ++x) {
      row[x][1] = cv::saturate_cast<uchar>(row[x][1] * saturation);
    }
  }
  cv::cvtColor(hsv, image, cv::COLOR_HSV2RGB);
  const double pivot = 127.0;
  image.convertTo(image, -1, brightness * contrast,
                  pivot * (1.0 - contrast) * brightness);
}

LoadedSample augment(const LoadedSample& sample, const AugmentationPolicy& policy,
                     uint64_t seed) {
  LoadedSample out;
  out.image = sample.image.clone();
  out.labels = sample.labels.clone();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) >= policy.apply_probability) {
    return out;
  }

  const bool do_rotate = policy.rotate && unit(rng) < 0.5;
  const bool do_hflip = policy.horizontal_flip && unit(rng) < 0.5;
  const bool do_vflip = policy.vertical_flip && unit(rng) < 0.5;
  const bool do_blur = policy.motion_blur && unit(rng) < 0.5;
  const bool do_jitter = policy.color_jitter && unit(rng) < 0.5;

  if (do_rotate) {
    std::uniform_real_distribution<double> deg(-policy.max_rotation_deg,
                                               policy.max_rotation_deg);
    rotate_sample(out, deg(rng));
  }
  if (do_hflip) flip_sample(out, true);
  if (do_vflip) flip_sample(out, false);
  if (do_blur) {
    std::uniform_int_distribution<int> half(policy.blur_kernel_min / 2,
                                            policy.blur_kernel_max / 2);
    std::uniform_real_distribution<double> ang(0.0, 180.0);
    motion_blur_image(out.image, 2 * half(rng) + 1, ang(rng));
  }
  if (do_jitter) {
    std::uniform_real_distribution<double> factor(1.0 - policy.jitter_strength,
                                                  1.0 + policy.jitter_strength);
    const double b = factor(rng);
    const double c = factor(rng);
    const double s = factor(rng);
    color_jitter_image(out.image, b, c, s);
  }
  return out;
}

} // namespace neounet
