#pragma once

#include <opencv2/core.hpp>

#include <array>

namespace neounet {

// Color-coded 4-class mask codec (RGB order):
//   0 background (0,0,0)   1 non-neoplastic (0,255,0)
//   2 neoplastic (255,0,0) 3 unknown (255,255,0)
// Decoding snaps each pixel to the nearest table color within a per-channel
// tolerance and fails fast, listing offending coordinates, on anything else.
struct MaskCodec {
  int tolerance = 8;

  static constexpr std::array<std::array<int, 3>, 4> kColorsRgb{
      {{0, 0, 0}, {0, 255, 0}, {255, 0, 0}, {255, 255, 0}}};

  // rgb: CV_8UC3 in RGB channel order. Returns CV_8UC1 labels in {0,1,2,3}.
  cv::Mat1b decode(const cv::Mat& rgb) const;

  // Exact table colors; inverse of decode on valid masks.
  cv::Mat3b encode(const cv::Mat1b& labels) const;
};

} // namespace neounet
