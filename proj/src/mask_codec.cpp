#include "neounet/mask_codec.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "neounet/error.hpp"

namespace neounet {

cv::Mat1b MaskCodec::decode(const cv::Mat& rgb) const {
  if (rgb.type() != CV_8UC3) {
    throw DataError("mask decode: expected an 8-bit 3-channel image");
  }
  cv::Mat1b labels(rgb.rows, rgb.cols);
  std::ostringstream offenders;
  int offender_count = 0;
  for (int y = 0; y < rgb.rows; ++y) {
    const auto* row = rgb.ptr<cv::Vec3b>(y);
    for (int x = 0; x < rgb.cols; ++x) {
      const cv::Vec3b px = row[x];
      int best_label = -1;
      int best_dist = 256;
      for (int label = 0; label < 4; ++label) {
        const auto& c = kColorsRgb[label];
        const int dist = std::max({std::abs(px[0] - c[0]), std::abs(px[1] - c[1]),
                                   std::abs(px[2] - c[2])});
        if (dist < best_dist) {
          best_dist = dist;
          best_label = label;
        }
      }
      if (best_dist > tolerance) {
        if (offender_count < 8) {
          offenders << " (" << x << "," << y << ")=[" << int(px[0]) << ","
                    << int(px[1]) << "," << int(px[2]) << "]";
        }
        ++offender_count;
      } else {
        labels(y, x) = static_cast<uchar>(best_label);
      }
    }
  }
  if (offender_count > 0) {
    std::ostringstream os;
    os << "mask decode: " << offender_count
       << " pixel(s) outside tolerance " << tolerance
       << " of every mask color; first offenders:" << offenders.str();
    throw DataError(os.str());
  }
  return labels;
}

cv::Mat3b MaskCodec::encode(const cv::Mat1b& labels) const {
  cv::Mat3b rgb(labels.rows, labels.cols);
  for (int y = 0; y < labels.rows; ++y) {
    const uchar* src = labels.ptr<uchar>(y);
    auto* dst = rgb.ptr<cv::Vec3b>(y);
    for (int x = 0; x < labels.cols; ++x) {
      if (src[x] > 3) {
        throw DataError("mask encode: label " + std::to_string(src[x]) +
                        " outside {0,1,2,3} at (" + std::to_string(x) + "," +
                        std::to_string(y) + ")");
      }
      const auto& c = kColorsRgb[src[x]];
      dst[x] = cv::Vec3b(static_cast<uchar>(c[0]), static_cast<uchar>(c[1]),
                         static_cast<uchar>(c[2]));
    }
  }
  return rgb;
}

} // namespace neounet
