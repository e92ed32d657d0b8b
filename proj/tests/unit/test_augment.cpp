#include <doctest.h>

#include <opencv2/core.hpp>

#include <array>
#include <random>

#include "neounet/augment.hpp"

using namespace neounet;

namespace {

LoadedSample checker_sample(int size = 32) {
  LoadedSample s;
  s.image.create(size, size);
  s.labels.create(size, size);
  std::mt19937_64 rng(5);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      s.image(y, x) = cv::Vec3b(uchar(rng() % 256), uchar(rng() % 256),
                                uchar(rng() % 256));
      s.labels(y, x) = uchar((x / 4 + y / 4) % 4);
    }
  }
  return s;
}

bool same(const cv::Mat& a, const cv::Mat& b) {
  return a.size() == b.size() && cv::countNonZero(a.reshape(1) != b.reshape(1)) == 0;
}

std::array<int64_t, 4> label_histogram(const cv::Mat1b& labels) {
  std::array<int64_t, 4> h{0, 0, 0, 0};
  for (int y = 0; y < labels.rows; ++y) {
    for (int x = 0; x < labels.cols; ++x) h[labels(y, x)]++;
  }
  return h;
}

} // namespace

TEST_CASE("augment: probability zero is the identity pipeline") {
  auto s = checker_sample();
  AugmentationPolicy policy;
  policy.apply_probability = 0.0;
  auto out = augment(s, policy, 123);
  CHECK(same(out.image, s.image));
  CHECK(same(out.labels, s.labels));
}

TEST_CASE("augment: fixed seed reproduces identical output") {
  auto s = checker_sample();
  AugmentationPolicy policy;
  policy.apply_probability = 1.0;
  auto a = augment(s, policy, 99);
  auto b = augment(s, policy, 99);
  CHECK(same(a.image, b.image));
  CHECK(same(a.labels, b.labels));

  // different seeds should (generically) differ
  bool any_diff = false;
  for (uint64_t seed = 0; seed < 8 && !any_diff; ++seed) {
    auto c = augment(s, policy, seed);
    any_diff = !same(c.image, a.image);
  }
  CHECK(any_diff);
}

TEST_CASE("flip twice is the identity") {
  auto s = checker_sample();
  auto copy = s;
  flip_sample(copy, true);
  flip_sample(copy, true);
  CHECK(same(copy.image, s.image));
  CHECK(same(copy.labels, s.labels));
  flip_sample(copy, false);
  flip_sample(copy, false);
  CHECK(same(copy.image, s.image));
}

TEST_CASE("rotation by 90 degrees preserves the label multiset") {
  auto s = checker_sample(33);  // odd size: exact center pixel
  const auto before = label_histogram(s.labels);
  rotate_sample(s, 90.0);
  CHECK(label_histogram(s.labels) == before);
}

TEST_CASE("geometric ops keep image and mask aligned") {
  // mask equals a thresholded copy of one image channel; any geometric op
  // must preserve that correspondence
  LoadedSample s;
  s.image.create(40, 40);
  s.labels.create(40, 40);
  for (int y = 0; y < 40; ++y) {
    for (int x = 0; x < 40; ++x) {
      const bool in_box = x >= 10 && x < 30 && y >= 15 && y < 35;
      s.image(y, x) = in_box ? cv::Vec3b(255, 255, 255) : cv::Vec3b(0, 0, 0);
      s.labels(y, x) = in_box ? 2 : 0;
    }
  }
  flip_sample(s, true);
  for (int y = 0; y < 40; ++y) {
    for (int x = 0; x < 40; ++x) {
      CHECK((s.image(y, x)[0] > 128) == (s.labels(y, x) == 2));
    }
  }
}

TEST_CASE("photometric ops never touch the mask") {
  auto s = checker_sample();
  auto labels_before = s.labels.clone();
  motion_blur_image(s.image, 5, 37.0);
  color_jitter_image(s.image, 1.15, 0.9, 1.1);
  CHECK(same(s.labels, labels_before));
}

TEST_CASE("rotation fills uncovered corners with background") {
  LoadedSample s;
  s.image.create(32, 32);
  s.image.setTo(cv::Vec3b(200, 200, 200));
  s.labels.create(32, 32);
  s.labels.setTo(uchar(2));
  rotate_sample(s, 45.0);
  auto h = label_histogram(s.labels);
  CHECK(h[0] > 0);       // corners became background
  CHECK(h[2] > 32 * 16); // bulk survived
}
