#include <doctest.h>

#include <torch/torch.h>

#include <chrono>
#include <random>
#include <thread>

#include "helpers.hpp"
#include "neounet/error.hpp"
#include "neounet/metrics.hpp"
#include "neounet/oracle.hpp"

using namespace neounet;
using testutil::rand_labels;
using testutil::to_ivec;

TEST_CASE("accumulate: exact match has no errors") {
  auto truth = torch::tensor({{0, 1}, {2, 0}}, torch::kLong);
  ConfusionAccumulator acc;
  accumulate(truth, truth, acc);
  for (auto cat : {Category::Seg, Category::Non, Category::Neo}) {
    CHECK(acc.fp[static_cast<int>(cat)] == 0);
    CHECK(acc.fn[static_cast<int>(cat)] == 0);
    CHECK(dice(acc, cat) == 1.0);
    CHECK(iou(acc, cat) == 1.0);
  }
}

TEST_CASE("accumulate: unknown truth counts for seg only") {
  auto truth = torch::full({2, 2}, 3, torch::kLong);
  auto pred = torch::ones({2, 2}, torch::kLong);
  ConfusionAccumulator acc;
  accumulate(pred, truth, acc);
  CHECK(acc.tp[static_cast<int>(Category::Seg)] == 4);
  CHECK(acc.fp[static_cast<int>(Category::Seg)] == 0);
  CHECK(acc.fn[static_cast<int>(Category::Seg)] == 0);
  // class counts untouched
  for (auto cat : {Category::Non, Category::Neo}) {
    CHECK(acc.tp[static_cast<int>(cat)] == 0);
    CHECK(acc.fp[static_cast<int>(cat)] == 0);
    CHECK(acc.fn[static_cast<int>(cat)] == 0);
  }
}

TEST_CASE("accumulate: 3x3 mixed grid equals the enumeration oracle") {
  auto truth = torch::tensor({{0, 1, 2}, {3, 1, 0}, {2, 3, 1}}, torch::kLong);
  auto pred = torch::tensor({{1, 1, 2}, {0, 2, 0}, {2, 0, 1}}, torch::kLong);
  ConfusionAccumulator acc;
  accumulate(pred, truth, acc);
  auto counts = oracle::confusion(to_ivec(pred), to_ivec(truth), 3, 3);
  CHECK(acc.tp[0] == counts.seg.tp);
  CHECK(acc.fp[0] == counts.seg.fp);
  CHECK(acc.fn[0] == counts.seg.fn);
  CHECK(acc.tp[1] == counts.non.tp);
  CHECK(acc.fp[1] == counts.non.fp);
  CHECK(acc.fn[1] == counts.non.fn);
  CHECK(acc.tp[2] == counts.neo.tp);
  CHECK(acc.fp[2] == counts.neo.fp);
  CHECK(acc.fn[2] == counts.neo.fn);
}

TEST_CASE("accumulate: error paths") {
  auto a = torch::zeros({2, 2}, torch::kLong);
  auto b = torch::zeros({2, 3}, torch::kLong);
  ConfusionAccumulator acc;
  CHECK_THROWS_AS(accumulate(a, b, acc), DomainError);
  auto with_unknown = torch::full({2, 2}, 3, torch::kLong);
  CHECK_THROWS_AS(accumulate(with_unknown, a, acc), DomainError);
}

TEST_CASE("dice and iou arithmetic, empty convention, ordering") {
  ConfusionAccumulator acc;
  acc.tp[0] = 50;
  acc.fp[0] = 10;
  acc.fn[0] = 10;
  CHECK(dice(acc, Category::Seg) == doctest::Approx(100.0 / 120.0));
  CHECK(iou(acc, Category::Seg) == doctest::Approx(50.0 / 70.0));
  CHECK(dice(acc, Category::Non) == 1.0);  // all-zero counts
  acc.tp[1] = 7;
  CHECK(dice(acc, Category::Non) == 1.0);
  CHECK(iou(acc, Category::Non) == 1.0);
  CHECK(dice(acc, Category::Seg) >= iou(acc, Category::Seg));
}

TEST_CASE("micro-average differs from per-image mean on a constructed pair") {
  // image A: single polyp pixel, perfectly predicted (per-image dice 1)
  auto truth_a = torch::zeros({4, 4}, torch::kLong);
  truth_a[0][0] = 2;
  auto pred_a = truth_a.clone();
  // image B: large polyp entirely missed (per-image dice 0)
  auto truth_b = torch::full({10, 10}, 2, torch::kLong);
  auto pred_b = torch::zeros({10, 10}, torch::kLong);

  ConfusionAccumulator acc;
  accumulate(pred_a, truth_a, acc);
  accumulate(pred_b, truth_b, acc);
  const double micro = dice(acc, Category::Seg);
  const double per_image_mean = (1.0 + 0.0) / 2.0;
  CHECK(micro == doctest::Approx(2.0 / 102.0));
  CHECK(std::abs(micro - per_image_mean) > 0.4);
}

TEST_CASE("merge equals single-pass accumulation") {
  std::mt19937_64 rng(99);
  ConfusionAccumulator whole, sharded, a, b;
  for (int i = 0; i < 20; ++i) {
    auto truth = rand_labels({8, 8}, rng, 3);
    auto pred = rand_labels({8, 8}, rng, 2);
    accumulate(pred, truth, whole);
    accumulate(pred, truth, i % 2 == 0 ? a : b);
  }
  sharded.merge(a);
  sharded.merge(b);
  for (int c = 0; c < 3; ++c) {
    CHECK(sharded.tp[c] == whole.tp[c]);
    CHECK(sharded.fp[c] == whole.fp[c]);
    CHECK(sharded.fn[c] == whole.fn[c]);
  }
}

TEST_CASE("random mask pairs match the oracle exactly") {
  std::mt19937_64 rng(1000);
  for (int i = 0; i < 200; ++i) {
    const int h = 1 + static_cast<int>(rng() % 24);
    const int w = 1 + static_cast<int>(rng() % 24);
    auto truth = rand_labels({h, w}, rng, 3);
    auto pred = rand_labels({h, w}, rng, 2);
    ConfusionAccumulator acc;
    accumulate(pred, truth, acc);
    auto counts = oracle::confusion(to_ivec(pred), to_ivec(truth), h, w);
    CHECK(dice(acc, Category::Seg) == oracle::dice(counts.seg));
    CHECK(iou(acc, Category::Seg) == oracle::iou(counts.seg));
    CHECK(dice(acc, Category::Non) == oracle::dice(counts.non));
    CHECK(iou(acc, Category::Non) == oracle::iou(counts.non));
    CHECK(dice(acc, Category::Neo) == oracle::dice(counts.neo));
    CHECK(iou(acc, Category::Neo) == oracle::iou(counts.neo));
  }
}

TEST_CASE("benchmark: protocol shape and constant-latency recovery") {
  std::vector<torch::Tensor> images(100, torch::zeros({1}));

  CHECK_THROWS_AS(
      benchmark_fps([](const torch::Tensor&) {}, {torch::zeros({1})}, 10),
      DomainError);

  int calls = 0;
  auto counting = [&](const torch::Tensor&) { ++calls; };
  auto report = benchmark_fps(counting, images, 10);
  CHECK(calls == 110);  // warm-ups run but are not timed
  CHECK(report.timed_iterations == 100);
  CHECK(report.warmup_iterations == 10);
  CHECK(report.latencies_ms.size() == 100);

  // ~5 ms busy-wait model -> ~200 FPS
  auto busy = [](const torch::Tensor&) {
    const auto until =
        std::chrono::steady_clock::now() + std::chrono::milliseconds(5);
    while (std::chrono::steady_clock::now() < until) {
    }
  };
  auto timed = benchmark_fps(busy, images, 3);
  CHECK(timed.fps == doctest::Approx(200.0).epsilon(0.05));
  CHECK(timed.p50_ms == doctest::Approx(5.0).epsilon(0.05));
  CHECK(timed.mean_ms >= 5.0);
}
