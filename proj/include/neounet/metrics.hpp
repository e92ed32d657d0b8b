#pragma once

#include <torch/torch.h>

#include <array>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace neounet {

// Scoring categories: whole-polyp segmentation plus one-vs-rest for the two
// classes. Unknown truth pixels count as polyp for Seg and are excluded from
// Non/Neo.
enum class Category { Seg = 0, Non = 1, Neo = 2 };

// Running pixel totals over a test set (micro-averaging pools counts before
// any ratio is taken). Mergeable so evaluation can be sharded.
struct ConfusionAccumulator {
  std::array<int64_t, 3> tp{0, 0, 0};
  std::array<int64_t, 3> fp{0, 0, 0};
  std::array<int64_t, 3> fn{0, 0, 0};

  void merge(const ConfusionAccumulator& other);
};

// Adds one mask pair's counts. pred and truth are [H,W] integer tensors;
// pred must not contain label 3.
void accumulate(const torch::Tensor& pred, const torch::Tensor& truth,
                ConfusionAccumulator& acc);

// 2TP/(2TP+FP+FN) resp. TP/(TP+FP+FN); 1.0 when all three counts are zero.
double dice(const ConfusionAccumulator& acc, Category category);
double iou(const ConfusionAccumulator& acc, Category category);

struct MetricsReport {
  double dice_seg = 0, iou_seg = 0;
  double dice_non = 0, iou_non = 0;
  double dice_neo = 0, iou_neo = 0;

  static MetricsReport from(const ConfusionAccumulator& acc);
  nlohmann::json to_json() const;
  // Human-readable one-row table (Dice_seg IoU_seg Dice_non IoU_non ...).
  std::string table(const std::string& row_label) const;
};

struct BenchReport {
  double mean_ms = 0;
  double std_ms = 0;
  double p50_ms = 0;
  double p95_ms = 0;
  double fps = 0;
  int warmup_iterations = 0;
  int timed_iterations = 0;
  std::vector<double> latencies_ms;

  nlohmann::json to_json() const;
  std::string summary() const;
};

// Latency protocol: `warmup` untimed passes, then one timed forward per image
// for the first 100 images, batch size 1. Throws DomainError for fewer than
// 100 images.
BenchReport benchmark_fps(
    const std::function<void(const torch::Tensor&)>& model,
    const std::vector<torch::Tensor>& images, int warmup = 10);

} // namespace neounet
