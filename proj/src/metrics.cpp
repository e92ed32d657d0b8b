#include "neounet/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "neounet/error.hpp"

namespace neounet {

void ConfusionAccumulator::merge(const ConfusionAccumulator& other) {
  for (int i = 0; i < 3; ++i) {
    tp[i] += other.tp[i];
    fp[i] += other.fp[i];
    fn[i] += other.fn[i];
  }
}

void accumulate(const torch::Tensor& pred, const torch::Tensor& truth,
                ConfusionAccumulator& acc) {
  if (!pred.sizes().equals(truth.sizes()) || pred.dim() != 2) {
    std::ostringstream os;
    os << "accumulate: shape mismatch " << pred.sizes() << " vs "
       << truth.sizes();
    throw DomainError(os.str());
  }
  auto p = pred.to(torch::kLong).contiguous();
  auto t = truth.to(torch::kLong).contiguous();
  if ((p == 3).any().item<bool>()) {
    throw DomainError("accumulate: prediction contains label 3 (unknown)");
  }

  const auto seg = static_cast<int>(Category::Seg);
  const auto non = static_cast<int>(Category::Non);
  const auto neo = static_cast<int>(Category::Neo);

  auto pred_pos = (p == 1) | (p == 2);
  auto true_pos = t >= 1;
  acc.tp[seg] += (pred_pos & true_pos).sum().item<int64_t>();
  acc.fp[seg] += (pred_pos & ~true_pos).sum().item<int64_t>();
  acc.fn[seg] += (~pred_pos & true_pos).sum().item<int64_t>();

  auto valid = t != 3;
  for (auto [cat, label] : {std::pair{non, int64_t{1}}, std::pair{neo, int64_t{2}}}) {
    auto pp = (p == label) & valid;
    auto tt = (t == label) & valid;
    acc.tp[cat] += (pp & tt).sum().item<int64_t>();
    acc.fp[cat] += (pp & ~tt).sum().item<int64_t>();
    acc.fn[cat] += (~pp & tt).sum().item<int64_t>();
  }
}

namespace {

double safe_ratio(int64_t num, int64_t denom, int64_t tp, int64_t fp, int64_t fn) {
  if (tp == 0 && fp == 0 && fn == 0) return 1.0;
  return static_cast<double>(num) / static_cast<double>(denom);
}

} // namespace

double dice(const ConfusionAccumulator& acc, Category category) {
  const auto c = static_cast<int>(category);
  return safe_ratio(2 * acc.tp[c], 2 * acc.tp[c] + acc.fp[c] + acc.fn[c],
                    acc.tp[c], acc.fp[c], acc.fn[c]);
}

double iou(const ConfusionAccumulator& acc, Category category) {
  const auto c = static_cast<int>(category);
  return safe_ratio(acc.tp[c], acc.tp[c] + acc.fp[c] + acc.fn[c], acc.tp[c],
                    acc.fp[c], acc.fn[c]);
}

MetricsReport MetricsReport::from(const ConfusionAccumulator& acc) {
  MetricsReport r;
  r.dice_seg = dice(acc, Category::Seg);
  r.iou_seg = iou(acc, Category::Seg);
  r.dice_non = dice(acc, Category::Non);
  r.iou_non = iou(acc, Category::Non);
  r.dice_neo = dice(acc, Category::Neo);
  r.iou_neo = iou(acc, Category::Neo);
  return r;
}

nlohmann::json MetricsReport::to_json() const {
  return nlohmann::json{
      {"Dice_seg", dice_seg}, {"IoU_seg", iou_seg}, {"Dice_non", dice_non},
      {"IoU_non", iou_non},   {"Dice_neo", dice_neo}, {"IoU_neo", iou_neo},
      {"metadata",
       {{"averaging", "micro (pixel counts pooled over the whole set)"},
        {"unknown_truth_pixels",
         "counted as polyp for seg metrics, excluded from class metrics"},
        {"empty_category_score", 1.0}}}};
}

std::string MetricsReport::table(const std::string& row_label) const {
  std::ostringstream os;
  os << "Method            Dice_seg  IoU_seg   Dice_non  IoU_non   Dice_neo  IoU_neo\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-16s  %8.4f  %8.4f  %8.4f  %8.4f  %8.4f  %8.4f\n",
                row_label.c_str(), dice_seg, iou_seg, dice_non, iou_non,
                dice_neo, iou_neo);
  os << buf;
  return os.str();
}

nlohmann::json BenchReport::to_json() const {
  return nlohmann::json{{"mean_latency_ms", mean_ms},
                        {"std_latency_ms", std_ms},
                        {"p50_latency_ms", p50_ms},
                        {"p95_latency_ms", p95_ms},
                        {"fps", fps},
                        {"warmup_iterations_untimed", warmup_iterations},
                        {"timed_iterations", timed_iterations}};
}

std::string BenchReport::summary() const {
  std::ostringstream os;
  os << "latency over " << timed_iterations << " single-image inferences ("
     << warmup_iterations << " warm-up iterations excluded):\n";
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "  mean %.3f ms  std %.3f ms  p50 %.3f ms  p95 %.3f ms  ->  %.2f FPS\n",
                mean_ms, std_ms, p50_ms, p95_ms, fps);
  os << buf;
  return os.str();
}

BenchReport benchmark_fps(
    const std::function<void(const torch::Tensor&)>& model,
    const std::vector<torch::Tensor>& images, int warmup) {
  constexpr int kTimed = 100;
  if (static_cast<int>(images.size()) < kTimed) {
    throw DomainError("benchmark_fps: need at least 100 images, got " +
                      std::to_string(images.size()));
  }
  using clock = std::chrono::steady_clock;
  torch::NoGradGuard no_grad;

  for (int i = 0; i < warmup; ++i) {
    model(images[i % images.size()]);
  }

  BenchReport report;
  report.warmup_iterations = warmup;
  report.timed_iterations = kTimed;
  report.latencies_ms.reserve(kTimed);
  for (int i = 0; i < kTimed; ++i) {
    const auto start = clock::now();
    model(images[i]);
    const auto stop = clock::now();
    report.latencies_ms.push_back(
        std::chrono::duration<double, std::milli>(stop - start).count());
  }

  const auto& lat = report.latencies_ms;
  report.mean_ms = std::accumulate(lat.begin(), lat.end(), 0.0) / lat.size();
  double var = 0.0;
  for (double v : lat) var += (v - report.mean_ms) * (v - report.mean_ms);
  report.std_ms = std::sqrt(var / lat.size());
  auto sorted = lat;
  std::sort(sorted.begin(), sorted.end());
  report.p50_ms = sorted[sorted.size() / 2];
  report.p95_ms = sorted[static_cast<size_t>(sorted.size() * 0.95)];
  report.fps = 1000.0 / report.mean_ms;
  return report;
}

} // namespace neounet
