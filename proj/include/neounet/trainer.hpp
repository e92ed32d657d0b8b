#pragma once

#include <torch/torch.h>

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neounet/augment.hpp"
#include "neounet/dataset.hpp"
#include "neounet/loss.hpp"
#include "neounet/metrics.hpp"
#include "neounet/network.hpp"

namespace neounet {

struct TrainConfig {
  double base_lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int warmup_epochs = 5;
  int total_epochs = 105;
  int batch_size = 8;
  // Every batch is run once per scale; one optimizer update per scale pass
  // unless accumulate_scales folds them into a single update.
  std::vector<int> scales{448, 352, 256};
  bool accumulate_scales = false;
  int eval_size = 352;
  double threshold = 0.5;

  void validate() const;
  double lr_at_epoch(double epoch) const;
  static TrainConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct StepReport {
  std::vector<double> losses;      // one per scale pass
  std::vector<double> grad_norms;  // global L2 norm per update
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  std::vector<double> mean_losses;  // per scale
  MetricsReport valid;
};

struct FitResult {
  int epochs_run = 0;
  double best_dice_seg = -1.0;
  std::string best_checkpoint;
  std::string last_checkpoint;
  std::vector<EpochRecord> history;
};

struct EvalOutcome {
  MetricsReport metrics;
  ConfusionAccumulator counts;
  int images = 0;
};

// Runs the finest head through infer_labels at `size` and micro-accumulates
// against ground truth resized to the same grid.
EvalOutcome evaluate_dataset(NeoUNet& model, const DatasetIndex& index,
                             const MaskCodec& codec, int size, double threshold,
                             const Normalization& norm = {});

class Trainer {
public:
  struct Options {
    TrainConfig train;
    LossConfig loss;
    AugmentationPolicy augmentation;
    MaskCodec codec;
    Normalization normalization;
    std::string output_dir;
    uint64_t seed = 0;
    bool oversample = true;
    double oversample_max_ratio = 20.0;
    int workers = 0;  // >0 prefetches the next batch on a worker thread
  };

  Trainer(NeoUNet model, Options options);

  // Multi-scale step on an already-loaded batch; the same samples are resized
  // to every configured scale. Aborts with a diagnostic dump on a non-finite
  // loss.
  StepReport train_step(const std::vector<LoadedSample>& samples, double lr);

  // `stop_after`, when >= 0, caps this call at that absolute epoch so a run
  // can be split across sessions; the lr schedule still follows total_epochs.
  FitResult fit(const DatasetIndex& train_index, const DatasetIndex& valid_index,
                bool resume = false, int stop_after = -1);

  NeoUNet& model() { return model_; }
  torch::optim::SGD& optimizer() { return optimizer_; }
  const Options& options() const { return options_; }

private:
  void set_lr(double lr);
  double grad_norm() const;
  [[noreturn]] void abort_non_finite(double loss_value, int scale, double lr);

  NeoUNet model_;
  Options options_;
  torch::optim::SGD optimizer_;
  int epoch_ = 0;
  int step_in_epoch_ = 0;
};

// Mixes (seed, stream, index) into an independent RNG seed.
uint64_t derive_seed(uint64_t seed, uint64_t stream, uint64_t index);

} // namespace neounet
