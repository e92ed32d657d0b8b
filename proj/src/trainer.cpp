#include "neounet/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>

#include "neounet/checkpoint.hpp"
#include "neounet/error.hpp"
#include "neounet/schedule.hpp"

namespace fs = std::filesystem;

namespace neounet {

uint64_t derive_seed(uint64_t seed, uint64_t stream, uint64_t index) {
  // splitmix64 over the mixed words
  uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1) +
               0xBF58476D1CE4E5B9ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void TrainConfig::validate() const {
  if (!(base_lr > 0.0)) throw ConfigError("train: base_lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw ConfigError("train: momentum must lie in [0,1)");
  }
  if (warmup_epochs < 0 || (total_epochs > 0 && warmup_epochs >= total_epochs)) {
    throw ConfigError("train: require 0 <= warmup_epochs < total_epochs");
  }
  if (total_epochs < 0) throw ConfigError("train: total_epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (scales.empty()) throw ConfigError("train: at least one scale required");
  for (int s : scales) {
    if (std::find(kTrainScales.begin(), kTrainScales.end(), s) ==
        kTrainScales.end()) {
      throw ConfigError("train: scale " + std::to_string(s) +
                        " is not one of {448, 352, 256}");
    }
  }
  if (eval_size < 32 || eval_size % 32 != 0) {
    throw ConfigError("train: eval_size must be a positive multiple of 32");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("train: threshold must lie in (0,1)");
  }
}

double TrainConfig::lr_at_epoch(double epoch) const {
  return lr_at(epoch, base_lr, warmup_epochs, total_epochs);
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.base_lr = j.value("base_lr", c.base_lr);
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
    c.total_epochs = j.value("total_epochs", c.total_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.contains("scales")) c.scales = j.at("scales").get<std::vector<int>>();
    c.accumulate_scales = j.value("accumulate_scales", c.accumulate_scales);
    c.eval_size = j.value("eval_size", c.eval_size);
    c.threshold = j.value("threshold", c.threshold);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json TrainConfig::to_json() const {
  return nlohmann::json{{"base_lr", base_lr},
                        {"momentum", momentum},
                        {"nesterov", true},
                        {"weight_decay", weight_decay},
                        {"warmup_epochs", warmup_epochs},
                        {"total_epochs", total_epochs},
                        {"batch_size", batch_size},
                        {"scales", scales},
                        {"accumulate_scales", accumulate_scales},
                        {"eval_size", eval_size},
                        {"threshold", threshold}};
}

EvalOutcome evaluate_dataset(NeoUNet& model, const DatasetIndex& index,
                             const MaskCodec& codec, int size, double threshold,
                             const Normalization& norm) {
  if (index.entries.empty()) {
    throw DomainError("evaluate: empty dataset index");
  }
  torch::NoGradGuard no_grad;
  const bool was_training = model->is_training();
  model->eval();
  EvalOutcome outcome;
  for (const auto& entry : index.entries) {
    auto sample = load_sample(entry, codec);
    auto batch = make_eval_batch({sample}, size, norm);
    auto heads = model->forward(batch.images);
    auto pred = infer_labels(heads.back(), threshold, size, size);
    accumulate(pred, batch.labels.squeeze(0), outcome.counts);
    outcome.images++;
  }
  outcome.metrics = MetricsReport::from(outcome.counts);
  if (was_training) model->train();
  return outcome;
}

namespace {

std::vector<torch::Tensor> trainable_params(NeoUNet& model) {
  std::vector<torch::Tensor> params;
  for (auto& p : model->parameters()) params.push_back(p);
  return params;
}

} // namespace

Trainer::Trainer(NeoUNet model, Options options)
    : model_(std::move(model)),
      options_(std::move(options)),
      optimizer_(trainable_params(model_),
                 torch::optim::SGDOptions(options_.train.base_lr)
                     .momentum(options_.train.momentum)
                     .nesterov(true)
                     .weight_decay(options_.train.weight_decay)) {
  options_.train.validate();
  options_.loss.validate();
  if (!options_.output_dir.empty()) {
    fs::create_directories(options_.output_dir);
  }
}

void Trainer::set_lr(double lr) {
  for (auto& group : optimizer_.param_groups()) {
    static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);
  }
}

double Trainer::grad_norm() const {
  double sum_sq = 0.0;
  for (const auto& p : model_->parameters()) {
    if (p.grad().defined()) {
      sum_sq += p.grad().pow(2).sum().item<double>();
    }
  }
  return std::sqrt(sum_sq);
}

void Trainer::abort_non_finite(double loss_value, int scale, double lr) {
  nlohmann::json dump{{"reason", "non-finite loss"},
                      {"loss", loss_value},
                      {"scale", scale},
                      {"lr", lr},
                      {"epoch", epoch_},
                      {"step_in_epoch", step_in_epoch_}};
  double param_norm = 0.0;
  for (const auto& p : model_->parameters()) {
    param_norm += p.detach().pow(2).sum().item<double>();
  }
  dump["param_norm"] = std::sqrt(param_norm);
  std::string where = "(dump not written: no output dir)";
  if (!options_.output_dir.empty()) {
    const auto path = fs::path(options_.output_dir) / "nonfinite_dump.json";
    std::ofstream out(path);
    out << dump.dump(2) << "\n";
    where = path.string();
  }
  throw TrainingError("training aborted: non-finite loss " +
                      std::to_string(loss_value) + " at scale " +
                      std::to_string(scale) + "; diagnostics: " + where);
}

StepReport Trainer::train_step(const std::vector<LoadedSample>& samples,
                               double lr) {
  model_->train();
  set_lr(lr);
  StepReport report;
  if (options_.train.accumulate_scales) {
    optimizer_.zero_grad();
  }
  for (int scale : options_.train.scales) {
    auto batch = make_batch(samples, scale, options_.normalization);
    auto target = make_supervision_target(batch.labels);
    auto heads = model_->forward(batch.images);
    auto loss = total_loss(heads, target, options_.loss);
    const double value = loss.item<double>();
    if (!std::isfinite(value)) {
      abort_non_finite(value, scale, lr);
    }
    report.losses.push_back(value);
    if (options_.train.accumulate_scales) {
      loss.backward();
    } else {
      optimizer_.zero_grad();
      loss.backward();
      report.grad_norms.push_back(grad_norm());
      optimizer_.step();
    }
  }
  if (options_.train.accumulate_scales) {
    report.grad_norms.push_back(grad_norm());
    optimizer_.step();
  }
  return report;
}

FitResult Trainer::fit(const DatasetIndex& train_index,
                       const DatasetIndex& valid_index, bool resume,
                       int stop_after) {
  if (valid_index.entries.empty()) {
    throw DomainError("fit: validation dataset is empty");
  }
  const auto& cfg = options_.train;
  FitResult result;
  const fs::path out_dir(options_.output_dir.empty() ? "." : options_.output_dir);
  const std::string last_path = (out_dir / "last.ckpt").string();
  const std::string best_path = (out_dir / "best.ckpt").string();
  result.last_checkpoint = last_path;
  result.best_checkpoint = best_path;

  int start_epoch = 0;
  double best = -1.0;
  if (resume && fs::exists(last_path)) {
    auto ckpt = load_checkpoint(last_path);
    torch::NoGradGuard no_grad;
    auto params = model_->named_parameters();
    auto loaded = ckpt.model->named_parameters();
    for (auto& p : params) p.value().copy_(loaded[p.key()]);
    auto buffers = model_->named_buffers();
    auto loaded_buffers = ckpt.model->named_buffers();
    for (auto& b : buffers) b.value().copy_(loaded_buffers[b.key()]);
    restore_optimizer(optimizer_, model_, ckpt.optimizer_momentum);
    start_epoch = ckpt.meta.epoch;
    best = ckpt.meta.best_dice_seg;
  }

  CheckpointMeta meta;
  meta.seed = options_.seed;
  if (cfg.total_epochs == 0) {
    meta.epoch = 0;
    save_checkpoint(last_path, model_, meta, &optimizer_);
    return result;
  }

  std::string sampler_warning;
  std::vector<double> weights =
      options_.oversample
          ? build_sampler(train_index, options_.oversample_max_ratio,
                          &sampler_warning)
          : std::vector<double>(train_index.entries.size(), 1.0);
  if (!sampler_warning.empty()) {
    std::fprintf(stderr, "[fit] %s\n", sampler_warning.c_str());
  }

  const int steps = static_cast<int>(
      (train_index.entries.size() + cfg.batch_size - 1) / cfg.batch_size);
  const fs::path history_path = out_dir / "history.jsonl";
  std::ofstream history(history_path, start_epoch > 0 ? std::ios::app
                                                      : std::ios::trunc);

  auto load_batch = [&](const std::vector<size_t>& ids, int epoch) {
    std::vector<LoadedSample> samples;
    samples.reserve(ids.size());
    for (size_t id : ids) {
      auto sample = load_sample(train_index.entries[id], options_.codec);
      samples.push_back(augment(sample, options_.augmentation,
                                derive_seed(options_.seed, id, epoch)));
    }
    return samples;
  };

  const int end_epoch = stop_after >= 0 ? std::min(stop_after, cfg.total_epochs)
                                        : cfg.total_epochs;
  for (int epoch = start_epoch; epoch < end_epoch; ++epoch) {
    epoch_ = epoch;
    WeightedSampler sampler(weights, derive_seed(options_.seed, 0xEF0C, epoch));
    std::vector<std::vector<size_t>> batch_ids(steps);
    for (auto& ids : batch_ids) {
      for (int b = 0; b < cfg.batch_size; ++b) ids.push_back(sampler.draw());
    }

    std::vector<double> loss_sums(cfg.scales.size(), 0.0);
    std::future<std::vector<LoadedSample>> prefetch;
    if (options_.workers > 0) {
      prefetch = std::async(std::launch::async, load_batch, batch_ids[0], epoch);
    }
    double lr = cfg.lr_at_epoch(epoch);
    for (int it = 0; it < steps; ++it) {
      step_in_epoch_ = it;
      std::vector<LoadedSample> samples;
      if (options_.workers > 0) {
        samples = prefetch.get();
        if (it + 1 < steps) {
          prefetch = std::async(std::launch::async, load_batch,
                                batch_ids[it + 1], epoch);
        }
      } else {
        samples = load_batch(batch_ids[it], epoch);
      }
      lr = cfg.lr_at_epoch(epoch + static_cast<double>(it) / steps);
      auto report = train_step(samples, lr);
      for (size_t s = 0; s < report.losses.size(); ++s) {
        loss_sums[s] += report.losses[s];
      }
    }

    auto eval = evaluate_dataset(model_, valid_index, options_.codec,
                                 cfg.eval_size, cfg.threshold,
                                 options_.normalization);

    EpochRecord record;
    record.epoch = epoch;
    record.lr = lr;
    for (double s : loss_sums) record.mean_losses.push_back(s / steps);
    record.valid = eval.metrics;
    result.history.push_back(record);

    nlohmann::json row{{"epoch", epoch},
                       {"lr", record.lr},
                       {"dice_seg", eval.metrics.dice_seg},
                       {"dice_non", eval.metrics.dice_non},
                       {"dice_neo", eval.metrics.dice_neo}};
    for (size_t s = 0; s < cfg.scales.size(); ++s) {
      row["loss_" + std::to_string(cfg.scales[s])] = record.mean_losses[s];
    }
    history << row.dump() << "\n";
    history.flush();
    std::printf("[fit] epoch %3d  lr %.6f  loss %.4f  Dice_seg %.4f  "
                "Dice_non %.4f  Dice_neo %.4f\n",
                epoch, record.lr, record.mean_losses.back(),
                eval.metrics.dice_seg, eval.metrics.dice_non,
                eval.metrics.dice_neo);
    std::fflush(stdout);

    meta.epoch = epoch + 1;
    meta.best_dice_seg = best;
    if (eval.metrics.dice_seg > best) {
      best = eval.metrics.dice_seg;
      meta.best_dice_seg = best;
      save_checkpoint(best_path, model_, meta, &optimizer_);
    }
    save_checkpoint(last_path, model_, meta, &optimizer_);
    result.epochs_run = epoch - start_epoch + 1;
  }
  result.best_dice_seg = best;
  return result;
}

} // namespace neounet
