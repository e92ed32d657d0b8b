#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "neounet/trainer.hpp"

namespace neounet {

// Everything a run needs, loadable from one JSON file. Unset fields fall
// back to defaults; the fully resolved config (every default materialized)
// is written next to the run outputs so results stay reproducible.
struct RunConfig {
  uint64_t seed = 1234;
  bool deterministic = true;
  int threads = 1;
  int workers = 0;
  std::string output_dir = "runs/default";

  std::string train_dir;
  std::string valid_dir;  // empty: validate on the training set
  int color_tolerance = 8;

  NetworkConfig network;
  LossConfig loss;
  TrainConfig train;
  AugmentationPolicy augmentation;

  bool oversample = true;
  double oversample_max_ratio = 20.0;

  std::string pretrained_weights;  // optional npz path
  std::string pretrained_mapping;  // optional name-mapping json

  static RunConfig from_file(const std::string& path);
  static RunConfig from_json(const nlohmann::json& j,
                             const std::string& base_dir = "");
  nlohmann::json resolved_json() const;
  void validate() const;
};

// Applies seed and thread settings; in deterministic mode the thread count
// is pinned to 1 regardless of `threads`.
void apply_determinism(const RunConfig& config);

AugmentationPolicy augmentation_from_json(const nlohmann::json& j);
nlohmann::json augmentation_to_json(const AugmentationPolicy& p);
LossConfig loss_from_json(const nlohmann::json& j);
nlohmann::json loss_to_json(const LossConfig& c);

} // namespace neounet
