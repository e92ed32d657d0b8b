#pragma once

#include <torch/torch.h>

#include <map>
#include <string>

#include "neounet/network.hpp"

namespace neounet {

// Versioned checkpoint container (see README for the byte layout): an 8-byte
// magic, a format version, a JSON header holding the architecture config and
// training state, then raw little-endian tensor data. Optimizer momentum
// buffers ride along under "optim/" names so training can resume.

struct CheckpointMeta {
  int epoch = 0;
  double best_dice_seg = -1.0;
  uint64_t seed = 0;
};

void save_checkpoint(const std::string& path, NeoUNet& model,
                     const CheckpointMeta& meta,
                     torch::optim::SGD* optimizer = nullptr);

struct LoadedCheckpoint {
  NeoUNet model{nullptr};
  NetworkConfig config;
  CheckpointMeta meta;
  // Momentum buffers keyed by parameter name; empty when the checkpoint was
  // saved without optimizer state.
  std::map<std::string, torch::Tensor> optimizer_momentum;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Installs saved momentum buffers into an SGD optimizer built over `model`'s
// parameters.
void restore_optimizer(torch::optim::SGD& optimizer, NeoUNet& model,
                       const std::map<std::string, torch::Tensor>& momentum);

} // namespace neounet
