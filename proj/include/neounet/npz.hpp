#pragma once

#include <torch/torch.h>

#include <map>
#include <string>

namespace neounet::npz {

// Minimal NPZ (zip-of-npy) support, enough to exchange weight arrays with
// numpy: reading handles stored and deflate entries, little-endian f4/f8/i8
// in C order; writing emits stored entries.

std::map<std::string, torch::Tensor> load(const std::string& path);

void save(const std::string& path,
          const std::map<std::string, torch::Tensor>& arrays);

} // namespace neounet::npz
