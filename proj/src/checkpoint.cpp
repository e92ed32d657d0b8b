#include "neounet/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "neounet/error.hpp"

namespace neounet {

namespace {

constexpr char kMagic[8] = {'N', 'E', 'O', 'C', 'K', 'P', 'T', '\0'};
constexpr uint32_t kFormatVersion = 1;

std::string dtype_tag(const torch::Tensor& t) {
  if (t.dtype() == torch::kFloat32) return "f32";
  if (t.dtype() == torch::kFloat64) return "f64";
  if (t.dtype() == torch::kInt64) return "i64";
  throw DataError("checkpoint: unsupported tensor dtype");
}

torch::Dtype dtype_from_tag(const std::string& tag) {
  if (tag == "f32") return torch::kFloat32;
  if (tag == "f64") return torch::kFloat64;
  if (tag == "i64") return torch::kInt64;
  throw DataError("checkpoint: unknown dtype tag '" + tag + "'");
}

// Parameters first, then buffers (batch-norm running stats), then optional
// optimizer momentum under "optim/".
std::map<std::string, torch::Tensor> collect_tensors(
    NeoUNet& model, torch::optim::SGD* optimizer) {
  std::map<std::string, torch::Tensor> tensors;
  for (const auto& p : model->named_parameters()) tensors[p.key()] = p.value();
  for (const auto& b : model->named_buffers()) tensors[b.key()] = b.value();
  if (optimizer != nullptr) {
    auto& state = optimizer->state();
    for (const auto& p : model->named_parameters()) {
      auto it = state.find(p.value().unsafeGetTensorImpl());
      if (it == state.end()) continue;
      auto& sgd_state = static_cast<torch::optim::SGDParamState&>(*it->second);
      if (sgd_state.momentum_buffer().defined()) {
        tensors["optim/" + p.key()] = sgd_state.momentum_buffer();
      }
    }
  }
  return tensors;
}

} // namespace

void save_checkpoint(const std::string& path, NeoUNet& model,
                     const CheckpointMeta& meta, torch::optim::SGD* optimizer) {
  const auto tensors = collect_tensors(model, optimizer);

  nlohmann::json header;
  header["format_version"] = kFormatVersion;
  header["network"] = model->config().to_json();
  header["epoch"] = meta.epoch;
  header["best_dice_seg"] = meta.best_dice_seg;
  header["seed"] = meta.seed;
  auto& list = header["tensors"] = nlohmann::json::array();

  uint64_t offset = 0;
  std::vector<torch::Tensor> ordered;
  for (const auto& [name, tensor] : tensors) {
    auto t = tensor.detach().contiguous().cpu();
    const uint64_t nbytes = static_cast<uint64_t>(t.numel()) * t.element_size();
    list.push_back({{"name", name},
                    {"dtype", dtype_tag(t)},
                    {"shape", t.sizes().vec()},
                    {"offset", offset},
                    {"nbytes", nbytes}});
    offset += nbytes;
    ordered.push_back(t);
  }
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  const uint32_t version = kFormatVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const uint64_t header_len = header_str.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& t : ordered) {
    out.write(static_cast<const char*>(t.const_data_ptr()),
              static_cast<std::streamsize>(t.numel() * t.element_size()));
  }
  if (!out) throw IoError("checkpoint: short write to " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path);

  char magic[8];
  uint32_t version = 0;
  uint64_t header_len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("checkpoint: " + path + " is not a NEOCKPT container");
  }
  if (version != kFormatVersion) {
    throw DataError("checkpoint: " + path + " has format version " +
                    std::to_string(version) + ", expected " +
                    std::to_string(kFormatVersion));
  }
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint: corrupt header in " + path + ": " + e.what());
  }

  LoadedCheckpoint ckpt;
  ckpt.config = NetworkConfig::from_json(header.at("network"));
  ckpt.meta.epoch = header.value("epoch", 0);
  ckpt.meta.best_dice_seg = header.value("best_dice_seg", -1.0);
  ckpt.meta.seed = header.value("seed", uint64_t{0});
  ckpt.model = NeoUNet(ckpt.config);

  std::map<std::string, torch::Tensor> loaded;
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<int64_t>>();
    const auto dtype = dtype_from_tag(entry.at("dtype").get<std::string>());
    const uint64_t nbytes = entry.at("nbytes").get<uint64_t>();
    auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
    if (static_cast<uint64_t>(t.numel()) * t.element_size() != nbytes) {
      throw DataError("checkpoint: tensor '" + name + "' size inconsistent");
    }
    in.read(static_cast<char*>(t.data_ptr()),
            static_cast<std::streamsize>(nbytes));
    if (!in) throw DataError("checkpoint: " + path + " truncated at '" + name + "'");
    loaded[name] = t;
  }

  torch::NoGradGuard no_grad;
  auto copy_into = [&](const std::string& name, torch::Tensor dest) {
    auto it = loaded.find(name);
    if (it == loaded.end()) {
      throw DataError("checkpoint: " + path + " is missing tensor '" + name +
                      "' for this architecture");
    }
    if (!it->second.sizes().equals(dest.sizes())) {
      throw DataError("checkpoint: shape mismatch for '" + name + "'");
    }
    dest.copy_(it->second.to(dest.dtype()));
  };
  for (const auto& p : ckpt.model->named_parameters()) copy_into(p.key(), p.value());
  for (const auto& b : ckpt.model->named_buffers()) copy_into(b.key(), b.value());
  for (const auto& [name, tensor] : loaded) {
    if (name.rfind("optim/", 0) == 0) {
      ckpt.optimizer_momentum[name.substr(6)] = tensor;
    }
  }
  return ckpt;
}

void restore_optimizer(torch::optim::SGD& optimizer, NeoUNet& model,
                       const std::map<std::string, torch::Tensor>& momentum) {
  auto& state = optimizer.state();
  for (const auto& p : model->named_parameters()) {
    auto it = momentum.find(p.key());
    if (it == momentum.end()) continue;
    auto param_state = std::make_unique<torch::optim::SGDParamState>();
    param_state->momentum_buffer(it->second.clone());
    state[p.value().unsafeGetTensorImpl()] = std::move(param_state);
  }
}

} // namespace neounet
