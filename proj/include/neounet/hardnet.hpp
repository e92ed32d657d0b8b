#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neounet/error.hpp"

namespace neounet {

// How k * m^n is turned into an integer channel count.
//   FloorEven        round down to the nearest even integer, never below k
//   ReferenceNearest the published HarDNet integerization, kept for loading
//                    reference checkpoints whose shapes depend on it
enum class ChannelRounding { FloorEven, ReferenceNearest };

ChannelRounding channel_rounding_from_string(const std::string& s);
std::string to_string(ChannelRounding r);

// Harmonic connectivity: layer l consumes the outputs of layers l - 2^n for
// every n >= 0 with 2^n | l and l - 2^n >= 0 (layer 0 being the block input).
// Returned in descending layer order, which is also the concatenation order.
std::vector<int64_t> hdb_links(int64_t layer_index);

// Output channels of layer l: k * m^n with n the largest power of two
// dividing l, integerized per `rounding`.
int64_t hdb_out_channels(int64_t layer_index, int64_t growth_rate,
                         double compression,
                         ChannelRounding rounding = ChannelRounding::FloorEven);

struct HDBConfig {
  int64_t num_layers = 1;
  int64_t growth_rate = 1;
  double compression = 1.7;
  int64_t input_channels = 1;
  ChannelRounding rounding = ChannelRounding::FloorEven;

  void validate() const;
};

// Channels produced by a whole block: concatenation of the final layer plus
// all odd-indexed layers.
int64_t hdb_block_out_channels(int64_t num_layers, int64_t growth_rate,
                               double compression, ChannelRounding rounding);

// One conv layer inside a block, plus its 1x1 transition width. Multiple
// blocks may share a stride (HarDNet68 has two at stride 8).
struct HDBlockSpec {
  int64_t num_layers = 0;
  int64_t growth_rate = 0;
  int64_t transition_channels = 0;
};

struct StageConfig {
  std::vector<HDBlockSpec> blocks;
};

struct EncoderConfig {
  std::string name = "hardnet68";
  std::array<int64_t, 2> stem_channels{32, 64};
  double compression = 1.7;
  ChannelRounding rounding = ChannelRounding::FloorEven;
  std::array<StageConfig, 5> stages;

  static EncoderConfig hardnet68();
  static EncoderConfig tiny();
  static EncoderConfig from_json(const nlohmann::json& j);
  static EncoderConfig from_file(const std::string& path);
  nlohmann::json to_json() const;
  void validate() const;

  // Channels of each pyramid level; pure config arithmetic, no modules built.
  std::array<int64_t, 5> level_channels() const;
};

// conv (bias-free) + batch norm + ReLU6, the layer unit used throughout the
// encoder.
class ConvBNActImpl : public torch::nn::Module {
public:
  ConvBNActImpl(int64_t in_channels, int64_t out_channels, int64_t kernel,
                int64_t stride = 1);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::Conv2d conv{nullptr};
  torch::nn::BatchNorm2d norm{nullptr};
};
TORCH_MODULE(ConvBNAct);

class HardBlockImpl : public torch::nn::Module {
public:
  explicit HardBlockImpl(const HDBConfig& config);
  torch::Tensor forward(torch::Tensor x);

  int64_t in_channels() const { return config_.input_channels; }
  int64_t out_channels() const { return out_channels_; }
  const std::vector<std::vector<int64_t>>& links() const { return links_; }

private:
  HDBConfig config_;
  int64_t out_channels_ = 0;
  std::vector<std::vector<int64_t>> links_;       // per layer, descending
  std::vector<int64_t> layer_out_channels_;       // entry 0 = block input
  torch::nn::ModuleList layers_;
};
TORCH_MODULE(HardBlock);

// Five-stride backbone: two stem convs (the first with stride 2), then max
// pooling into each deeper stage followed by that stage's harmonic blocks,
// each closed by a 1x1 transition.
class HarDNetEncoderImpl : public torch::nn::Module {
public:
  explicit HarDNetEncoderImpl(EncoderConfig config);

  // Feature pyramid at strides 2, 4, 8, 16, 32. Input H and W must be
  // divisible by 32.
  std::array<torch::Tensor, 5> forward(torch::Tensor image);

  const EncoderConfig& config() const { return config_; }
  std::array<int64_t, 5> level_channels() const { return config_.level_channels(); }

private:
  EncoderConfig config_;
  ConvBNAct stem1_{nullptr}, stem2_{nullptr};
  torch::nn::ModuleList stage_blocks_[5];
  torch::nn::ModuleList stage_transitions_[5];
};
TORCH_MODULE(HarDNetEncoder);

struct PretrainedLoadReport {
  std::vector<std::string> loaded;
  std::vector<std::string> missing;         // mapped name absent from arrays
  std::vector<std::string> shape_mismatch;  // present but wrong shape
};

// Copies arrays into encoder parameters/buffers. `mapping` goes from this
// module's parameter names (relative to the encoder) to array names in the
// weight file. Unmapped parameters are left at their initialized values.
PretrainedLoadReport apply_pretrained(
    HarDNetEncoder& encoder, const std::map<std::string, torch::Tensor>& arrays,
    const std::map<std::string, std::string>& mapping);

// Expands a prefix table (e.g. "stage2_blocks.0." -> "base.3.") into a full
// per-tensor mapping over the encoder's parameter and buffer names. Names
// with no matching prefix are skipped.
std::map<std::string, std::string> expand_prefix_mapping(
    HarDNetEncoder& encoder,
    const std::map<std::string, std::string>& prefix_map);

} // namespace neounet
