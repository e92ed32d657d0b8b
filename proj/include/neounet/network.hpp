#pragma once

#include <torch/torch.h>

#include <array>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "neounet/hardnet.hpp"

namespace neounet {

// Additive attention gate. The gating signal g is resampled to the skip
// feature's spatial size, both are projected to a common intermediate width,
// and a sigmoid-squashed 1-channel score rescales the skip features.
class AttentionGateImpl : public torch::nn::Module {
public:
  AttentionGateImpl(int64_t skip_channels, int64_t gating_channels,
                    int64_t intermediate_channels);

  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& g);
  // Returns (gated features, attention coefficients in (0,1)).
  std::pair<torch::Tensor, torch::Tensor> forward_with_alpha(
      const torch::Tensor& x, const torch::Tensor& g);

  torch::nn::Conv2d w_x{nullptr};  // skip projection, no bias
  torch::nn::Conv2d w_g{nullptr};  // gating projection, carries b_g
  torch::nn::Conv2d psi{nullptr};  // 1-channel score, carries b_psi

private:
  int64_t skip_channels_;
  int64_t gating_channels_;
};
TORCH_MODULE(AttentionGate);

// Upsamples the previous decoder output x2, concatenates the (gated) skip,
// then applies two {conv, batch norm, leaky ReLU} sets.
class DecoderBlockImpl : public torch::nn::Module {
public:
  DecoderBlockImpl(int64_t prev_channels, int64_t skip_channels,
                   int64_t out_channels, double negative_slope);
  torch::Tensor forward(const torch::Tensor& prev, const torch::Tensor& skip);

  int64_t out_channels() const { return out_channels_; }

private:
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::BatchNorm2d norm1{nullptr}, norm2{nullptr};
  int64_t prev_channels_, skip_channels_, out_channels_;
  double negative_slope_;
};
TORCH_MODULE(DecoderBlock);

// 1x1 convolution to two channels (non-neoplastic, neoplastic) + sigmoid.
class OutputHeadImpl : public torch::nn::Module {
public:
  explicit OutputHeadImpl(int64_t in_channels);
  torch::Tensor forward(const torch::Tensor& features);

  torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(OutputHead);

struct NetworkConfig {
  EncoderConfig encoder = EncoderConfig::hardnet68();
  std::array<int64_t, 4> decoder_channels{256, 128, 64, 32};  // coarse -> fine
  double leaky_slope = 0.01;
  double gate_intermediate_ratio = 0.5;  // intermediate = ratio * skip width

  static NetworkConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
};

// Full network: HarDNet encoder, attention-gated skips at strides 16/8/4
// (the stride-2 skip is left ungated), four decoder blocks and one output
// head per decoder level. Heads are returned coarsest first at their native
// resolution; upsampling to image size happens in the loss/inference paths.
class NeoUNetImpl : public torch::nn::Module {
public:
  explicit NeoUNetImpl(NetworkConfig config);

  std::vector<torch::Tensor> forward(const torch::Tensor& image);

  const NetworkConfig& config() const { return config_; }
  HarDNetEncoder encoder() { return encoder_; }

private:
  NetworkConfig config_;
  HarDNetEncoder encoder_{nullptr};
  AttentionGate gate16_{nullptr}, gate8_{nullptr}, gate4_{nullptr};
  DecoderBlock dec16_{nullptr}, dec8_{nullptr}, dec4_{nullptr}, dec2_{nullptr};
  OutputHead head16_{nullptr}, head8_{nullptr}, head4_{nullptr}, head2_{nullptr};
};
TORCH_MODULE(NeoUNet);

// He-style initialization: kaiming-normal conv weights, zero biases, unit
// batch-norm scale.
void he_init(torch::nn::Module& module);

// Collapses the finest head into a label mask: upsample to (out_h, out_w),
// background where both channel probabilities fall below `threshold`,
// otherwise the argmax channel (ties to non-neoplastic). Never emits 3.
torch::Tensor infer_labels(const torch::Tensor& head, double threshold,
                           int64_t out_h, int64_t out_w);

} // namespace neounet
