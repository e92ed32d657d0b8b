#include "neounet/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "neounet/error.hpp"

namespace neounet {

namespace F = torch::nn::functional;

namespace {

torch::Tensor resize_bilinear(const torch::Tensor& x, int64_t h, int64_t w) {
  if (x.size(2) == h && x.size(3) == w) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{h, w})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

} // namespace

AttentionGateImpl::AttentionGateImpl(int64_t skip_channels,
                                     int64_t gating_channels,
                                     int64_t intermediate_channels)
    : skip_channels_(skip_channels), gating_channels_(gating_channels) {
  if (skip_channels < 1 || gating_channels < 1 || intermediate_channels < 1) {
    throw ConfigError("attention gate: channel counts must be positive");
  }
  w_x = register_module(
      "w_x", torch::nn::Conv2d(
                 torch::nn::Conv2dOptions(skip_channels, intermediate_channels, 1)
                     .bias(false)));
  w_g = register_module(
      "w_g", torch::nn::Conv2d(
                 torch::nn::Conv2dOptions(gating_channels, intermediate_channels, 1)
                     .bias(true)));
  psi = register_module(
      "psi", torch::nn::Conv2d(
                 torch::nn::Conv2dOptions(intermediate_channels, 1, 1).bias(true)));
}

std::pair<torch::Tensor, torch::Tensor> AttentionGateImpl::forward_with_alpha(
    const torch::Tensor& x, const torch::Tensor& g) {
  if (x.size(1) != skip_channels_ || g.size(1) != gating_channels_) {
    std::ostringstream os;
    os << "attention gate: expected " << skip_channels_ << "/" << gating_channels_
       << " skip/gating channels, got " << x.size(1) << "/" << g.size(1);
    throw ConfigError(os.str());
  }
  auto g_resized = resize_bilinear(g, x.size(2), x.size(3));
  auto q = psi->forward(torch::relu(w_x->forward(x) + w_g->forward(g_resized)));
  auto alpha = torch::sigmoid(q);
  return {x * alpha, alpha};
}

torch::Tensor AttentionGateImpl::forward(const torch::Tensor& x,
                                         const torch::Tensor& g) {
  return forward_with_alpha(x, g).first;
}

DecoderBlockImpl::DecoderBlockImpl(int64_t prev_channels, int64_t skip_channels,
                                   int64_t out_channels, double negative_slope)
    : prev_channels_(prev_channels),
      skip_channels_(skip_channels),
      out_channels_(out_channels),
      negative_slope_(negative_slope) {
  const int64_t in_channels = prev_channels + skip_channels;
  conv1 = register_module(
      "conv1", torch::nn::Conv2d(
                   torch::nn::Conv2dOptions(in_channels, out_channels, 3)
                       .padding(1)
                       .bias(false)));
  norm1 = register_module("norm1", torch::nn::BatchNorm2d(out_channels));
  conv2 = register_module(
      "conv2", torch::nn::Conv2d(
                   torch::nn::Conv2dOptions(out_channels, out_channels, 3)
                       .padding(1)
                       .bias(false)));
  norm2 = register_module("norm2", torch::nn::BatchNorm2d(out_channels));
}

torch::Tensor DecoderBlockImpl::forward(const torch::Tensor& prev,
                                        const torch::Tensor& skip) {
  if (skip.size(2) != prev.size(2) * 2 || skip.size(3) != prev.size(3) * 2) {
    std::ostringstream os;
    os << "decoder block: skip " << skip.sizes() << " is not a x2 upsampling "
       << "match for " << prev.sizes();
    throw Error(os.str());
  }
  auto up = resize_bilinear(prev, skip.size(2), skip.size(3));
  auto x = torch::cat({up, skip}, 1);
  x = torch::leaky_relu(norm1->forward(conv1->forward(x)), negative_slope_);
  x = torch::leaky_relu(norm2->forward(conv2->forward(x)), negative_slope_);
  return x;
}

OutputHeadImpl::OutputHeadImpl(int64_t in_channels) {
  conv = register_module(
      "conv",
      torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, 2, 1).bias(true)));
}

torch::Tensor OutputHeadImpl::forward(const torch::Tensor& features) {
  // The guard keeps saturated float32 sigmoids strictly inside (0,1).
  return torch::sigmoid(conv->forward(features)).clamp(1e-7, 1.0 - 1e-7);
}

NetworkConfig NetworkConfig::from_json(const nlohmann::json& j) {
  NetworkConfig c;
  try {
    if (j.contains("encoder")) c.encoder = EncoderConfig::from_json(j.at("encoder"));
    if (j.contains("decoder_channels")) {
      const auto& dc = j.at("decoder_channels");
      if (!dc.is_array() || dc.size() != 4) {
        throw ConfigError("network: decoder_channels must have 4 entries");
      }
      for (size_t i = 0; i < 4; ++i) c.decoder_channels[i] = dc[i].get<int64_t>();
    }
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    c.gate_intermediate_ratio =
        j.value("gate_intermediate_ratio", c.gate_intermediate_ratio);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("network config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json NetworkConfig::to_json() const {
  return nlohmann::json{
      {"encoder", encoder.to_json()},
      {"decoder_channels",
       {decoder_channels[0], decoder_channels[1], decoder_channels[2],
        decoder_channels[3]}},
      {"leaky_slope", leaky_slope},
      {"gate_intermediate_ratio", gate_intermediate_ratio}};
}

void NetworkConfig::validate() const {
  encoder.validate();
  for (auto c : decoder_channels) {
    if (c < 1) throw ConfigError("network: decoder channels must be positive");
  }
  if (!(gate_intermediate_ratio > 0.0)) {
    throw ConfigError("network: gate_intermediate_ratio must be > 0");
  }
}

namespace {

int64_t gate_intermediate(int64_t skip_channels, double ratio) {
  return std::max<int64_t>(1, static_cast<int64_t>(skip_channels * ratio));
}

} // namespace

NeoUNetImpl::NeoUNetImpl(NetworkConfig config) : config_(std::move(config)) {
  config_.validate();
  encoder_ = register_module("encoder", HarDNetEncoder(config_.encoder));
  const auto lc = config_.encoder.level_channels();
  const auto& dc = config_.decoder_channels;
  const double ratio = config_.gate_intermediate_ratio;

  gate16_ = register_module(
      "gate16", AttentionGate(lc[3], lc[4], gate_intermediate(lc[3], ratio)));
  gate8_ = register_module(
      "gate8", AttentionGate(lc[2], dc[0], gate_intermediate(lc[2], ratio)));
  gate4_ = register_module(
      "gate4", AttentionGate(lc[1], dc[1], gate_intermediate(lc[1], ratio)));

  dec16_ = register_module(
      "dec16", DecoderBlock(lc[4], lc[3], dc[0], config_.leaky_slope));
  dec8_ = register_module(
      "dec8", DecoderBlock(dc[0], lc[2], dc[1], config_.leaky_slope));
  dec4_ = register_module(
      "dec4", DecoderBlock(dc[1], lc[1], dc[2], config_.leaky_slope));
  dec2_ = register_module(
      "dec2", DecoderBlock(dc[2], lc[0], dc[3], config_.leaky_slope));

  head16_ = register_module("head16", OutputHead(dc[0]));
  head8_ = register_module("head8", OutputHead(dc[1]));
  head4_ = register_module("head4", OutputHead(dc[2]));
  head2_ = register_module("head2", OutputHead(dc[3]));

  he_init(*this);
}

std::vector<torch::Tensor> NeoUNetImpl::forward(const torch::Tensor& image) {
  const auto levels = encoder_->forward(image);
  const auto& e2 = levels[0];
  const auto& e4 = levels[1];
  const auto& e8 = levels[2];
  const auto& e16 = levels[3];
  const auto& e32 = levels[4];

  // Gating signal for each skip is the previous (coarser) decoder output;
  // the deepest gate uses the stride-32 encoder features.
  auto d16 = dec16_->forward(e32, gate16_->forward(e16, e32));
  auto d8 = dec8_->forward(d16, gate8_->forward(e8, d16));
  auto d4 = dec4_->forward(d8, gate4_->forward(e4, d8));
  auto d2 = dec2_->forward(d4, e2);

  return {head16_->forward(d16), head8_->forward(d8), head4_->forward(d4),
          head2_->forward(d2)};
}

void he_init(torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  for (auto& m : module.modules(/*include_self=*/false)) {
    if (auto* conv = m->as<torch::nn::Conv2d>()) {
      torch::nn::init::kaiming_normal_(
          conv->weight, 0.0, torch::kFanOut, torch::kReLU);
      if (conv->options.bias()) torch::nn::init::zeros_(conv->bias);
    } else if (auto* bn = m->as<torch::nn::BatchNorm2d>()) {
      torch::nn::init::ones_(bn->weight);
      torch::nn::init::zeros_(bn->bias);
    }
  }
}

torch::Tensor infer_labels(const torch::Tensor& head, double threshold,
                           int64_t out_h, int64_t out_w) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw DomainError("infer_labels: threshold must lie in (0,1), got " +
                      std::to_string(threshold));
  }
  auto h = head;
  if (h.dim() == 3) h = h.unsqueeze(0);
  if (h.dim() != 4 || h.size(0) != 1 || h.size(1) != 2) {
    throw DomainError("infer_labels: expected a single 2-channel map");
  }
  h = resize_bilinear(h, out_h, out_w);
  auto p0 = h.select(1, 0).squeeze(0);
  auto p1 = h.select(1, 1).squeeze(0);
  auto polyp = (p0 >= threshold) | (p1 >= threshold);
  auto cls = torch::where(p0 >= p1, torch::ones_like(p0, torch::kLong),
                          torch::full_like(p0, 2, torch::kLong));
  return torch::where(polyp, cls, torch::zeros_like(cls));
}

} // namespace neounet
