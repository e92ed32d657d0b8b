#include "neounet/hardnet.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace neounet {

namespace F = torch::nn::functional;

ChannelRounding channel_rounding_from_string(const std::string& s) {
  if (s == "floor_even") return ChannelRounding::FloorEven;
  if (s == "reference_nearest") return ChannelRounding::ReferenceNearest;
  throw ConfigError("unknown channel_rounding '" + s +
                    "' (expected floor_even or reference_nearest)");
}

std::string to_string(ChannelRounding r) {
  return r == ChannelRounding::FloorEven ? "floor_even" : "reference_nearest";
}

std::vector<int64_t> hdb_links(int64_t layer_index) {
  if (layer_index < 1) {
    throw DomainError("hdb_links: layer_index must be >= 1, got " +
                      std::to_string(layer_index));
  }
  std::vector<int64_t> links;
  for (int64_t step = 1; step <= layer_index; step <<= 1) {
    if (layer_index % step == 0) {
      links.push_back(layer_index - step);
    }
  }
  return links;
}

int64_t hdb_out_channels(int64_t layer_index, int64_t growth_rate,
                         double compression, ChannelRounding rounding) {
  if (layer_index < 1 || growth_rate < 1 || compression <= 1.0) {
    throw DomainError("hdb_out_channels: require layer_index >= 1, "
                      "growth_rate >= 1, compression > 1");
  }
  int64_t n = 0;
  for (int64_t l = layer_index; l % 2 == 0; l /= 2) ++n;
  const double raw = growth_rate * std::pow(compression, n);
  int64_t channels;
  if (rounding == ChannelRounding::FloorEven) {
    channels = 2 * static_cast<int64_t>(raw / 2.0);
  } else {
    channels = static_cast<int64_t>(static_cast<int64_t>(raw + 1.0) / 2) * 2;
  }
  return std::max(channels, growth_rate);
}

void HDBConfig::validate() const {
  if (num_layers < 1 || growth_rate < 1 || input_channels < 1) {
    throw ConfigError("HDB config: num_layers, growth_rate and input_channels "
                      "must be positive");
  }
  if (!(compression > 1.0)) {
    throw ConfigError("HDB config: compression must be > 1");
  }
}

namespace {

// A layer is kept in the block output when its index is odd or it is the
// final layer; interior even layers are fully consumed downstream.
bool layer_kept(int64_t layer, int64_t num_layers) {
  return layer % 2 == 1 || layer == num_layers;
}

} // namespace

int64_t hdb_block_out_channels(int64_t num_layers, int64_t growth_rate,
                               double compression, ChannelRounding rounding) {
  int64_t total = 0;
  for (int64_t l = 1; l <= num_layers; ++l) {
    if (layer_kept(l, num_layers)) {
      total += hdb_out_channels(l, growth_rate, compression, rounding);
    }
  }
  return total;
}

ConvBNActImpl::ConvBNActImpl(int64_t in_channels, int64_t out_channels,
                             int64_t kernel, int64_t stride) {
  conv = register_module(
      "conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels,
                                                         out_channels, kernel)
                                    .stride(stride)
                                    .padding(kernel / 2)
                                    .bias(false)));
  norm = register_module("norm", torch::nn::BatchNorm2d(out_channels));
}

torch::Tensor ConvBNActImpl::forward(torch::Tensor x) {
  return torch::relu6(norm->forward(conv->forward(x)));
}

HardBlockImpl::HardBlockImpl(const HDBConfig& config) : config_(config) {
  config_.validate();
  layers_ = register_module("layers", torch::nn::ModuleList());
  layer_out_channels_.push_back(config_.input_channels);
  for (int64_t l = 1; l <= config_.num_layers; ++l) {
    links_.push_back(hdb_links(l));
    int64_t in_ch = 0;
    for (int64_t src : links_.back()) in_ch += layer_out_channels_[src];
    const int64_t out_ch = hdb_out_channels(l, config_.growth_rate,
                                            config_.compression, config_.rounding);
    layer_out_channels_.push_back(out_ch);
    layers_->push_back(ConvBNAct(in_ch, out_ch, 3));
    if (layer_kept(l, config_.num_layers)) out_channels_ += out_ch;
  }
}

torch::Tensor HardBlockImpl::forward(torch::Tensor x) {
  if (x.size(1) != config_.input_channels) {
    throw ConfigError("HardBlock: expected " +
                      std::to_string(config_.input_channels) +
                      " input channels, got " + std::to_string(x.size(1)));
  }
  std::vector<torch::Tensor> outputs{x};
  for (int64_t l = 1; l <= config_.num_layers; ++l) {
    const auto& link = links_[l - 1];
    torch::Tensor in;
    if (link.size() == 1) {
      in = outputs[link[0]];
    } else {
      std::vector<torch::Tensor> parts;
      parts.reserve(link.size());
      for (int64_t src : link) parts.push_back(outputs[src]);
      in = torch::cat(parts, 1);
    }
    outputs.push_back(layers_->ptr(l - 1)->as<ConvBNActImpl>()->forward(in));
  }
  std::vector<torch::Tensor> kept;
  for (int64_t l = 1; l <= config_.num_layers; ++l) {
    if (layer_kept(l, config_.num_layers)) kept.push_back(outputs[l]);
  }
  return kept.size() == 1 ? kept[0] : torch::cat(kept, 1);
}

EncoderConfig EncoderConfig::hardnet68() {
  EncoderConfig c;
  c.name = "hardnet68";
  c.stem_channels = {32, 64};
  c.compression = 1.7;
  c.stages[0] = {};
  c.stages[1] = {{{8, 14, 128}}};
  c.stages[2] = {{{16, 16, 256}, {16, 20, 320}}};
  c.stages[3] = {{{16, 40, 640}}};
  c.stages[4] = {{{4, 160, 1024}}};
  return c;
}

EncoderConfig EncoderConfig::tiny() {
  EncoderConfig c;
  c.name = "tiny";
  c.stem_channels = {8, 16};
  c.compression = 1.7;
  c.stages[0] = {};
  c.stages[1] = {{{4, 10, 32}}};
  c.stages[2] = {{{4, 14, 48}}};
  c.stages[3] = {{{4, 20, 72}}};
  c.stages[4] = {{{4, 28, 96}}};
  return c;
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  try {
    c.name = j.value("name", std::string("custom"));
    const auto& stem = j.at("stem_channels");
    if (!stem.is_array() || stem.size() != 2) {
      throw ConfigError("encoder: stem_channels must be a 2-element array");
    }
    c.stem_channels = {stem[0].get<int64_t>(), stem[1].get<int64_t>()};
    c.compression = j.value("compression", 1.7);
    c.rounding = channel_rounding_from_string(
        j.value("channel_rounding", std::string("floor_even")));
    const auto& stages = j.at("stages");
    if (!stages.is_array() || stages.size() != 5) {
      throw ConfigError("encoder: exactly 5 stages required, got " +
                        std::to_string(stages.size()));
    }
    for (size_t s = 0; s < 5; ++s) {
      for (const auto& b : stages[s].value("blocks", nlohmann::json::array())) {
        c.stages[s].blocks.push_back({b.at("num_layers").get<int64_t>(),
                                      b.at("growth_rate").get<int64_t>(),
                                      b.at("transition_channels").get<int64_t>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("encoder config: ") + e.what());
  }
  c.validate();
  return c;
}

EncoderConfig EncoderConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open encoder config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("encoder config " + path + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json EncoderConfig::to_json() const {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& stage : this->stages) {
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& b : stage.blocks) {
      blocks.push_back({{"num_layers", b.num_layers},
                        {"growth_rate", b.growth_rate},
                        {"transition_channels", b.transition_channels}});
    }
    stages.push_back({{"blocks", blocks}});
  }
  return nlohmann::json{{"name", name},
                        {"stem_channels", {stem_channels[0], stem_channels[1]}},
                        {"compression", compression},
                        {"channel_rounding", to_string(rounding)},
                        {"downsample", "max_pool"},
                        {"stages", stages}};
}

void EncoderConfig::validate() const {
  if (stem_channels[0] < 1 || stem_channels[1] < 1) {
    throw ConfigError("encoder: stem channels must be positive");
  }
  if (!(compression > 1.0)) {
    throw ConfigError("encoder: compression must be > 1");
  }
  for (const auto& stage : stages) {
    for (const auto& b : stage.blocks) {
      if (b.num_layers < 1 || b.growth_rate < 1 || b.transition_channels < 1) {
        throw ConfigError("encoder: block fields must be positive");
      }
    }
  }
}

std::array<int64_t, 5> EncoderConfig::level_channels() const {
  std::array<int64_t, 5> levels{};
  int64_t ch = stem_channels[1];
  for (size_t s = 0; s < 5; ++s) {
    for (const auto& b : stages[s].blocks) {
      ch = b.transition_channels;
    }
    levels[s] = ch;
  }
  return levels;
}

HarDNetEncoderImpl::HarDNetEncoderImpl(EncoderConfig config)
    : config_(std::move(config)) {
  config_.validate();
  stem1_ = register_module("stem1", ConvBNAct(3, config_.stem_channels[0], 3, 2));
  stem2_ = register_module(
      "stem2", ConvBNAct(config_.stem_channels[0], config_.stem_channels[1], 3));
  int64_t ch = config_.stem_channels[1];
  for (size_t s = 0; s < 5; ++s) {
    stage_blocks_[s] =
        register_module("stage" + std::to_string(s + 1) + "_blocks",
                        torch::nn::ModuleList());
    stage_transitions_[s] =
        register_module("stage" + std::to_string(s + 1) + "_transitions",
                        torch::nn::ModuleList());
    for (const auto& spec : config_.stages[s].blocks) {
      HDBConfig hdb{spec.num_layers, spec.growth_rate, config_.compression, ch,
                    config_.rounding};
      auto block = HardBlock(hdb);
      stage_blocks_[s]->push_back(block);
      stage_transitions_[s]->push_back(
          ConvBNAct(block->out_channels(), spec.transition_channels, 1));
      ch = spec.transition_channels;
    }
  }
}

std::array<torch::Tensor, 5> HarDNetEncoderImpl::forward(torch::Tensor image) {
  if (image.dim() != 4 || image.size(1) != 3) {
    throw DomainError("encoder: expected a [N,3,H,W] image tensor");
  }
  for (auto [dim, name] : {std::pair{2, "height"}, std::pair{3, "width"}}) {
    if (image.size(dim) % 32 != 0) {
      throw DomainError(std::string("encoder: input ") + name + " " +
                        std::to_string(image.size(dim)) +
                        " is not divisible by 32");
    }
  }
  std::array<torch::Tensor, 5> levels;
  auto x = stem2_->forward(stem1_->forward(image));
  for (size_t s = 0; s < 5; ++s) {
    if (s == 1) {
      x = F::max_pool2d(x, F::MaxPool2dFuncOptions(3).stride(2).padding(1));
    } else if (s >= 2) {
      x = F::max_pool2d(x, F::MaxPool2dFuncOptions(2).stride(2));
    }
    for (size_t b = 0; b < stage_blocks_[s]->size(); ++b) {
      x = stage_blocks_[s]->ptr(b)->as<HardBlockImpl>()->forward(x);
      x = stage_transitions_[s]->ptr(b)->as<ConvBNActImpl>()->forward(x);
    }
    levels[s] = x;
  }
  return levels;
}

PretrainedLoadReport apply_pretrained(
    HarDNetEncoder& encoder, const std::map<std::string, torch::Tensor>& arrays,
    const std::map<std::string, std::string>& mapping) {
  PretrainedLoadReport report;
  torch::NoGradGuard no_grad;
  auto params = encoder->named_parameters(/*recurse=*/true);
  auto buffers = encoder->named_buffers(/*recurse=*/true);
  auto try_load = [&](const std::string& name, torch::Tensor dest) {
    auto mapped = mapping.find(name);
    if (mapped == mapping.end()) return;
    auto src = arrays.find(mapped->second);
    if (src == arrays.end()) {
      report.missing.push_back(name + " <- " + mapped->second);
      return;
    }
    if (!src->second.sizes().equals(dest.sizes())) {
      std::ostringstream os;
      os << name << " <- " << mapped->second << " (" << src->second.sizes()
         << " vs " << dest.sizes() << ")";
      report.shape_mismatch.push_back(os.str());
      return;
    }
    dest.copy_(src->second.to(dest.dtype()));
    report.loaded.push_back(name);
  };
  for (const auto& p : params) try_load(p.key(), p.value());
  for (const auto& b : buffers) try_load(b.key(), b.value());
  return report;
}

std::map<std::string, std::string> expand_prefix_mapping(
    HarDNetEncoder& encoder,
    const std::map<std::string, std::string>& prefix_map) {
  std::map<std::string, std::string> mapping;
  auto expand = [&](const std::string& name) {
    for (const auto& [ours, theirs] : prefix_map) {
      if (name.rfind(ours, 0) == 0) {
        mapping[name] = theirs + name.substr(ours.size());
        return;
      }
    }
  };
  for (const auto& p : encoder->named_parameters()) expand(p.key());
  for (const auto& b : encoder->named_buffers()) expand(b.key());
  return mapping;
}

} // namespace neounet
