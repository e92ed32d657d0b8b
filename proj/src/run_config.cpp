#include "neounet/run_config.hpp"

#include <filesystem>
#include <fstream>

#include "neounet/error.hpp"

namespace fs = std::filesystem;

namespace neounet {

LossConfig loss_from_json(const nlohmann::json& j) {
  LossConfig c;
  try {
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.gamma = j.value("gamma", c.gamma);
    c.w_class = j.value("w_class", c.w_class);
    c.w_seg = j.value("w_seg", c.w_seg);
    c.smooth = j.value("smooth", c.smooth);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("loss config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json loss_to_json(const LossConfig& c) {
  return nlohmann::json{{"alpha", c.alpha},     {"beta", c.beta},
                        {"gamma", c.gamma},     {"w_class", c.w_class},
                        {"w_seg", c.w_seg},     {"smooth", c.smooth}};
}

AugmentationPolicy augmentation_from_json(const nlohmann::json& j) {
  AugmentationPolicy p;
  try {
    p.rotate = j.value("rotate", p.rotate);
    p.horizontal_flip = j.value("horizontal_flip", p.horizontal_flip);
    p.vertical_flip = j.value("vertical_flip", p.vertical_flip);
    p.motion_blur = j.value("motion_blur", p.motion_blur);
    p.color_jitter = j.value("color_jitter", p.color_jitter);
    p.apply_probability = j.value("apply_probability", p.apply_probability);
    p.max_rotation_deg = j.value("max_rotation_deg", p.max_rotation_deg);
    p.blur_kernel_min = j.value("blur_kernel_min", p.blur_kernel_min);
    p.blur_kernel_max = j.value("blur_kernel_max", p.blur_kernel_max);
    p.jitter_strength = j.value("jitter_strength", p.jitter_strength);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("augmentation config: ") + e.what());
  }
  if (p.apply_probability < 0.0 || p.apply_probability > 1.0) {
    throw ConfigError("augmentation: apply_probability must lie in [0,1]");
  }
  return p;
}

nlohmann::json augmentation_to_json(const AugmentationPolicy& p) {
  return nlohmann::json{{"rotate", p.rotate},
                        {"horizontal_flip", p.horizontal_flip},
                        {"vertical_flip", p.vertical_flip},
                        {"motion_blur", p.motion_blur},
                        {"color_jitter", p.color_jitter},
                        {"apply_probability", p.apply_probability},
                        {"max_rotation_deg", p.max_rotation_deg},
                        {"blur_kernel_min", p.blur_kernel_min},
                        {"blur_kernel_max", p.blur_kernel_max},
                        {"jitter_strength", p.jitter_strength}};
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open run config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("run config " + path + ": " + e.what());
  }
  return from_json(j, fs::path(path).parent_path().string());
}

RunConfig RunConfig::from_json(const nlohmann::json& j,
                               const std::string& base_dir) {
  RunConfig c;
  auto resolve = [&](const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute() || base_dir.empty()) return p;
    return (fs::path(base_dir) / p).string();
  };
  try {
    c.seed = j.value("seed", c.seed);
    c.deterministic = j.value("deterministic", c.deterministic);
    c.threads = j.value("threads", c.threads);
    c.workers = j.value("workers", c.workers);
    c.output_dir = j.value("output_dir", c.output_dir);

    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      c.train_dir = resolve(d.value("train_dir", std::string{}));
      c.valid_dir = resolve(d.value("valid_dir", std::string{}));
      c.color_tolerance = d.value("color_tolerance", c.color_tolerance);
    }

    if (j.contains("network")) {
      auto net = j.at("network");
      if (net.contains("encoder") && net.at("encoder").is_string()) {
        // "encoder" may name a config file instead of an inline object.
        const auto enc_path = resolve(net.at("encoder").get<std::string>());
        net.erase("encoder");
        c.network = NetworkConfig::from_json(net);
        c.network.encoder = EncoderConfig::from_file(enc_path);
        c.network.validate();
      } else {
        c.network = NetworkConfig::from_json(net);
      }
    }

    if (j.contains("loss")) c.loss = loss_from_json(j.at("loss"));
    if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
    if (j.contains("augmentation")) {
      c.augmentation = augmentation_from_json(j.at("augmentation"));
    }
    if (j.contains("oversample")) {
      const auto& o = j.at("oversample");
      c.oversample = o.value("enabled", c.oversample);
      c.oversample_max_ratio = o.value("max_ratio", c.oversample_max_ratio);
    }
    if (j.contains("pretrained")) {
      const auto& p = j.at("pretrained");
      c.pretrained_weights = resolve(p.value("weights", std::string{}));
      c.pretrained_mapping = resolve(p.value("mapping", std::string{}));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json RunConfig::resolved_json() const {
  return nlohmann::json{
      {"seed", seed},
      {"deterministic", deterministic},
      {"threads", threads},
      {"workers", workers},
      {"output_dir", output_dir},
      {"dataset",
       {{"train_dir", train_dir},
        {"valid_dir", valid_dir},
        {"color_tolerance", color_tolerance},
        {"mask_colors_rgb",
         {{"background", {0, 0, 0}},
          {"non_neoplastic", {0, 255, 0}},
          {"neoplastic", {255, 0, 0}},
          {"unknown", {255, 255, 0}}}}}},
      {"network", network.to_json()},
      {"loss", loss_to_json(loss)},
      {"train", train.to_json()},
      {"augmentation", augmentation_to_json(augmentation)},
      {"oversample",
       {{"enabled", oversample}, {"max_ratio", oversample_max_ratio}}},
      {"pretrained",
       {{"weights", pretrained_weights}, {"mapping", pretrained_mapping}}},
      {"inference",
       {{"channel_order", "0: non-neoplastic, 1: neoplastic"},
        {"tie_break", "non-neoplastic"},
        {"upsampling", "bilinear, half-pixel centers"}}}};
}

void RunConfig::validate() const {
  if (threads < 1) throw ConfigError("run config: threads must be >= 1");
  if (workers < 0) throw ConfigError("run config: workers must be >= 0");
  if (color_tolerance < 0 || color_tolerance > 127) {
    throw ConfigError("run config: color_tolerance must lie in [0,127]");
  }
  network.validate();
  loss.validate();
  train.validate();
}

void apply_determinism(const RunConfig& config) {
  torch::manual_seed(config.seed);
  at::set_num_threads(config.deterministic ? 1 : config.threads);
}

} // namespace neounet
