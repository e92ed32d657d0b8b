// neounet command-line tool: train / eval / infer / bench / gen-data.
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

#include <torch/torch.h>

#include <CLI11.hpp>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "neounet/checkpoint.hpp"
#include "neounet/dataset.hpp"
#include "neounet/error.hpp"
#include "neounet/hardnet.hpp"
#include "neounet/metrics.hpp"
#include "neounet/network.hpp"
#include "neounet/npz.hpp"
#include "neounet/run_config.hpp"
#include "neounet/synthetic.hpp"
#include "neounet/trainer.hpp"

namespace fs = std::filesystem;
using namespace neounet;

namespace {

cv::Mat3b read_rgb_or_throw(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot read image: " + path);
  cv::Mat3b rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return rgb;
}

void write_rgb(const std::string& path, const cv::Mat3b& rgb) {
  cv::Mat3b bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path, bgr)) throw IoError("cannot write image: " + path);
}

std::map<std::string, std::string> load_name_mapping(const std::string& path,
                                                     HarDNetEncoder& encoder) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open weight mapping: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("weight mapping " + path + ": " + e.what());
  }
  std::map<std::string, std::string> mapping;
  if (j.value("format", std::string{}) == "prefix") {
    std::map<std::string, std::string> prefixes;
    for (const auto& [key, value] : j.at("prefixes").items()) {
      prefixes[key] = value.get<std::string>();
    }
    return expand_prefix_mapping(encoder, prefixes);
  }
  for (const auto& [key, value] : j.items()) {
    mapping[key] = value.get<std::string>();
  }
  return mapping;
}

int cmd_train(const std::string& config_path, int epochs_override,
              int64_t seed_override, bool resume) {
  RunConfig config;
  try {
    config = RunConfig::from_file(config_path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  if (epochs_override >= 0) {
    config.train.total_epochs = epochs_override;
    config.train.validate();
  }
  if (seed_override >= 0) config.seed = static_cast<uint64_t>(seed_override);
  if (config.train_dir.empty()) {
    throw ConfigError("run config: dataset.train_dir is required for train");
  }

  fs::create_directories(config.output_dir);
  {
    std::ofstream snap(fs::path(config.output_dir) / "config_resolved.json");
    snap << config.resolved_json().dump(2) << "\n";
  }
  apply_determinism(config);

  MaskCodec codec{config.color_tolerance};
  DatasetIndex train_index, valid_index;
  try {
    train_index = DatasetIndex::open(config.train_dir, codec);
    valid_index = config.valid_dir.empty()
                      ? train_index
                      : DatasetIndex::open(config.valid_dir, codec);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }

  auto model = NeoUNet(config.network);
  if (!config.pretrained_weights.empty()) {
    auto arrays = npz::load(config.pretrained_weights);
    auto enc = model->encoder();
    auto mapping = load_name_mapping(config.pretrained_mapping, enc);
    const auto report = apply_pretrained(enc, arrays, mapping);
    std::cout << "[train] pretrained: loaded " << report.loaded.size()
              << " tensors, " << report.missing.size() << " missing, "
              << report.shape_mismatch.size() << " shape mismatches\n";
    for (const auto& m : report.shape_mismatch) {
      std::cout << "[train]   mismatch " << m << "\n";
    }
  }

  Trainer::Options options;
  options.train = config.train;
  options.loss = config.loss;
  options.augmentation = config.augmentation;
  options.codec = codec;
  options.output_dir = config.output_dir;
  options.seed = config.seed;
  options.oversample = config.oversample;
  options.oversample_max_ratio = config.oversample_max_ratio;
  options.workers = config.workers;

  std::cout << "[train] " << train_index.entries.size() << " training images, "
            << valid_index.entries.size() << " validation images\n";
  std::cout << "[train] resolved config written to " << config.output_dir
            << "/config_resolved.json\n";

  Trainer trainer(model, options);
  const auto result = trainer.fit(train_index, valid_index, resume);
  std::cout << "[train] done: best Dice_seg " << result.best_dice_seg
            << ", checkpoints at " << result.last_checkpoint << " / "
            << result.best_checkpoint << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& dataset, int size,
             double threshold, const std::string& out_dir, uint64_t seed) {
  torch::manual_seed(seed);
  at::set_num_threads(1);
  auto ckpt = load_checkpoint(checkpoint);
  MaskCodec codec;
  const auto index = DatasetIndex::open(dataset, codec);
  auto outcome = evaluate_dataset(ckpt.model, index, codec, size, threshold);

  const auto report = outcome.metrics;
  std::cout << report.table("NeoUNet");
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream js(fs::path(out_dir) / "metrics.json");
    auto j = report.to_json();
    j["images"] = outcome.images;
    j["eval_size"] = size;
    j["threshold"] = threshold;
    js << j.dump(2) << "\n";
    std::ofstream txt(fs::path(out_dir) / "metrics.txt");
    txt << report.table("NeoUNet");
    std::cout << "[eval] reports written to " << out_dir << "\n";
  }
  return 0;
}

int cmd_infer(const std::string& checkpoint, const std::vector<std::string>& images,
              const std::string& out_dir, double threshold, int size,
              uint64_t seed) {
  torch::manual_seed(seed);
  at::set_num_threads(1);
  auto ckpt = load_checkpoint(checkpoint);
  ckpt.model->eval();
  fs::create_directories(out_dir);
  MaskCodec codec;
  Normalization norm;
  torch::NoGradGuard no_grad;

  int failures = 0;
  for (const auto& path : images) {
    try {
      const auto rgb = read_rgb_or_throw(path);
      cv::Mat3b resized;
      cv::resize(rgb, resized, cv::Size(size, size), 0, 0, cv::INTER_LINEAR);
      auto input = image_to_tensor(resized, norm);
      auto heads = ckpt.model->forward(input);
      auto labels_t =
          infer_labels(heads.back(), threshold, rgb.rows, rgb.cols).to(torch::kUInt8);

      cv::Mat1b labels(rgb.rows, rgb.cols);
      std::memcpy(labels.data, labels_t.contiguous().data_ptr<uint8_t>(),
                  static_cast<size_t>(rgb.rows) * rgb.cols);
      const auto mask_rgb = codec.encode(labels);

      cv::Mat3b overlay = rgb.clone();
      int64_t area_non = 0, area_neo = 0;
      for (int y = 0; y < overlay.rows; ++y) {
        for (int x = 0; x < overlay.cols; ++x) {
          if (labels(y, x) == 0) continue;
          (labels(y, x) == 1 ? area_non : area_neo)++;
          const auto& color = mask_rgb(y, x);
          auto& px = overlay(y, x);
          for (int c = 0; c < 3; ++c) {
            px[c] = static_cast<uchar>((px[c] + color[c]) / 2);
          }
        }
      }

      const auto stem = fs::path(path).stem().string();
      write_rgb((fs::path(out_dir) / (stem + "_mask.png")).string(), mask_rgb);
      write_rgb((fs::path(out_dir) / (stem + "_overlay.png")).string(), overlay);
      std::cout << "[infer] " << path << ": non-neoplastic " << area_non
                << " px, neoplastic " << area_neo << " px\n";
    } catch (const Error& e) {
      std::cerr << "[infer] error on " << path << ": " << e.what() << "\n";
      ++failures;
    }
  }
  return failures == 0 ? 0 : 1;
}

int cmd_bench(const std::string& checkpoint, const std::string& dataset,
              int warmup, const std::string& out_file) {
  at::set_num_threads(1);
  auto ckpt = load_checkpoint(checkpoint);
  ckpt.model->eval();
  MaskCodec codec;
  const auto index = DatasetIndex::open(dataset, codec);
  Normalization norm;

  std::vector<torch::Tensor> images;
  images.reserve(index.entries.size());
  for (const auto& entry : index.entries) {
    const auto rgb = read_rgb_or_throw(entry.image_path);
    cv::Mat3b resized;
    cv::resize(rgb, resized, cv::Size(352, 352), 0, 0, cv::INTER_LINEAR);
    images.push_back(image_to_tensor(resized, norm));
  }

  auto model_fn = [&](const torch::Tensor& image) {
    ckpt.model->forward(image);
  };
  const auto report = benchmark_fps(model_fn, images, warmup);
  std::cout << report.summary();
  if (!out_file.empty()) {
    std::ofstream out(out_file);
    out << report.to_json().dump(2) << "\n";
    std::cout << "[bench] report written to " << out_file << "\n";
  }
  return 0;
}

int cmd_gen_data(const std::string& out_dir, const std::string& spec_path,
                 int64_t seed, int num_images, int image_size) {
  SyntheticSpec spec;
  if (!spec_path.empty()) {
    std::ifstream in(spec_path);
    if (!in) throw ConfigError("cannot open spec: " + spec_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("spec " + spec_path + ": " + e.what());
    }
    spec = SyntheticSpec::from_json(j);
  }
  if (seed >= 0) spec.seed = static_cast<uint64_t>(seed);
  if (num_images > 0) spec.num_images = num_images;
  if (image_size > 0) spec.image_size = image_size;
  spec.validate();
  generate_dataset(spec, out_dir);
  std::ofstream spec_out(fs::path(out_dir) / "dataset_spec.json");
  spec_out << spec.to_json().dump(2) << "\n";
  std::cout << "[gen-data] wrote " << spec.num_images << " images ("
            << spec.image_size << "x" << spec.image_size << ") to " << out_dir
            << "\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"NeoUNet: polyp segmentation and neoplasm detection toolkit"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "train a model from a run config");
  std::string train_config;
  int train_epochs = -1;
  int64_t train_seed = -1;
  bool train_resume = false;
  train->add_option("--config", train_config, "run config JSON")->required();
  train->add_option("--epochs", train_epochs, "override train.total_epochs");
  train->add_option("--seed", train_seed, "override seed");
  train->add_flag("--resume", train_resume, "resume from last.ckpt");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string eval_ckpt, eval_dataset, eval_out;
  int eval_size = 352;
  double eval_threshold = 0.5;
  uint64_t eval_seed = 0;
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--dataset", eval_dataset)->required();
  eval->add_option("--size", eval_size, "eval resolution (multiple of 32)");
  eval->add_option("--threshold", eval_threshold);
  eval->add_option("--out", eval_out, "directory for metrics reports");
  eval->add_option("--seed", eval_seed);

  // infer
  auto* infer = app.add_subcommand("infer", "predict masks for images");
  std::string infer_ckpt, infer_out = "infer_out";
  std::vector<std::string> infer_images;
  double infer_threshold = 0.5;
  int infer_size = 352;
  uint64_t infer_seed = 0;
  infer->add_option("--checkpoint", infer_ckpt)->required();
  infer->add_option("--output", infer_out, "output directory");
  infer->add_option("--threshold", infer_threshold);
  infer->add_option("--size", infer_size, "network input resolution");
  infer->add_option("--seed", infer_seed);
  infer->add_option("images", infer_images, "input images")->required();

  // bench
  auto* bench = app.add_subcommand("bench", "FPS benchmark (100 images, batch 1)");
  std::string bench_ckpt, bench_dataset, bench_out;
  int bench_warmup = 10;
  bench->add_option("--checkpoint", bench_ckpt)->required();
  bench->add_option("--dataset", bench_dataset)->required();
  bench->add_option("--warmup", bench_warmup, "untimed warm-up iterations");
  bench->add_option("--out", bench_out, "JSON report path");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::string gen_out, gen_spec;
  int64_t gen_seed = -1;
  int gen_num = 0, gen_size = 0;
  gen->add_option("--output", gen_out)->required();
  gen->add_option("--spec", gen_spec, "spec JSON (defaults used otherwise)");
  gen->add_option("--seed", gen_seed);
  gen->add_option("--num-images", gen_num);
  gen->add_option("--image-size", gen_size);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) {
      return cmd_train(train_config, train_epochs, train_seed, train_resume);
    }
    if (eval->parsed()) {
      return cmd_eval(eval_ckpt, eval_dataset, eval_size, eval_threshold,
                      eval_out, eval_seed);
    }
    if (infer->parsed()) {
      return cmd_infer(infer_ckpt, infer_images, infer_out, infer_threshold,
                       infer_size, infer_seed);
    }
    if (bench->parsed()) {
      return cmd_bench(bench_ckpt, bench_dataset, bench_warmup, bench_out);
    }
    if (gen->parsed()) {
      return cmd_gen_data(gen_out, gen_spec, gen_seed, gen_num, gen_size);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
