#pragma once

#include <torch/torch.h>

#include <opencv2/core.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "neounet/mask_codec.hpp"

namespace neounet {

// Expected dataset layout: <root>/images/*.{png,jpg,jpeg} plus
// <root>/masks/<same stem>.png. Per-image label pixel counts are cached in
// <root>/manifest.json so the oversampler does not re-decode every mask.

struct DatasetEntry {
  std::string image_path;
  std::string mask_path;
  int width = 0;
  int height = 0;
  std::array<int64_t, 4> label_counts{0, 0, 0, 0};
};

struct DatasetIndex {
  std::string root;
  std::vector<DatasetEntry> entries;

  // Reads the manifest when present and complete, otherwise scans the
  // directory, decodes every mask and writes a fresh manifest.
  static DatasetIndex open(const std::string& root, const MaskCodec& codec,
                           bool allow_manifest = true);

  std::array<int64_t, 4> total_counts() const;
  void write_manifest() const;
};

// Oversampling weights targeting P_non ~= P_neo: images containing any
// non-neoplastic pixels are upweighted by the global neoplastic/non
// pixel ratio, clamped to [1, max_ratio]. Emits a warning line on `warn`
// (when set) and falls back to uniform weights if there are no
// non-neoplastic pixels to upweight.
std::vector<double> build_sampler(const DatasetIndex& index,
                                  double max_ratio = 20.0,
                                  std::string* warn = nullptr);

// Seeded weighted sampling with replacement.
class WeightedSampler {
public:
  WeightedSampler(std::vector<double> weights, uint64_t seed);
  size_t draw();

private:
  std::mt19937_64 rng_;
  std::discrete_distribution<size_t> dist_;
};

struct LoadedSample {
  cv::Mat3b image;   // RGB
  cv::Mat1b labels;  // {0,1,2,3}
};

// Reads and decodes one entry; validates that image and mask agree in size.
LoadedSample load_sample(const DatasetEntry& entry, const MaskCodec& codec);

// ImageNet statistics; applied after scaling pixels to [0,1].
struct Normalization {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> stddev{0.229, 0.224, 0.225};
};

struct Batch {
  torch::Tensor images;  // float32 [N,3,S,S], normalized
  torch::Tensor labels;  // int64 [N,S,S]
};

inline constexpr std::array<int, 3> kTrainScales{448, 352, 256};

// Resizes every sample to scale x scale (bilinear for images, nearest for
// masks) and stacks them. `scale` must be one of kTrainScales.
Batch make_batch(const std::vector<LoadedSample>& samples, int scale,
                 const Normalization& norm = {});

// Same resizing contract without the training-scale restriction; used by
// evaluation and inference at any multiple of 32.
Batch make_eval_batch(const std::vector<LoadedSample>& samples, int size,
                      const Normalization& norm = {});

// Converts one RGB image to a normalized [1,3,H,W] float tensor.
torch::Tensor image_to_tensor(const cv::Mat3b& rgb, const Normalization& norm);

} // namespace neounet
