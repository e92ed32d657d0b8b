#include "neounet/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <nlohmann/json.hpp>

#include "neounet/error.hpp"

namespace fs = std::filesystem;

namespace neounet {

namespace {

cv::Mat3b read_rgb(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) {
    throw IoError("cannot read image: " + path);
  }
  cv::Mat3b rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return rgb;
}

std::optional<DatasetIndex> read_manifest(const std::string& root) {
  const fs::path path = fs::path(root) / "manifest.json";
  std::ifstream in(path);
  if (!in) return std::nullopt;
  nlohmann::json j;
  try {
    in >> j;
    DatasetIndex index;
    index.root = root;
    for (const auto& e : j.at("entries")) {
      DatasetEntry entry;
      entry.image_path = (fs::path(root) / e.at("image").get<std::string>()).string();
      entry.mask_path = (fs::path(root) / e.at("mask").get<std::string>()).string();
      entry.width = e.at("width").get<int>();
      entry.height = e.at("height").get<int>();
      const auto& counts = e.at("label_counts");
      for (int i = 0; i < 4; ++i) entry.label_counts[i] = counts[i].get<int64_t>();
      index.entries.push_back(std::move(entry));
    }
    return index;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;  // stale or foreign manifest; rebuild below
  }
}

} // namespace

DatasetIndex DatasetIndex::open(const std::string& root, const MaskCodec& codec,
                                bool allow_manifest) {
  const fs::path images_dir = fs::path(root) / "images";
  const fs::path masks_dir = fs::path(root) / "masks";
  if (!fs::is_directory(images_dir)) {
    throw IoError("dataset: missing image directory " + images_dir.string());
  }
  if (!fs::is_directory(masks_dir)) {
    throw IoError("dataset: missing mask directory " + masks_dir.string());
  }

  std::vector<fs::path> image_files;
  for (const auto& de : fs::directory_iterator(images_dir)) {
    const auto ext = de.path().extension().string();
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") {
      image_files.push_back(de.path());
    }
  }
  std::sort(image_files.begin(), image_files.end());
  if (image_files.empty()) {
    throw DataError("dataset: no images found under " + images_dir.string());
  }

  if (allow_manifest) {
    if (auto cached = read_manifest(root);
        cached && cached->entries.size() == image_files.size()) {
      return *cached;
    }
  }

  DatasetIndex index;
  index.root = root;
  for (const auto& image_path : image_files) {
    DatasetEntry entry;
    entry.image_path = image_path.string();
    const fs::path mask_path = masks_dir / (image_path.stem().string() + ".png");
    if (!fs::exists(mask_path)) {
      throw DataError("dataset: no mask for " + image_path.string() +
                      " (expected " + mask_path.string() + ")");
    }
    entry.mask_path = mask_path.string();

    const auto image = read_rgb(entry.image_path);
    const auto mask_rgb = read_rgb(entry.mask_path);
    if (image.size() != mask_rgb.size()) {
      throw DataError("dataset: size mismatch between " + entry.image_path +
                      " and " + entry.mask_path);
    }
    entry.width = image.cols;
    entry.height = image.rows;
    const auto labels = codec.decode(mask_rgb);
    for (int y = 0; y < labels.rows; ++y) {
      for (int x = 0; x < labels.cols; ++x) {
        entry.label_counts[labels(y, x)]++;
      }
    }
    index.entries.push_back(std::move(entry));
  }
  index.write_manifest();
  return index;
}

std::array<int64_t, 4> DatasetIndex::total_counts() const {
  std::array<int64_t, 4> totals{0, 0, 0, 0};
  for (const auto& e : entries) {
    for (int i = 0; i < 4; ++i) totals[i] += e.label_counts[i];
  }
  return totals;
}

void DatasetIndex::write_manifest() const {
  nlohmann::json j;
  j["format_version"] = 1;
  auto& list = j["entries"] = nlohmann::json::array();
  for (const auto& e : entries) {
    list.push_back(
        {{"image", fs::relative(e.image_path, root).string()},
         {"mask", fs::relative(e.mask_path, root).string()},
         {"width", e.width},
         {"height", e.height},
         {"label_counts",
          {e.label_counts[0], e.label_counts[1], e.label_counts[2],
           e.label_counts[3]}}});
  }
  const fs::path path = fs::path(root) / "manifest.json";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  out << j.dump(2) << "\n";
}

std::vector<double> build_sampler(const DatasetIndex& index, double max_ratio,
                                  std::string* warn) {
  if (index.entries.empty()) {
    throw DomainError("build_sampler: empty dataset index");
  }
  const auto totals = index.total_counts();
  const double p_non = static_cast<double>(totals[1]);
  const double p_neo = static_cast<double>(totals[2]);
  std::vector<double> weights(index.entries.size(), 1.0);
  if (p_non == 0.0) {
    if (p_neo > 0.0 && warn) {
      *warn = "oversampler: no non-neoplastic pixels in the index; "
              "falling back to uniform weights";
    }
    return weights;
  }
  const double ratio = std::clamp(p_neo / p_non, 1.0, max_ratio);
  for (size_t i = 0; i < index.entries.size(); ++i) {
    if (index.entries[i].label_counts[1] > 0) weights[i] = ratio;
  }
  return weights;
}

WeightedSampler::WeightedSampler(std::vector<double> weights, uint64_t seed)
    : rng_(seed), dist_(weights.begin(), weights.end()) {}

size_t WeightedSampler::draw() { return dist_(rng_); }

LoadedSample load_sample(const DatasetEntry& entry, const MaskCodec& codec) {
  LoadedSample sample;
  sample.image = read_rgb(entry.image_path);
  const auto mask_rgb = read_rgb(entry.mask_path);
  if (sample.image.size() != mask_rgb.size()) {
    throw DataError("dataset: size mismatch between " + entry.image_path +
                    " and " + entry.mask_path);
  }
  sample.labels = codec.decode(mask_rgb);
  return sample;
}

torch::Tensor image_to_tensor(const cv::Mat3b& rgb, const Normalization& norm) {
  auto t = torch::from_blob(
               const_cast<uchar*>(rgb.ptr<uchar>()),
               {rgb.rows, rgb.cols, 3}, torch::kUInt8)
               .to(torch::kFloat32)
               .div(255.0)
               .permute({2, 0, 1})
               .contiguous();
  for (int c = 0; c < 3; ++c) {
    t[c] = (t[c] - norm.mean[c]) / norm.stddev[c];
  }
  return t.unsqueeze(0);
}

namespace {

Batch resize_and_stack(const std::vector<LoadedSample>& samples, int size,
                       const Normalization& norm) {
  if (samples.empty()) {
    throw DomainError("make_batch: empty sample list");
  }
  std::vector<torch::Tensor> images, labels;
  images.reserve(samples.size());
  labels.reserve(samples.size());
  for (const auto& s : samples) {
    cv::Mat3b image_r;
    cv::Mat1b labels_r;
    cv::resize(s.image, image_r, cv::Size(size, size), 0, 0, cv::INTER_LINEAR);
    cv::resize(s.labels, labels_r, cv::Size(size, size), 0, 0, cv::INTER_NEAREST);
    images.push_back(image_to_tensor(image_r, norm).squeeze(0));
    labels.push_back(torch::from_blob(labels_r.ptr<uchar>(), {size, size},
                                      torch::kUInt8)
                         .to(torch::kLong));
  }
  return {torch::stack(images), torch::stack(labels)};
}

} // namespace

Batch make_batch(const std::vector<LoadedSample>& samples, int scale,
                 const Normalization& norm) {
  if (std::find(kTrainScales.begin(), kTrainScales.end(), scale) ==
      kTrainScales.end()) {
    throw ConfigError("make_batch: scale " + std::to_string(scale) +
                      " is not one of {448, 352, 256}");
  }
  return resize_and_stack(samples, scale, norm);
}

Batch make_eval_batch(const std::vector<LoadedSample>& samples, int size,
                      const Normalization& norm) {
  if (size < 32 || size % 32 != 0) {
    throw ConfigError("make_eval_batch: size " + std::to_string(size) +
                      " must be a positive multiple of 32");
  }
  return resize_and_stack(samples, size, norm);
}

} // namespace neounet
