#include "neounet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "neounet/error.hpp"
#include "neounet/mask_codec.hpp"

namespace fs = std::filesystem;

namespace neounet {

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  try {
    s.image_size = j.value("image_size", s.image_size);
    s.num_images = j.value("num_images", s.num_images);
    s.min_blobs = j.value("min_blobs", s.min_blobs);
    s.max_blobs = j.value("max_blobs", s.max_blobs);
    s.p_non = j.value("p_non", s.p_non);
    s.p_neo = j.value("p_neo", s.p_neo);
    s.p_unknown = j.value("p_unknown", s.p_unknown);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json SyntheticSpec::to_json() const {
  return nlohmann::json{{"image_size", image_size}, {"num_images", num_images},
                        {"min_blobs", min_blobs},   {"max_blobs", max_blobs},
                        {"p_non", p_non},           {"p_neo", p_neo},
                        {"p_unknown", p_unknown},   {"seed", seed}};
}

void SyntheticSpec::validate() const {
  if (image_size < 32 || image_size % 32 != 0) {
    throw ConfigError("synthetic spec: image_size must be a multiple of 32");
  }
  if (num_images < 1) {
    throw ConfigError("synthetic spec: num_images must be positive");
  }
  if (min_blobs < 1 || max_blobs < min_blobs) {
    throw ConfigError("synthetic spec: require 1 <= min_blobs <= max_blobs");
  }
  if (p_non < 0 || p_neo < 0 || p_unknown < 0 || p_non + p_neo + p_unknown <= 0) {
    throw ConfigError("synthetic spec: class probabilities must be >= 0 and "
                      "not all zero");
  }
}

namespace {

struct Blob {
  double cx, cy;       // center
  double ax, ay;       // semi-axes
  double angle;        // radians
  int label;           // 1, 2 or 3
  bool speckled;       // surface texture
  cv::Vec3d tone;      // base RGB
};

// Normalized squared ellipse radius of (x, y); <= 1 means inside.
double ellipse_r2(const Blob& b, double x, double y) {
  const double dx = x - b.cx;
  const double dy = y - b.cy;
  const double ca = std::cos(b.angle);
  const double sa = std::sin(b.angle);
  const double u = (dx * ca + dy * sa) / b.ax;
  const double v = (-dx * sa + dy * ca) / b.ay;
  return u * u + v * v;
}

void render_image(const SyntheticSpec& spec, uint64_t index, cv::Mat3b& image,
                  cv::Mat1b& labels) {
  const int size = spec.image_size;
  std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ULL + index + 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  image.create(size, size);
  labels.create(size, size);
  labels.setTo(0);

  // Smooth mucosa-like background: per-image base tone plus two low
  // frequency waves and faint pixel noise.
  const cv::Vec3d base(120 + 50 * unit(rng), 85 + 35 * unit(rng),
                       85 + 40 * unit(rng));
  const double fx = (0.5 + 1.5 * unit(rng)) * 2.0 * CV_PI / size;
  const double fy = (0.5 + 1.5 * unit(rng)) * 2.0 * CV_PI / size;
  const double phase_x = 2.0 * CV_PI * unit(rng);
  const double phase_y = 2.0 * CV_PI * unit(rng);
  const double wave_amp = 8.0 + 8.0 * unit(rng);
  for (int y = 0; y < size; ++y) {
    auto* row = image.ptr<cv::Vec3b>(y);
    for (int x = 0; x < size; ++x) {
      const double wave = wave_amp * (std::sin(fx * x + phase_x) +
                                      std::sin(fy * y + phase_y));
      const double noise = 8.0 * (unit(rng) - 0.5);
      for (int c = 0; c < 3; ++c) {
        row[x][c] = cv::saturate_cast<uchar>(base[c] + wave + noise);
      }
    }
  }

  std::uniform_int_distribution<int> blob_count(spec.min_blobs, spec.max_blobs);
  const double p_total = spec.p_non + spec.p_neo + spec.p_unknown;
  const int n_blobs = blob_count(rng);
  for (int i = 0; i < n_blobs; ++i) {
    Blob b;
    const double pick = unit(rng) * p_total;
    if (pick < spec.p_non) {
      b.label = 1;
      b.speckled = false;
    } else if (pick < spec.p_non + spec.p_neo) {
      b.label = 2;
      b.speckled = true;
    } else {
      b.label = 3;
      b.speckled = unit(rng) < 0.5;
    }
    b.cx = size * (0.22 + 0.56 * unit(rng));
    b.cy = size * (0.22 + 0.56 * unit(rng));
    b.ax = size * (0.09 + 0.13 * unit(rng));
    b.ay = size * (0.09 + 0.13 * unit(rng));
    b.angle = CV_PI * unit(rng);
    // Same pinkish tone family for every class: the class signal is texture.
    b.tone = cv::Vec3d(170 + 50 * unit(rng), 95 + 40 * unit(rng),
                       105 + 45 * unit(rng));

    const int x0 = std::max(0, static_cast<int>(b.cx - std::max(b.ax, b.ay) - 1));
    const int x1 = std::min(size - 1, static_cast<int>(b.cx + std::max(b.ax, b.ay) + 1));
    const int y0 = std::max(0, static_cast<int>(b.cy - std::max(b.ax, b.ay) - 1));
    const int y1 = std::min(size - 1, static_cast<int>(b.cy + std::max(b.ax, b.ay) + 1));
    for (int y = y0; y <= y1; ++y) {
      auto* img_row = image.ptr<cv::Vec3b>(y);
      auto* lab_row = labels.ptr<uchar>(y);
      for (int x = x0; x <= x1; ++x) {
        const double r2 = ellipse_r2(b, x, y);
        if (r2 > 1.0) continue;
        const double shade = 1.0 - 0.35 * r2;  // dome-like highlight
        double speckle = 0.0;
        if (b.speckled) {
          speckle = 110.0 * (unit(rng) - 0.5);
        }
        for (int c = 0; c < 3; ++c) {
          img_row[x][c] = cv::saturate_cast<uchar>(b.tone[c] * shade + speckle);
        }
        lab_row[x] = static_cast<uchar>(b.label);
      }
    }
  }
}

} // namespace

void generate_dataset(const SyntheticSpec& spec, const std::string& out_dir) {
  spec.validate();
  const fs::path root(out_dir);
  std::error_code ec;
  fs::create_directories(root / "images", ec);
  fs::create_directories(root / "masks", ec);
  if (!fs::is_directory(root / "images") || !fs::is_directory(root / "masks")) {
    throw IoError("gen-data: cannot create output directories under " + out_dir);
  }

  MaskCodec codec;
  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["generator_spec"] = spec.to_json();
  auto& entries = manifest["entries"] = nlohmann::json::array();

  for (int i = 0; i < spec.num_images; ++i) {
    cv::Mat3b image;
    cv::Mat1b labels;
    render_image(spec, static_cast<uint64_t>(i), image, labels);

    std::array<int64_t, 4> counts{0, 0, 0, 0};
    for (int y = 0; y < labels.rows; ++y) {
      for (int x = 0; x < labels.cols; ++x) counts[labels(y, x)]++;
    }

    char name[32];
    std::snprintf(name, sizeof(name), "%04d.png", i);
    const fs::path image_path = root / "images" / name;
    const fs::path mask_path = root / "masks" / name;

    cv::Mat3b image_bgr, mask_bgr;
    cv::cvtColor(image, image_bgr, cv::COLOR_RGB2BGR);
    cv::cvtColor(codec.encode(labels), mask_bgr, cv::COLOR_RGB2BGR);
    if (!cv::imwrite(image_path.string(), image_bgr) ||
        !cv::imwrite(mask_path.string(), mask_bgr)) {
      throw IoError("gen-data: cannot write " + image_path.string());
    }

    entries.push_back({{"image", std::string("images/") + name},
                       {"mask", std::string("masks/") + name},
                       {"width", spec.image_size},
                       {"height", spec.image_size},
                       {"label_counts",
                        {counts[0], counts[1], counts[2], counts[3]}}});
  }

  std::ofstream out(root / "manifest.json");
  if (!out) throw IoError("gen-data: cannot write manifest under " + out_dir);
  out << manifest.dump(2) << "\n";
}

} // namespace neounet
