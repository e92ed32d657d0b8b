#include <doctest.h>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <filesystem>
#include <fstream>

#include "neounet/dataset.hpp"
#include "neounet/error.hpp"
#include "neounet/mask_codec.hpp"
#include "neounet/synthetic.hpp"

namespace fs = std::filesystem;
using namespace neounet;

namespace {

fs::path fresh_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("neounet_syn_" + tag);
  fs::remove_all(dir);
  return dir;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

SyntheticSpec small_spec() {
  SyntheticSpec spec;
  spec.image_size = 64;
  spec.num_images = 6;
  spec.seed = 42;
  return spec;
}

} // namespace

TEST_CASE("generator: deterministic bytes for a fixed spec and seed") {
  auto spec = small_spec();
  auto dir_a = fresh_dir("det_a");
  auto dir_b = fresh_dir("det_b");
  generate_dataset(spec, dir_a.string());
  generate_dataset(spec, dir_b.string());
  for (int i = 0; i < spec.num_images; ++i) {
    char name[16];
    std::snprintf(name, sizeof(name), "%04d.png", i);
    CHECK(file_bytes(dir_a / "images" / name) ==
          file_bytes(dir_b / "images" / name));
    CHECK(file_bytes(dir_a / "masks" / name) ==
          file_bytes(dir_b / "masks" / name));
  }
  auto other = spec;
  other.seed = 43;
  auto dir_c = fresh_dir("det_c");
  generate_dataset(other, dir_c.string());
  CHECK(file_bytes(dir_a / "images" / "0000.png") !=
        file_bytes(dir_c / "images" / "0000.png"));
}

TEST_CASE("generator: zero unknown probability yields no yellow pixels") {
  auto spec = small_spec();
  spec.p_unknown = 0.0;
  spec.num_images = 8;
  auto dir = fresh_dir("nounknown");
  generate_dataset(spec, dir.string());
  MaskCodec codec;
  auto index = DatasetIndex::open(dir.string(), codec);
  for (const auto& e : index.entries) {
    CHECK(e.label_counts[3] == 0);
  }
}

TEST_CASE("generator: manifest counts equal a recount by decoding") {
  auto spec = small_spec();
  auto dir = fresh_dir("counts");
  generate_dataset(spec, dir.string());

  // read the generator's manifest directly
  std::ifstream in(dir / "manifest.json");
  REQUIRE(in.good());
  nlohmann::json manifest;
  in >> manifest;

  MaskCodec codec;
  for (const auto& entry : manifest.at("entries")) {
    const auto mask_path = dir / entry.at("mask").get<std::string>();
    cv::Mat bgr = cv::imread(mask_path.string(), cv::IMREAD_COLOR);
    REQUIRE(!bgr.empty());
    cv::Mat3b rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    auto labels = codec.decode(rgb);
    std::array<int64_t, 4> counts{0, 0, 0, 0};
    for (int y = 0; y < labels.rows; ++y) {
      for (int x = 0; x < labels.cols; ++x) counts[labels(y, x)]++;
    }
    const auto& expected = entry.at("label_counts");
    for (int i = 0; i < 4; ++i) {
      CHECK(counts[i] == expected[i].get<int64_t>());
    }
  }
}

TEST_CASE("generator: masks use only legal colors and load as a dataset") {
  auto spec = small_spec();
  spec.num_images = 4;
  auto dir = fresh_dir("legal");
  generate_dataset(spec, dir.string());
  MaskCodec strict{0};  // zero tolerance: any off-palette pixel throws
  auto index = DatasetIndex::open(dir.string(), strict, /*allow_manifest=*/false);
  CHECK(index.entries.size() == 4);
  for (const auto& e : index.entries) {
    int64_t total = 0;
    for (auto c : e.label_counts) total += c;
    CHECK(total == spec.image_size * spec.image_size);
  }
}

TEST_CASE("generator: spec validation") {
  SyntheticSpec bad;
  bad.image_size = 100;  // not a multiple of 32
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  SyntheticSpec neg;
  neg.p_non = -0.1;
  CHECK_THROWS_AS(neg.validate(), ConfigError);
  SyntheticSpec blobs;
  blobs.min_blobs = 3;
  blobs.max_blobs = 1;
  CHECK_THROWS_AS(blobs.validate(), ConfigError);
}
