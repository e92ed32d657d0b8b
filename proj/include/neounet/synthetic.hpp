#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

namespace neounet {

// Deterministic synthetic polyp dataset. Blobs are rotated ellipses on a
// smoothly textured background; non-neoplastic blobs get a smooth surface,
// neoplastic blobs a high-frequency speckle, so the class signal is texture,
// not geometry. Unknown blobs draw either surface at random.
struct SyntheticSpec {
  int image_size = 256;
  int num_images = 50;
  int min_blobs = 1;
  int max_blobs = 3;
  double p_non = 0.45;
  double p_neo = 0.45;
  double p_unknown = 0.10;
  uint64_t seed = 1234;

  static SyntheticSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
};

// Writes <out_dir>/images/*.png, <out_dir>/masks/*.png and a manifest with
// exact per-image label pixel counts. Same spec + seed gives byte-identical
// output.
void generate_dataset(const SyntheticSpec& spec, const std::string& out_dir);

} // namespace neounet
