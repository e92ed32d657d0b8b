#include <doctest.h>

#include <torch/torch.h>

#include <cmath>
#include <set>
#include <vector>

#include "neounet/error.hpp"
#include "neounet/hardnet.hpp"

using namespace neounet;

namespace {

// Brute-force link oracle: enumerate n and test divisibility directly.
std::set<int64_t> links_oracle(int64_t k) {
  std::set<int64_t> links;
  for (int64_t n = 0; (int64_t{1} << n) <= k; ++n) {
    const int64_t step = int64_t{1} << n;
    if (k % step == 0 && k - step >= 0) links.insert(k - step);
  }
  return links;
}

// Hand-derived channel oracle: count factor-of-two divisions, scale, then
// drop to the next even integer, never below the growth rate.
int64_t channels_oracle(int64_t layer, int64_t k, double m) {
  int64_t n = 0;
  int64_t l = layer;
  while (l % 2 == 0) {
    l /= 2;
    ++n;
  }
  double value = static_cast<double>(k);
  for (int64_t i = 0; i < n; ++i) value *= m;
  auto floored = static_cast<int64_t>(std::floor(value));
  if (floored % 2 != 0) --floored;
  return std::max(floored, k);
}

} // namespace

TEST_CASE("hdb links: spec cases and brute-force sweep") {
  CHECK(hdb_links(6) == std::vector<int64_t>{5, 4});
  CHECK(hdb_links(8) == std::vector<int64_t>{7, 6, 4, 0});
  CHECK(hdb_links(1) == std::vector<int64_t>{0});
  CHECK_THROWS_AS(hdb_links(0), DomainError);
  CHECK_THROWS_AS(hdb_links(-3), DomainError);

  for (int64_t k = 1; k <= 64; ++k) {
    auto got = hdb_links(k);
    std::set<int64_t> got_set(got.begin(), got.end());
    CHECK(got_set == links_oracle(k));
    CHECK(got.size() == got_set.size());
    CHECK(*std::max_element(got.begin(), got.end()) == k - 1);
  }
}

TEST_CASE("hdb out channels: spec cases, grid sweep, monotonicity") {
  CHECK(hdb_out_channels(3, 10, 1.7) == 10);
  CHECK(hdb_out_channels(4, 10, 1.7) == 28);
  CHECK(hdb_out_channels(2, 14, 2.0) == 28);
  CHECK_THROWS_AS(hdb_out_channels(0, 10, 1.7), DomainError);
  CHECK_THROWS_AS(hdb_out_channels(3, 0, 1.7), DomainError);
  CHECK_THROWS_AS(hdb_out_channels(3, 10, 1.0), DomainError);

  for (double m : {1.7, 2.0}) {
    for (int64_t k : {1, 2, 3, 5, 10, 14, 16, 20, 40}) {
      int64_t prev = 0;
      for (int64_t l = 1; l <= 16; ++l) {
        const int64_t got = hdb_out_channels(l, k, m);
        CHECK(got == channels_oracle(l, k, m));
        CHECK(got >= k);
      }
      // monotone non-decreasing in n for fixed k, m
      for (int64_t n = 0; n <= 4; ++n) {
        const int64_t got = hdb_out_channels(int64_t{1} << n, k, m);
        CHECK(got >= prev);
        prev = got;
      }
    }
  }
}

TEST_CASE("hard block: output channels match the connectivity-graph oracle") {
  torch::manual_seed(1);
  HDBConfig cfg{8, 16, 1.7, 64};
  HardBlock block(cfg);

  // independent route: sum channels of layers that nothing re-consumes
  // (odd indices) plus the final layer
  int64_t expected = 0;
  for (int64_t l = 1; l <= cfg.num_layers; ++l) {
    if (l % 2 == 1 || l == cfg.num_layers) {
      expected += channels_oracle(l, cfg.growth_rate, cfg.compression);
    }
  }
  CHECK(block->out_channels() == expected);

  auto x = torch::randn({1, 64, 16, 16});
  auto y = block->forward(x);
  CHECK(y.size(1) == expected);
  CHECK(y.size(2) == 16);
  CHECK(y.size(3) == 16);

  CHECK_THROWS_AS(block->forward(torch::randn({1, 32, 16, 16})), ConfigError);
}

TEST_CASE("hard block: single layer passes through layer 1 only") {
  torch::manual_seed(2);
  HDBConfig cfg{1, 12, 1.7, 8};
  HardBlock block(cfg);
  CHECK(block->out_channels() == 12);
  auto y = block->forward(torch::randn({2, 8, 8, 8}));
  CHECK(y.sizes() == torch::IntArrayRef({2, 12, 8, 8}));
}

TEST_CASE("hardnet68 table reproduces the published pyramid widths") {
  auto cfg = EncoderConfig::hardnet68();
  const auto levels = cfg.level_channels();
  CHECK(levels == std::array<int64_t, 5>{64, 128, 320, 640, 1024});
  // first block of the canonical table: 4 odd layers of 14 plus a 68 tail
  CHECK(hdb_block_out_channels(8, 14, 1.7, ChannelRounding::FloorEven) == 124);
}

TEST_CASE("encoder: five halvings at both paper scales") {
  torch::manual_seed(3);
  HarDNetEncoder encoder(EncoderConfig::tiny());
  encoder->eval();
  {
    torch::NoGradGuard no_grad;
    auto levels = encoder->forward(torch::randn({1, 3, 352, 352}));
    const std::array<int64_t, 5> sizes{176, 88, 44, 22, 11};
    for (int s = 0; s < 5; ++s) {
      CHECK(levels[s].size(2) == sizes[s]);
      CHECK(levels[s].size(3) == sizes[s]);
    }
    auto levels256 = encoder->forward(torch::randn({1, 3, 256, 256}));
    const std::array<int64_t, 5> sizes256{128, 64, 32, 16, 8};
    for (int s = 0; s < 5; ++s) {
      CHECK(levels256[s].size(2) == sizes256[s]);
      // channel counts are input-independent
      CHECK(levels256[s].size(1) == levels[s].size(1));
      CHECK(levels256[s].size(1) == encoder->level_channels()[s]);
    }
  }
}

TEST_CASE("encoder: shape errors name the offending dimension") {
  torch::manual_seed(4);
  HarDNetEncoder encoder(EncoderConfig::tiny());
  try {
    encoder->forward(torch::randn({1, 3, 352, 350}));
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("width") != std::string::npos);
    CHECK(std::string(e.what()).find("350") != std::string::npos);
  }
  try {
    encoder->forward(torch::randn({1, 3, 330, 352}));
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("height") != std::string::npos);
  }
}

TEST_CASE("encoder: deterministic with frozen weights") {
  torch::manual_seed(5);
  HarDNetEncoder encoder(EncoderConfig::tiny());
  encoder->eval();
  torch::NoGradGuard no_grad;
  auto x = torch::randn({1, 3, 64, 64});
  auto a = encoder->forward(x);
  auto b = encoder->forward(x);
  for (int s = 0; s < 5; ++s) {
    CHECK(torch::equal(a[s], b[s]));
  }
}

TEST_CASE("encoder config: json round trip") {
  auto cfg = EncoderConfig::hardnet68();
  auto parsed = EncoderConfig::from_json(cfg.to_json());
  CHECK(parsed.level_channels() == cfg.level_channels());
  CHECK(parsed.stem_channels == cfg.stem_channels);
  CHECK(parsed.compression == cfg.compression);

  auto bad = cfg.to_json();
  bad["stages"].erase(4);
  CHECK_THROWS_AS(EncoderConfig::from_json(bad), ConfigError);
}
