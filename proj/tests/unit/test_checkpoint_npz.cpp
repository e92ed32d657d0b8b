#include <doctest.h>

#include <torch/torch.h>

#include <filesystem>
#include <fstream>

#include "neounet/checkpoint.hpp"
#include "neounet/error.hpp"
#include "neounet/npz.hpp"

namespace fs = std::filesystem;
using namespace neounet;

namespace {

fs::path tmp_file(const std::string& name) {
  auto p = fs::temp_directory_path() / name;
  fs::remove(p);
  return p;
}

NetworkConfig tiny_network() {
  NetworkConfig cfg;
  cfg.encoder = EncoderConfig::tiny();
  cfg.decoder_channels = {48, 32, 24, 16};
  return cfg;
}

} // namespace

TEST_CASE("npz: save/load round trip across dtypes") {
  torch::manual_seed(0);
  std::map<std::string, torch::Tensor> arrays{
      {"weights", torch::randn({3, 4, 5})},
      {"bias", torch::randn({7}, torch::kFloat64)},
      {"steps", torch::arange(6, torch::kInt64).reshape({2, 3})}};
  const auto path = tmp_file("roundtrip.npz");
  npz::save(path.string(), arrays);
  auto loaded = npz::load(path.string());
  REQUIRE(loaded.size() == 3);
  for (const auto& [name, tensor] : arrays) {
    REQUIRE(loaded.count(name) == 1);
    CHECK(torch::equal(loaded[name], tensor));
  }
}

TEST_CASE("npz: numpy interchange (numpy reads ours, we read numpy's)") {
  const auto ours = tmp_file("ours.npz");
  const auto theirs = tmp_file("theirs.npz");
  npz::save(ours.string(),
            {{"a", torch::arange(12, torch::kFloat32).reshape({3, 4})}});

  const std::string script =
      "import numpy as np, sys\n"
      "d = np.load(sys.argv[1])\n"
      "assert d['a'].shape == (3, 4), d['a'].shape\n"
      "assert d['a'].dtype == np.float32\n"
      "assert abs(float(d['a'].sum()) - 66.0) < 1e-6\n"
      "np.savez_compressed(sys.argv[2], b=np.linspace(0, 1, 10).reshape(2, 5))\n";
  const auto script_path = tmp_file("npz_check.py");
  std::ofstream(script_path) << script;
  const std::string cmd = "python3 " + script_path.string() + " " +
                          ours.string() + " " + theirs.string();
  REQUIRE(std::system(cmd.c_str()) == 0);

  auto loaded = npz::load(theirs.string());
  REQUIRE(loaded.count("b") == 1);
  CHECK(loaded["b"].sizes() == torch::IntArrayRef({2, 5}));
  CHECK(loaded["b"].dtype() == torch::kFloat64);
  CHECK(loaded["b"].sum().item<double>() == doctest::Approx(5.0));
}

TEST_CASE("npz: corrupt input is rejected") {
  const auto path = tmp_file("bad.npz");
  std::ofstream(path, std::ios::binary) << "this is not a zip file at all";
  CHECK_THROWS_AS(npz::load(path.string()), DataError);
}

TEST_CASE("checkpoint: save/load restores every parameter and buffer") {
  torch::manual_seed(10);
  NeoUNet model(tiny_network());
  // dirty the batch-norm stats so buffers are non-trivial
  model->train();
  for (int i = 0; i < 2; ++i) model->forward(torch::randn({2, 3, 64, 64}));

  CheckpointMeta meta;
  meta.epoch = 7;
  meta.best_dice_seg = 0.875;
  meta.seed = 99;
  const auto path = tmp_file("model.ckpt");
  save_checkpoint(path.string(), model, meta);

  auto loaded = load_checkpoint(path.string());
  CHECK(loaded.meta.epoch == 7);
  CHECK(loaded.meta.best_dice_seg == doctest::Approx(0.875));
  CHECK(loaded.meta.seed == 99);

  auto params = model->named_parameters();
  auto restored = loaded.model->named_parameters();
  REQUIRE(params.size() == restored.size());
  for (const auto& p : params) {
    CHECK(torch::equal(p.value(), restored[p.key()]));
  }
  auto buffers = model->named_buffers();
  auto restored_buffers = loaded.model->named_buffers();
  REQUIRE(buffers.size() == restored_buffers.size());
  for (const auto& b : buffers) {
    CHECK(torch::equal(b.value(), restored_buffers[b.key()]));
  }

  // identical eval outputs bit for bit
  model->eval();
  loaded.model->eval();
  torch::NoGradGuard no_grad;
  auto x = torch::randn({1, 3, 64, 64});
  auto a = model->forward(x);
  auto b = loaded.model->forward(x);
  for (size_t i = 0; i < a.size(); ++i) CHECK(torch::equal(a[i], b[i]));
}

TEST_CASE("checkpoint: optimizer momentum rides along") {
  torch::manual_seed(11);
  NeoUNet model(tiny_network());
  torch::optim::SGD sgd(model->parameters(),
                        torch::optim::SGDOptions(0.01).momentum(0.9).nesterov(true));
  auto loss = model->forward(torch::randn({1, 3, 64, 64}))[3].sum();
  sgd.zero_grad();
  loss.backward();
  sgd.step();

  const auto path = tmp_file("optim.ckpt");
  CheckpointMeta meta;
  save_checkpoint(path.string(), model, meta, &sgd);
  auto loaded = load_checkpoint(path.string());
  CHECK(!loaded.optimizer_momentum.empty());

  torch::optim::SGD fresh(loaded.model->parameters(),
                          torch::optim::SGDOptions(0.01).momentum(0.9).nesterov(true));
  restore_optimizer(fresh, loaded.model, loaded.optimizer_momentum);
  auto& state = fresh.state();
  size_t with_momentum = 0;
  for (const auto& p : loaded.model->parameters()) {
    if (state.find(p.unsafeGetTensorImpl()) != state.end()) ++with_momentum;
  }
  CHECK(with_momentum == loaded.optimizer_momentum.size());
}

TEST_CASE("checkpoint: wrong magic and version are rejected") {
  const auto path = tmp_file("junk.ckpt");
  std::ofstream(path, std::ios::binary) << "JUNKJUNKJUNKJUNKJUNK";
  CHECK_THROWS_AS(load_checkpoint(path.string()), DataError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/x.ckpt"), IoError);
}

TEST_CASE("pretrained: name-mapped arrays land in the right encoder slots") {
  torch::manual_seed(12);
  HarDNetEncoder source(EncoderConfig::tiny());
  // export with reference-style names
  std::map<std::string, torch::Tensor> arrays;
  std::map<std::string, std::string> mapping;
  for (const auto& p : source->named_parameters()) {
    const std::string ref_name = "ref." + p.key();
    arrays[ref_name] = p.value().detach().clone();
    mapping[p.key()] = ref_name;
  }
  const auto path = tmp_file("weights.npz");
  npz::save(path.string(), arrays);
  auto reloaded = npz::load(path.string());

  torch::manual_seed(13);  // different init
  HarDNetEncoder target(EncoderConfig::tiny());
  auto report = apply_pretrained(target, reloaded, mapping);
  CHECK(report.loaded.size() == mapping.size());
  CHECK(report.missing.empty());
  CHECK(report.shape_mismatch.empty());
  for (const auto& p : source->named_parameters()) {
    CHECK(torch::equal(p.value(), target->named_parameters()[p.key()]));
  }

  // a wrong-shaped array is reported, not silently loaded
  auto first = mapping.begin();
  reloaded[first->second] = torch::zeros({1, 1, 1, 1});
  auto report2 = apply_pretrained(target, reloaded, mapping);
  CHECK(report2.shape_mismatch.size() == 1);
}

TEST_CASE("pretrained: prefix tables expand over parameters and buffers") {
  torch::manual_seed(14);
  HarDNetEncoder encoder(EncoderConfig::tiny());
  std::map<std::string, std::string> prefixes{
      {"stem1.", "base.0."},
      {"stem2.", "base.1."},
      {"stage2_blocks.0.", "base.3."},
  };
  auto mapping = expand_prefix_mapping(encoder, prefixes);
  CHECK(mapping.at("stem1.conv.weight") == "base.0.conv.weight");
  CHECK(mapping.at("stem2.norm.running_mean") == "base.1.norm.running_mean");
  CHECK(mapping.at("stage2_blocks.0.layers.2.conv.weight") ==
        "base.3.layers.2.conv.weight");
  // unmapped stages are skipped, not mangled
  for (const auto& [ours, theirs] : mapping) {
    CHECK(ours.rfind("stage3", 0) != 0);
  }

  // round trip through an npz written under reference names
  std::map<std::string, torch::Tensor> arrays;
  for (const auto& [ours, theirs] : mapping) {
    auto all = encoder->named_parameters();
    auto buffers = encoder->named_buffers();
    torch::Tensor v =
        all.contains(ours) ? all[ours] : buffers[ours];
    arrays[theirs] = v.detach().clone() + 1.0;
  }
  auto report = apply_pretrained(encoder, arrays, mapping);
  CHECK(report.loaded.size() == mapping.size());
  CHECK(torch::equal(encoder->named_parameters()["stem1.conv.weight"],
                     arrays["base.0.conv.weight"]));
}
