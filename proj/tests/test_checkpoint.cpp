#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pdan/checkpoint.hpp"

#include "oracles.hpp"

using namespace pdan;

namespace {

NetworkConfig small_cfg() {
  NetworkConfig cfg;
  cfg.scale = 2;
  cfg.num_blocks = 1;
  cfg.trunk_channels = 8;
  cfg.growth = GrowthSchedule{4, 8, 4, 2};
  cfg.attention = Attention::kJoint;
  cfg.reduction_ratio = 4;
  return cfg;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("pdan_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("checkpoint round trip reproduces forward bit-exactly", "[checkpoint]") {
  TempDir tmp;
  auto m = instantiate<float>(build_network(small_cfg()));
  init_weights(m, 404);
  Rng rng(405);
  auto img = oracle::random_tensor<float>(Shape{3, 9, 9}, rng, 0.3);
  // run one training-mode pass so BN running stats are nontrivial
  auto warm = forward(m, img, RunMode::kTrain);
  auto before = forward(m, img, RunMode::kInfer);

  save_checkpoint(m, tmp.file("model.ckpt"));
  auto loaded = load_checkpoint(tmp.file("model.ckpt"));
  REQUIRE(loaded.graph.config == m.graph.config);
  for (size_t i = 0; i < m.params.size(); ++i)
    for (long long k = 0; k < m.params[i].numel(); ++k)
      REQUIRE(loaded.params[i][k] == m.params[i][k]);
  for (size_t i = 0; i < m.bn_buffers.size(); ++i) {
    REQUIRE(loaded.bn_buffers[i].update_count == m.bn_buffers[i].update_count);
    for (long long k = 0; k < m.bn_buffers[i].running_var.numel(); ++k) {
      REQUIRE(loaded.bn_buffers[i].running_mean[k] == m.bn_buffers[i].running_mean[k]);
      REQUIRE(loaded.bn_buffers[i].running_var[k] == m.bn_buffers[i].running_var[k]);
    }
  }
  auto after = forward(loaded, img, RunMode::kInfer);
  REQUIRE(after.shape() == before.shape());
  for (long long i = 0; i < after.numel(); ++i) REQUIRE(after[i] == before[i]);
}

TEST_CASE("mismatched scale is an explicit config error", "[checkpoint]") {
  TempDir tmp;
  auto m = instantiate<float>(build_network(small_cfg()));
  save_checkpoint(m, tmp.file("x2.ckpt"));
  NetworkConfig want = small_cfg();
  want.scale = 4;
  CHECK_THROWS_AS(load_checkpoint(tmp.file("x2.ckpt"), &want), ValidationError);
  NetworkConfig same = small_cfg();
  CHECK_NOTHROW(load_checkpoint(tmp.file("x2.ckpt"), &same));
}

TEST_CASE("corruption fails integrity, no partial model", "[checkpoint]") {
  TempDir tmp;
  auto m = instantiate<float>(build_network(small_cfg()));
  init_weights(m, 7);
  const std::string path = tmp.file("model.ckpt");
  save_checkpoint(m, path);

  SECTION("flipped byte in the middle") {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(200);
    char c;
    f.seekg(200);
    f.get(c);
    f.seekp(200);
    f.put(static_cast<char>(c ^ 0x5a));
    f.close();
    CHECK_THROWS_AS(load_checkpoint(path), IoError);
  }
  SECTION("truncated trailing bytes") {
    std::error_code ec;
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 9, ec);
    REQUIRE(!ec);
    CHECK_THROWS_AS(load_checkpoint(path), IoError);
  }
  SECTION("not a checkpoint at all") {
    std::ofstream f(path, std::ios::trunc);
    f << "definitely not a checkpoint";
    f.close();
    CHECK_THROWS_AS(load_checkpoint(path), IoError);
  }
}
