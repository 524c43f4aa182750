#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <set>

#include "pdan/model.hpp"
#include "pdan/tape.hpp"

#include "oracles.hpp"

using namespace pdan;

namespace {

NetworkConfig config_for(int scale, Attention att) {
  NetworkConfig cfg;
  cfg.scale = scale;
  cfg.attention = att;
  return cfg;
}

// Tiny x2 network used for behavioural tests: trunk 8, growth (4,8,4,2), r=4.
NetworkConfig tiny_config() {
  NetworkConfig cfg;
  cfg.scale = 2;
  cfg.num_blocks = 1;
  cfg.trunk_channels = 8;
  cfg.growth = GrowthSchedule{4, 8, 4, 2};
  cfg.attention = Attention::kJoint;
  cfg.reduction_ratio = 4;
  return cfg;
}

long long params_with_prefix(const Model<float>& m, const std::string& prefix, bool biases) {
  long long n = 0;
  for (size_t i = 0; i < m.graph.params.size(); ++i) {
    const auto& def = m.graph.params[i];
    if (def.name.rfind(prefix, 0) != 0) continue;
    const bool is_bias = def.name.size() > 2 && def.name.substr(def.name.size() - 2) == ".b";
    const bool is_beta = def.name.size() > 5 && def.name.substr(def.name.size() - 5) == ".beta";
    if ((is_bias || is_beta) == biases) n += m.params[i].numel();
  }
  return n;
}

}  // namespace

TEST_CASE("per-block parameters excluding attention", "[model]") {
  auto m = instantiate<float>(build_network(config_for(4, Attention::kNone)));
  const long long w = params_with_prefix(m, "block01.", false);
  const long long b = params_with_prefix(m, "block01.", true);
  CHECK(w == 70400);
  CHECK(b == 528);
  CHECK(w + b == 70928);
}

TEST_CASE("joint attention adds 7260 parameters per block", "[model]") {
  auto none = instantiate<float>(build_network(config_for(4, Attention::kNone)));
  auto joint = instantiate<float>(build_network(config_for(4, Attention::kJoint)));
  CHECK(joint.parameter_count() - none.parameter_count() == 16 * 7260);
  // SE-style channel arm 2*240*15, three conv+bn arms 20 each
  const long long arm = params_with_prefix(joint, "block01.ja.ch.", false);
  CHECK(arm == 7200);
  const long long sp = params_with_prefix(joint, "block01.ja.sp.", false) +
                       params_with_prefix(joint, "block01.ja.sp.", true);
  CHECK(sp == 20);
}

TEST_CASE("network totals reproduce the published parameter counts", "[model]") {
  // x4 ablation row: none/se/cbam/joint
  CHECK(instantiate<float>(build_network(config_for(4, Attention::kNone))).parameter_count() ==
        1470723);
  CHECK(instantiate<float>(build_network(config_for(4, Attention::kSe))).parameter_count() ==
        1585923);
  CHECK(instantiate<float>(build_network(config_for(4, Attention::kCbam))).parameter_count() ==
        1587523);
  CHECK(instantiate<float>(build_network(config_for(4, Attention::kJoint))).parameter_count() ==
        1586883);
  // scale rows (joint attention)
  CHECK(instantiate<float>(build_network(config_for(2, Attention::kJoint))).parameter_count() ==
        1439171);
  CHECK(instantiate<float>(build_network(config_for(3, Attention::kJoint))).parameter_count() ==
        1623811);
}

TEST_CASE("forward shape law at scale 4", "[model]") {
  NetworkConfig cfg = config_for(4, Attention::kNone);
  cfg.num_blocks = 1;
  auto m = instantiate<float>(build_network(cfg));
  init_weights(m, 1);
  Rng rng(2);
  auto img = oracle::random_tensor<float>(Shape{3, 24, 24}, rng, 0.25);
  for (long long i = 0; i < img.numel(); ++i) img[i] = std::abs(img[i]);
  auto out = forward(m, img);
  CHECK(out.shape() == Shape{3, 96, 96});
}

TEST_CASE("zero weights and biases give the zero image", "[model]") {
  auto cfg = tiny_config();
  auto m = instantiate<float>(build_network(cfg));  // conv weights all zero
  Tensor<float> img(Shape{3, 8, 8}, 0.5f);
  auto out = forward(m, img, RunMode::kTrain);
  for (long long i = 0; i < out.numel(); ++i) CHECK(out[i] == 0.0f);
}

TEST_CASE("identical calls are bit identical", "[model]") {
  auto m = instantiate<float>(build_network(tiny_config()));
  init_weights(m, 9);
  Rng rng(10);
  auto img = oracle::random_tensor<float>(Shape{3, 10, 10}, rng, 0.3);
  auto a = forward(m, img, RunMode::kTrain);
  auto b = forward(m, img, RunMode::kTrain);
  REQUIRE(a.shape() == b.shape());
  for (long long i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);
}

TEST_CASE("zeroed fusion convs make the feature extractor the identity", "[model]") {
  // with every block's fusion conv at zero, blocks telescope away; a D=3 and
  // a D=1 network with identical head/tail weights must agree bit-exactly
  auto deep_cfg = tiny_config();
  deep_cfg.num_blocks = 3;
  auto shallow_cfg = tiny_config();
  shallow_cfg.num_blocks = 1;
  auto deep = instantiate<float>(build_network(deep_cfg));
  auto shallow = instantiate<float>(build_network(shallow_cfg));
  init_weights(deep, 5);
  init_weights(shallow, 6);
  for (size_t i = 0; i < deep.graph.params.size(); ++i) {
    const auto& name = deep.graph.params[i].name;
    if (name.rfind("block", 0) == 0) {
      if (name.find(".fuse.") != std::string::npos) deep.params[i].fill(0.0f);
    } else {
      shallow.param(name) = deep.params[i];  // share head/body_end/up/tail
    }
  }
  for (size_t i = 0; i < shallow.graph.params.size(); ++i) {
    const auto& name = shallow.graph.params[i].name;
    if (name.rfind("block", 0) == 0 && name.find(".fuse.") != std::string::npos)
      shallow.params[i].fill(0.0f);
  }
  Rng rng(11);
  auto img = oracle::random_tensor<float>(Shape{3, 9, 9}, rng, 0.3);
  auto a = forward(deep, img, RunMode::kTrain);
  auto b = forward(shallow, img, RunMode::kTrain);
  REQUIRE(a.shape() == b.shape());
  for (long long i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);
}

TEST_CASE("every parameter is reachable from the loss", "[model]") {
  // a dead relu can legitimately zero one arm's gradient for one init, so
  // check reachability as a union over two independent seeds
  std::vector<double> norms;
  for (std::uint64_t seed : {31ull, 47ull}) {
    auto m = instantiate<double>(build_network(tiny_config()));
    init_weights(m, seed);
    Rng rng(seed + 1);
    Tensor<double> lr(Shape{3, 6, 6});
    for (long long i = 0; i < lr.numel(); ++i) lr[i] = rng.uniform();
    Tensor<double> hr(Shape{3, 12, 12});
    for (long long i = 0; i < hr.numel(); ++i) hr[i] = rng.uniform();

    Tape<double> tape;
    const int input = tape.leaf(lr, false);
    std::vector<int> param_ids;
    const int out = forward_on_tape(m, tape, input, RunMode::kTrain, &param_ids);
    const int loss = tape.l1_loss(out, tape.leaf(hr, false));
    tape.backward(loss);
    if (norms.empty()) norms.assign(param_ids.size(), 0.0);
    for (size_t i = 0; i < param_ids.size(); ++i) {
      const Tensor<double>& g = tape.grad(param_ids[i]);
      REQUIRE(g.shape() == m.params[i].shape());
      for (long long k = 0; k < g.numel(); ++k) norms[i] += g[k] * g[k];
    }
  }
  auto m = instantiate<double>(build_network(tiny_config()));
  for (size_t i = 0; i < norms.size(); ++i) {
    INFO("parameter " << m.graph.params[i].name);
    CHECK(norms[i] > 0.0);
  }
}

TEST_CASE("init_weights is reproducible and seed-sensitive", "[model]") {
  auto m1 = instantiate<float>(build_network(tiny_config()));
  auto m2 = instantiate<float>(build_network(tiny_config()));
  init_weights(m1, 123);
  init_weights(m2, 123);
  for (size_t i = 0; i < m1.params.size(); ++i)
    for (long long k = 0; k < m1.params[i].numel(); ++k)
      REQUIRE(m1.params[i][k] == m2.params[i][k]);

  init_weights(m2, 124);
  double digest1 = 0, digest2 = 0;
  for (size_t i = 0; i < m1.params.size(); ++i)
    for (long long k = 0; k < m1.params[i].numel(); ++k) {
      digest1 += m1.params[i][k];
      digest2 += m2.params[i][k];
    }
  CHECK(digest1 != digest2);
}

TEST_CASE("post-init forward is finite with sane output spread", "[model]") {
  auto m = instantiate<float>(build_network(tiny_config()));
  init_weights(m, 77);
  Rng rng(78);
  Tensor<float> img(Shape{3, 12, 12});
  for (long long i = 0; i < img.numel(); ++i) img[i] = static_cast<float>(rng.uniform());
  auto out = forward(m, img, RunMode::kTrain);  // finiteness checked per node
  double mean = 0;
  for (long long i = 0; i < out.numel(); ++i) mean += out[i];
  mean /= static_cast<double>(out.numel());
  double var = 0;
  for (long long i = 0; i < out.numel(); ++i) var += (out[i] - mean) * (out[i] - mean);
  const double std = std::sqrt(var / static_cast<double>(out.numel()));
  CHECK(std > 1e-6);
  CHECK(std < 1e3);
}
