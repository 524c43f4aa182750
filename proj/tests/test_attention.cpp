#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "pdan/graph.hpp"
#include "pdan/model.hpp"

#include "oracles.hpp"

using namespace pdan;

namespace {

Model<double> make_attention(int width, int r, Attention kind, std::uint64_t seed) {
  auto m = instantiate<double>(build_attention_graph(width, r, kind));
  init_weights(m, seed);
  return m;
}

// ---- scalar transcription of the four joint-attention branches ------------

struct Dims {
  int d0, d1, d2;
};

// spatial gate in an arbitrary frame: channel pool over axis0, 3x3 dilation-3
// bias-free conv, batchnorm (batch statistics), sigmoid, scale.
std::vector<double> gate_transcription(const std::vector<double>& x, Dims d,
                                       const Tensor<double>& conv_w, double gamma, double beta,
                                       double eps) {
  const int D0 = d.d0, D1 = d.d1, D2 = d.d2;
  auto at = [&](int a, int b, int c) { return x[(a * D1 + b) * D2 + c]; };
  std::vector<double> pool(2 * D1 * D2);
  for (int i = 0; i < D1; ++i)
    for (int j = 0; j < D2; ++j) {
      double sum = 0, mx = at(0, i, j);
      for (int a = 0; a < D0; ++a) {
        sum += at(a, i, j);
        mx = std::max(mx, at(a, i, j));
      }
      pool[(0 * D1 + i) * D2 + j] = sum / D0;
      pool[(1 * D1 + i) * D2 + j] = mx;
    }
  std::vector<double> conv(D1 * D2, 0.0);
  const int p = 3, dil = 3;
  for (int oh = 0; oh < D1; ++oh)
    for (int ow = 0; ow < D2; ++ow) {
      double acc = 0;
      for (int pc = 0; pc < 2; ++pc)
        for (int kh = 0; kh < 3; ++kh)
          for (int kw = 0; kw < 3; ++kw) {
            const int ih = oh - p + kh * dil, iw = ow - p + kw * dil;
            if (ih < 0 || ih >= D1 || iw < 0 || iw >= D2) continue;
            acc += pool[(pc * D1 + ih) * D2 + iw] * conv_w[(pc * 3 + kh) * 3 + kw];
          }
      conv[oh * D2 + ow] = acc;
    }
  double mu = 0;
  for (double v : conv) mu += v;
  mu /= conv.size();
  double var = 0;
  for (double v : conv) var += (v - mu) * (v - mu);
  var /= conv.size();
  const double invstd = 1.0 / std::sqrt(var + eps);
  std::vector<double> out(x.size());
  for (int a = 0; a < D0; ++a)
    for (int i = 0; i < D1; ++i)
      for (int j = 0; j < D2; ++j) {
        const double bn = gamma * (conv[i * D2 + j] - mu) * invstd + beta;
        const double sig = 1.0 / (1.0 + std::exp(-bn));
        out[(a * D1 + i) * D2 + j] = at(a, i, j) * sig;
      }
  return out;
}

std::vector<double> joint_attention_transcription(const Model<double>& m,
                                                  const Tensor<double>& x, int C, int H, int W,
                                                  double eps) {
  auto flat = [&](int c, int h, int w) { return x[(c * H + h) * W + w]; };

  // branch 1: channel (gap -> fc1 -> relu -> fc2 -> sigmoid -> scale)
  const Tensor<double>& w1 = m.param("att.ja.ch.fc1.w");
  const Tensor<double>& w2 = m.param("att.ja.ch.fc2.w");
  const int squeezed = w1.extent(0);
  std::vector<double> g(C, 0.0);
  for (int c = 0; c < C; ++c) {
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w) g[c] += flat(c, h, w);
    g[c] /= H * W;
  }
  std::vector<double> q(squeezed, 0.0);
  for (int s = 0; s < squeezed; ++s) {
    for (int c = 0; c < C; ++c) q[s] += w1[s * C + c] * g[c];
    q[s] = std::max(q[s], 0.0);
  }
  std::vector<double> branch1(x.numel());
  for (int c = 0; c < C; ++c) {
    double a = 0;
    for (int s = 0; s < squeezed; ++s) a += w2[c * squeezed + s] * q[s];
    const double sig = 1.0 / (1.0 + std::exp(-a));
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w) branch1[(c * H + h) * W + w] = flat(c, h, w) * sig;
  }

  // branch 2: spatial in the native frame
  std::vector<double> native(x.data(), x.data() + x.numel());
  auto branch2 = gate_transcription(native, Dims{C, H, W}, m.param("att.ja.sp.conv.w"),
                                    m.param("att.ja.sp.bn.gamma")[0],
                                    m.param("att.ja.sp.bn.beta")[0], eps);

  // branch 3: swap channel axis with H -> (H,C,W)
  std::vector<double> hc(x.numel());
  for (int c = 0; c < C; ++c)
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w) hc[(h * C + c) * W + w] = flat(c, h, w);
  auto hc_scaled = gate_transcription(hc, Dims{H, C, W}, m.param("att.ja.hc.conv.w"),
                                      m.param("att.ja.hc.bn.gamma")[0],
                                      m.param("att.ja.hc.bn.beta")[0], eps);
  std::vector<double> branch3(x.numel());
  for (int c = 0; c < C; ++c)
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w) branch3[(c * H + h) * W + w] = hc_scaled[(h * C + c) * W + w];

  // branch 4: swap channel axis with W -> (W,H,C)
  std::vector<double> cw(x.numel());
  for (int c = 0; c < C; ++c)
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w) cw[(w * H + h) * C + c] = flat(c, h, w);
  auto cw_scaled = gate_transcription(cw, Dims{W, H, C}, m.param("att.ja.cw.conv.w"),
                                      m.param("att.ja.cw.bn.gamma")[0],
                                      m.param("att.ja.cw.bn.beta")[0], eps);
  std::vector<double> branch4(x.numel());
  for (int c = 0; c < C; ++c)
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w) branch4[(c * H + h) * W + w] = cw_scaled[(w * H + h) * C + c];

  std::vector<double> out(x.numel());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = (branch1[i] + branch2[i] + branch3[i] + branch4[i]) / 4.0;
  return out;
}

}  // namespace

TEST_CASE("joint attention matches a step-by-step scalar transcription", "[attention]") {
  auto m = make_attention(2, 2, Attention::kJoint, 99);
  Rng rng(100);
  auto x = oracle::random_tensor<double>(Shape{2, 2, 2}, rng);
  auto got = forward(m, x, RunMode::kTrain);
  auto want = joint_attention_transcription(m, x, 2, 2, 2, m.graph.config.bn_epsilon);
  REQUIRE(got.numel() == static_cast<long long>(want.size()));
  for (long long i = 0; i < got.numel(); ++i) CHECK(got[i] == Catch::Approx(want[i]).margin(1e-12));
}

TEST_CASE("joint attention transcription on a non-cubic tensor", "[attention]") {
  auto m = make_attention(8, 4, Attention::kJoint, 101);
  Rng rng(102);
  auto x = oracle::random_tensor<double>(Shape{8, 6, 4}, rng);
  auto got = forward(m, x, RunMode::kTrain);
  REQUIRE(got.shape() == x.shape());
  auto want = joint_attention_transcription(m, x, 8, 6, 4, m.graph.config.bn_epsilon);
  for (long long i = 0; i < got.numel(); ++i) CHECK(got[i] == Catch::Approx(want[i]).margin(1e-10));
}

TEST_CASE("joint attention preserves shape and bounds amplitudes", "[attention]") {
  auto m = make_attention(8, 4, Attention::kJoint, 55);
  Rng rng(56);
  auto x = oracle::random_tensor<double>(Shape{8, 5, 7}, rng);
  std::vector<Tensor<double>> nodes;
  auto y = forward(m, x, RunMode::kTrain, &nodes);
  REQUIRE(y.shape() == x.shape());

  // every sigmoid-produced weight tensor lies strictly in (0,1)
  int sigmoid_nodes = 0;
  for (size_t i = 0; i < m.graph.nodes.size(); ++i) {
    if (m.graph.nodes[i].kind != OpKind::kSigmoid) continue;
    ++sigmoid_nodes;
    for (long long k = 0; k < nodes[i].numel(); ++k) {
      REQUIRE(nodes[i][k] > 0.0);
      REQUIRE(nodes[i][k] < 1.0);
    }
  }
  CHECK(sigmoid_nodes == 4);

  // hence each refined branch is elementwise dominated by the input
  for (size_t i = 0; i < m.graph.nodes.size(); ++i) {
    if (m.graph.nodes[i].kind != OpKind::kMulBroadcast) continue;
    const auto& scaled = nodes[i];
    const auto& source = nodes[static_cast<size_t>(m.graph.nodes[i].args[0])];
    for (long long k = 0; k < scaled.numel(); ++k)
      REQUIRE(std::abs(scaled[k]) <= std::abs(source[k]));
  }
}

TEST_CASE("zero input stays zero through joint attention", "[attention]") {
  auto m = make_attention(4, 2, Attention::kJoint, 60);
  Tensor<double> x(Shape{4, 3, 3}, 0.0);
  auto y = forward(m, x, RunMode::kTrain);
  for (long long i = 0; i < y.numel(); ++i) CHECK(y[i] == 0.0);
}

TEST_CASE("zero pre-sigmoid parameters give exactly x/2", "[attention]") {
  auto m = instantiate<double>(build_attention_graph(6, 3, Attention::kJoint));
  // conv/fc weights are already zero; bn gamma=1 on a zero map still yields 0
  Rng rng(61);
  auto x = oracle::random_tensor<double>(Shape{6, 4, 4}, rng);
  auto y = forward(m, x, RunMode::kTrain);
  for (long long i = 0; i < y.numel(); ++i) REQUIRE(y[i] == x[i] * 0.5);
}

TEST_CASE("se and cbam ablation variants", "[attention]") {
  Rng rng(70);
  auto x = oracle::random_tensor<double>(Shape{8, 5, 5}, rng);

  auto se = make_attention(8, 4, Attention::kSe, 71);
  auto yse = forward(se, x, RunMode::kTrain);
  REQUIRE(yse.shape() == x.shape());

  auto cbam = make_attention(8, 4, Attention::kCbam, 72);
  auto ycbam = forward(cbam, x, RunMode::kTrain);
  REQUIRE(ycbam.shape() == x.shape());

  // zero-parameter forms scale by 0.5 (SE) and 0.25 (CBAM: two gates in series)
  auto se0 = instantiate<double>(build_attention_graph(8, 4, Attention::kSe));
  auto y0 = forward(se0, x, RunMode::kTrain);
  for (long long i = 0; i < x.numel(); ++i) REQUIRE(y0[i] == x[i] * 0.5);
  auto cbam0 = instantiate<double>(build_attention_graph(8, 4, Attention::kCbam));
  auto y1 = forward(cbam0, x, RunMode::kTrain);
  for (long long i = 0; i < x.numel(); ++i) REQUIRE(y1[i] == Catch::Approx(x[i] * 0.25));

  // CBAM channel MLP weights are shared between the gap and gmp paths
  long long cbam_ch = 0;
  for (size_t i = 0; i < cbam.graph.params.size(); ++i)
    if (cbam.graph.params[i].name.rfind("att.cbam.ch", 0) == 0) cbam_ch += cbam.params[i].numel();
  CHECK(cbam_ch == 2 * 8 * 2);  // fc1 + fc2 only, no duplicates
}

TEST_CASE("attention graph rejects non-divisible widths", "[attention]") {
  CHECK_THROWS_AS(build_attention_graph(10, 4, Attention::kJoint), ValidationError);
}
