#include <catch2/catch_amalgamated.hpp>

#include "pdan/ops.hpp"
#include "pdan/rng.hpp"

#include "oracles.hpp"

using namespace pdan;

TEST_CASE("relu and sigmoid pointwise values", "[ops]") {
  Tensor<double> x = Tensor<double>::from_data(Shape{4}, {-2.0, 3.5, 0.0, -0.1});
  auto r = relu(x);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 3.5);
  CHECK(r[2] == 0.0);
  auto s = sigmoid(Tensor<double>(Shape{1}, 0.0));
  CHECK(s[0] == 0.5);

  // sigmoid output strictly inside (0,1) wherever that is representable
  auto far = sigmoid(Tensor<double>::from_data(Shape{2}, {30.0, -30.0}));
  CHECK(far[0] < 1.0);
  CHECK(far[0] > 0.0);
  CHECK(far[1] > 0.0);
  CHECK(far[1] < 1.0);
}

TEST_CASE("sigmoid gradient at 0 matches finite difference", "[ops]") {
  Tensor<double> x(Shape{1}, 0.0);
  auto y = sigmoid(x);
  auto g = sigmoid_backward(y, Tensor<double>(Shape{1}, 1.0));
  CHECK(g[0] == Catch::Approx(0.25));
  const double h = 1e-4;
  const double fd = (sigmoid(Tensor<double>(Shape{1}, h))[0] -
                     sigmoid(Tensor<double>(Shape{1}, -h))[0]) /
                    (2 * h);
  CHECK(g[0] == Catch::Approx(fd).epsilon(1e-7));
}

TEST_CASE("batchnorm training normalizes batch statistics", "[ops]") {
  // per-channel mean 5, variance 4
  Tensor<double> x = Tensor<double>::from_data(Shape{1, 2, 2}, {3.0, 7.0, 3.0, 7.0});
  BatchNormState<double> st(1);
  auto y = batchnorm2d(x, st, /*training=*/true);
  double mean = 0, var = 0;
  for (int i = 0; i < 4; ++i) mean += y[i] / 4;
  for (int i = 0; i < 4; ++i) var += (y[i] - mean) * (y[i] - mean) / 4;
  CHECK(mean == Catch::Approx(0.0).margin(1e-12));
  CHECK(var == Catch::Approx(1.0).epsilon(1e-4));  // epsilon correction
}

TEST_CASE("batchnorm gamma/beta scale and shift", "[ops]") {
  Tensor<double> x = Tensor<double>::from_data(Shape{1, 2, 2}, {-1.0, 1.0, -1.0, 1.0});
  BatchNormState<double> st(1);
  st.gamma.fill(2.0);
  st.beta.fill(3.0);
  st.buffers.epsilon = 1e-12;
  auto y = batchnorm2d(x, st, true);
  CHECK(y[0] == Catch::Approx(1.0).epsilon(1e-5));  // 2*(-1)+3
  CHECK(y[1] == Catch::Approx(5.0).epsilon(1e-5));  // 2*(+1)+3
}

TEST_CASE("batchnorm running-stat single-step recurrence", "[ops]") {
  Tensor<double> x = Tensor<double>::from_data(Shape{1, 2, 2}, {3.0, 7.0, 3.0, 7.0});
  BatchNormState<double> st(1);  // init (0,1), momentum 0.1
  batchnorm2d(x, st, true);
  CHECK(st.buffers.running_mean[0] == Catch::Approx(0.5));
  CHECK(st.buffers.running_var[0] == Catch::Approx(1.3));
  CHECK(st.buffers.update_count == 1);
}

TEST_CASE("batchnorm inference before any update is an error", "[ops]") {
  Tensor<double> x(Shape{1, 2, 2}, 1.0);
  BatchNormState<double> st(1);
  CHECK_THROWS_AS(batchnorm2d(x, st, /*training=*/false), ValidationError);
  batchnorm2d(x, st, true);
  CHECK_NOTHROW(batchnorm2d(x, st, false));
}

TEST_CASE("global average pool", "[ops]") {
  Tensor<float> c7(Shape{3, 4, 5}, 7.0f);
  auto y = global_avg_pool(c7);
  REQUIRE(y.shape() == Shape{3, 1, 1});
  for (int c = 0; c < 3; ++c) CHECK(y[c] == 7.0f);
}

TEST_CASE("global max pool picks the max and routes ties to first", "[ops]") {
  Tensor<float> x = Tensor<float>::from_data(Shape{1, 1, 3}, {1.0f, -4.0f, 9.0f});
  std::vector<long long> argmax;
  auto y = global_max_pool(x, &argmax);
  CHECK(y[0] == 9.0f);
  CHECK(argmax[0] == 2);

  Tensor<float> tie = Tensor<float>::from_data(Shape{1, 2, 2}, {5.0f, 5.0f, 5.0f, 5.0f});
  global_max_pool(tie, &argmax);
  CHECK(argmax[0] == 0);  // first maximal index in row-major order
}

TEST_CASE("channel pool stacks per-pixel mean and max", "[ops]") {
  Rng rng(4);
  auto x = oracle::random_tensor<float>(Shape{3, 2, 2}, rng);
  auto y = channel_pool(x);
  REQUIRE(y.shape() == Shape{2, 2, 2});
  // loop oracle
  for (int i = 0; i < 4; ++i) {
    float mean = 0, mx = x[i];
    for (int c = 0; c < 3; ++c) {
      mean += x[c * 4 + i] / 3.0f;
      mx = std::max(mx, x[c * 4 + i]);
    }
    CHECK(y[i] == Catch::Approx(mean));
    CHECK(y[4 + i] == mx);
  }
}

TEST_CASE("concat channel counts", "[ops]") {
  std::vector<Tensor<float>> parts;
  for (int c : {16, 32, 48, 64, 80}) parts.emplace_back(Shape{c, 2, 2}, 1.0f);
  std::vector<const Tensor<float>*> ptrs;
  for (auto& p : parts) ptrs.push_back(&p);
  auto y = concat_channels(ptrs);
  CHECK(y.shape() == Shape{240, 2, 2});

  Tensor<float> mismatched(Shape{4, 3, 2});
  ptrs.push_back(&mismatched);
  CHECK_THROWS_AS(concat_channels(ptrs), ValidationError);
}

TEST_CASE("split undoes concat", "[ops]") {
  Rng rng(8);
  auto a = oracle::random_tensor<float>(Shape{2, 3, 3}, rng);
  auto b = oracle::random_tensor<float>(Shape{5, 3, 3}, rng);
  auto y = concat_channels<float>({&a, &b});
  auto parts = split_channels(y, {a.shape(), b.shape()});
  REQUIRE(parts.size() == 2);
  for (long long i = 0; i < a.numel(); ++i) CHECK(parts[0][i] == a[i]);
  for (long long i = 0; i < b.numel(); ++i) CHECK(parts[1][i] == b[i]);
}

TEST_CASE("mean of identical tensors is the same tensor", "[ops]") {
  Rng rng(6);
  auto x = oracle::random_tensor<float>(Shape{3, 2, 2}, rng);
  auto y = mean_of<float>({&x, &x, &x, &x});
  for (long long i = 0; i < x.numel(); ++i) CHECK(y[i] == Catch::Approx(x[i]));
}

TEST_CASE("mul_broadcast identity and channel weights", "[ops]") {
  Rng rng(10);
  auto x = oracle::random_tensor<float>(Shape{3, 4, 4}, rng);
  Tensor<float> ones(Shape{3, 1, 1}, 1.0f);
  auto y = mul_broadcast(x, ones);
  for (long long i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);

  Tensor<float> cw = Tensor<float>::from_data(Shape{3, 1, 1}, {0.5f, 2.0f, 0.0f});
  auto z = mul_broadcast(x, cw);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 16; ++i) CHECK(z[c * 16 + i] == Catch::Approx(x[c * 16 + i] * cw[c]));

  // spatial weights (1,H,W)
  auto sw = oracle::random_tensor<float>(Shape{1, 4, 4}, rng);
  auto s = mul_broadcast(x, sw);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 16; ++i) CHECK(s[c * 16 + i] == Catch::Approx(x[c * 16 + i] * sw[i]));

  CHECK_THROWS_AS(mul_broadcast(x, Tensor<float>(Shape{2, 1, 1})), ValidationError);
}

TEST_CASE("l1 loss values and subgradient", "[ops]") {
  Rng rng(13);
  auto t = oracle::random_tensor<double>(Shape{2, 3, 3}, rng);
  CHECK(l1_loss(t, t) == 0.0);

  Tensor<double> shifted(t.shape());
  for (long long i = 0; i < t.numel(); ++i) shifted[i] = t[i] + 0.5;
  CHECK(l1_loss(shifted, t) == Catch::Approx(0.5));

  auto g = l1_loss_backward(shifted, t, 1.0);
  for (long long i = 0; i < g.numel(); ++i) CHECK(g[i] == Catch::Approx(1.0 / t.numel()));
  auto gz = l1_loss_backward(t, t, 1.0);
  for (long long i = 0; i < gz.numel(); ++i) CHECK(gz[i] == 0.0);  // subgradient at 0

  // matches finite difference away from ties
  const long long k = 3;
  const double h = 1e-6;
  auto p = shifted;
  p[k] += h;
  auto m = shifted;
  m[k] -= h;
  CHECK(g[k] == Catch::Approx((l1_loss(p, t) - l1_loss(m, t)) / (2 * h)).epsilon(1e-6));

  CHECK_THROWS_AS(l1_loss(t, Tensor<double>(Shape{3, 2, 3})), ValidationError);
}
