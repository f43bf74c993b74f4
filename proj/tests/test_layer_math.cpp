#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "cxr/nn/layers.hpp"
#include "cxr/nn/ops.hpp"
#include "cxr/nn/optim.hpp"
#include "oracles.hpp"

using cxr::nn::Activation;
using cxr::nn::Tensor;
using cxr::nn::Window;

namespace {

void expect_close(const Tensor<double>& a, const Tensor<double>& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "index " << i;
}

}  // namespace

TEST(ConvForward, ZeroInputGivesZeroOutput) {
  const Tensor<double> x({1, 3, 3});
  const auto w = oracle::random_tensor({1, 1, 3, 3}, 1);
  const auto y = cxr::nn::conv_forward(x, w, Tensor<double>({1}), 1, Activation::identity);
  ASSERT_EQ(y.shape(), (cxr::nn::Shape{1, 1, 1}));
  EXPECT_EQ(y[0], 0.0);
}

TEST(ConvForward, CenterDeltaPicksCenterWeight) {
  Tensor<double> x({1, 3, 3});
  x[4] = 1.0;
  const auto w = oracle::random_tensor({1, 1, 3, 3}, 2);
  const auto y = cxr::nn::conv_forward(x, w, Tensor<double>({1}), 1, Activation::identity);
  EXPECT_EQ(y[0], w.at(0, 0, 1, 1));
}

TEST(ConvForward, MatchesNestedLoopOracle) {
  const auto x = oracle::random_tensor({2, 5, 5}, 3);
  const auto w = oracle::random_tensor({2, 2, 3, 3}, 4);
  const Tensor<double> b({2}, std::vector<double>{0.25, -0.5});
  const auto y = cxr::nn::conv_forward(x, w, b, 1, Activation::identity);
  const auto ref = oracle::conv_nested(x.reshaped({1, 2, 5, 5}), w, {0.25, -0.5}, 1, 1, 0, 0);
  expect_close(y.reshaped(ref.shape()), ref, 1e-12);
}

TEST(ConvForward, StrideFiveByFiveAndReluMatchOracle) {
  const auto x = oracle::random_tensor({2, 3, 11, 11}, 5);
  const auto w = oracle::random_tensor({4, 3, 5, 5}, 6);
  const Tensor<double> b({4}, std::vector<double>{0.1, -0.2, 0.3, 0.0});
  const auto y = cxr::nn::conv_forward(x, w, b, 2, Activation::relu);
  auto ref = oracle::conv_nested(x, w, {0.1, -0.2, 0.3, 0.0}, 2, 2, 0, 0);
  for (auto& v : ref.values()) v = std::max(v, 0.0);
  expect_close(y, ref, 1e-12);
}

TEST(ConvForward, LinearInInput) {
  const auto x = oracle::random_tensor({2, 6, 6}, 7);
  const auto w = oracle::random_tensor({3, 2, 3, 3}, 8);
  const Tensor<double> zero({3});
  const double alpha = -2.75;
  Tensor<double> scaled = x;
  scaled *= alpha;
  auto expected = cxr::nn::conv_forward(x, w, zero, 1, Activation::identity);
  expected *= alpha;
  expect_close(cxr::nn::conv_forward(scaled, w, zero, 1, Activation::identity), expected, 1e-9);
}

TEST(ConvForward, RejectsChannelMismatchAndBadKernels) {
  const auto x = oracle::random_tensor({2, 5, 5}, 9);
  EXPECT_THROW(cxr::nn::conv_forward(x, oracle::random_tensor({1, 3, 3, 3}, 1), Tensor<double>({1}),
                                     1, Activation::identity),
               cxr::ShapeError);
  EXPECT_THROW(cxr::nn::conv_forward(x, oracle::random_tensor({1, 2, 4, 4}, 1), Tensor<double>({1}),
                                     1, Activation::identity),
               cxr::ShapeError);
  EXPECT_THROW(cxr::nn::conv_forward(oracle::random_tensor({2, 2, 2}, 1),
                                     oracle::random_tensor({1, 2, 3, 3}, 1), Tensor<double>({1}), 1,
                                     Activation::identity),
               cxr::ShapeError);
}

TEST(Conv2d, PaddedRectangularStridedMatchesOracle) {
  const auto x = oracle::random_tensor({2, 3, 9, 8}, 10);
  const auto w = oracle::random_tensor({5, 3, 1, 7}, 11);
  const Tensor<double> bias({5}, std::vector<double>{1, 2, 3, 4, 5});
  const Window win{1, 7, 2, 1, 0, 3};
  const auto y = cxr::nn::conv2d(x, w, bias, win);
  expect_close(y, oracle::conv_nested(x, w, {1, 2, 3, 4, 5}, 2, 1, 0, 3), 1e-12);
  // 1x1 path skips the im2col buffer
  const auto w1 = oracle::random_tensor({4, 3, 1, 1}, 12);
  expect_close(cxr::nn::conv2d(x, w1, Tensor<double>(), Window::square(1)),
               oracle::conv_nested(x, w1, {}, 1, 1, 0, 0), 1e-12);
}

TEST(Relu, SignCasesAndIdempotence) {
  const Tensor<double> x({3}, std::vector<double>{-1.0, 0.0, 2.0});
  const auto y = cxr::nn::relu(x);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 0.0);
  EXPECT_EQ(y[2], 2.0);

  const auto neg = oracle::random_tensor({4, 4}, 13, -5.0, -0.1);
  const auto cleared = cxr::nn::relu(neg);
  for (double v : cleared.values()) EXPECT_EQ(v, 0.0);

  const auto r = oracle::random_tensor({64}, 14, -3.0, 3.0);
  const auto once = cxr::nn::relu(r);
  expect_close(cxr::nn::relu(once), once, 0.0);
}

TEST(Softmax, SymmetricAndConstantInputs) {
  const std::vector<double> zero{0.0, 0.0};
  const auto p = cxr::nn::softmax<double>(zero);
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
  for (double c : {-40.0, 0.0, 3.5, 700.0}) {
    const std::vector<double> x{c, c, c};
    for (double v : cxr::nn::softmax<double>(x)) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  }
}

TEST(Softmax, LargeScoresDoNotOverflow) {
  const std::vector<double> x{1000.0, 0.0};
  const auto p = cxr::nn::softmax<double>(x);
  // extended-precision oracle: p1 = 1 / (1 + e^1000), computed in log space
  const long double tail = std::exp(-1000.0L);
  const long double p0 = 1.0L / (1.0L + tail);
  const long double p1 = tail / (1.0L + tail);
  EXPECT_TRUE(std::isfinite(p[0]) && std::isfinite(p[1]));
  EXPECT_NEAR(p[0], static_cast<double>(p0), 1e-15);
  EXPECT_NEAR(p[1], static_cast<double>(p1), 1e-300);
  EXPECT_EQ(p[0], 1.0);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    cxr::Rng rng(seed);
    const int m = 2 + static_cast<int>(rng.below(6));
    std::vector<double> x(static_cast<std::size_t>(m));
    for (auto& v : x) v = rng.uniform(-30.0, 30.0);
    const double c = rng.uniform(-100.0, 100.0);
    std::vector<double> shifted = x;
    for (auto& v : shifted) v += c;
    const auto p = cxr::nn::softmax<double>(x);
    const auto q = cxr::nn::softmax<double>(shifted);
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      sum += p[i];
      EXPECT_GE(p[i], 0.0);
      EXPECT_LE(p[i], 1.0);
      EXPECT_NEAR(p[i], q[i], 1e-9);
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(MaxPool, ExamplesAndOracle) {
  const Tensor<double> x({1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  const auto y = cxr::nn::max_pool(x, 2, 2);
  ASSERT_EQ(y.size(), 1u);
  EXPECT_EQ(y[0], 4.0);

  const Tensor<double> flat({2, 6, 6}, 1.5);
  const auto pooled = cxr::nn::max_pool(flat, 2, 2);
  for (double v : pooled.values()) EXPECT_EQ(v, 1.5);

  const auto r = oracle::random_tensor({2, 3, 6, 6}, 15);
  expect_close(cxr::nn::max_pool(r, 2, 2), oracle::max_pool_nested(r, 2, 2), 1e-12);
  expect_close(cxr::nn::max_pool(r, 3, 1), oracle::max_pool_nested(r, 3, 1), 1e-12);
  EXPECT_THROW(cxr::nn::max_pool(r, 7, 1), cxr::ShapeError);
}

TEST(GlobalAvgPool, ExamplesAndOracle) {
  const Tensor<double> ones({1, 4, 4}, 1.0);
  EXPECT_EQ(cxr::nn::global_avg_pool(ones)[0], 1.0);

  const Tensor<double> ramp({1, 2, 2}, std::vector<double>{0, 1, 2, 3});
  EXPECT_EQ(cxr::nn::global_avg_pool(ramp)[0], 1.5);

  const auto r = oracle::random_tensor({5, 7, 3}, 16);
  const auto got = cxr::nn::global_avg_pool(r);
  const auto ref = oracle::channel_means(r);
  ASSERT_EQ(got.size(), ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-12);
}

// ---- layer backward passes against central differences ----

namespace {

/// Loss = sum(y * probe) for a fixed random probe, so dL/dy = probe.
double probe_loss(cxr::nn::Layer<double>& layer, const Tensor<double>& x, const Tensor<double>& probe) {
  const auto y = layer.forward(x, cxr::nn::Mode::train);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * probe[i];
  return s;
}

void check_layer_gradients(cxr::nn::Layer<double>& layer, Tensor<double> x, std::uint64_t seed,
                           double tol = 1e-6) {
  const auto y = layer.forward(x, cxr::nn::Mode::train);
  const auto probe = oracle::random_tensor(y.shape(), seed);
  std::vector<cxr::nn::ParamRef<double>> params;
  layer.collect("", params);
  for (auto& p : params)
    if (p.trainable()) p.grad->fill(0.0);
  layer.forward(x, cxr::nn::Mode::train);
  const auto grad_in = layer.backward(probe);

  auto loss = [&] { return probe_loss(layer, x, probe); };
  for (std::size_t i = 0; i < x.size(); i += std::max<std::size_t>(1, x.size() / 40)) {
    const double fd = oracle::central_difference(x, i, loss);
    EXPECT_LT(oracle::relative_error(grad_in[i], fd, 1e-6), tol) << "input " << i;
  }
  for (auto& p : params) {
    if (!p.trainable()) continue;
    for (std::size_t i = 0; i < p.value->size(); i += std::max<std::size_t>(1, p.value->size() / 20)) {
      const double fd = oracle::central_difference(*p.value, i, loss);
      EXPECT_LT(oracle::relative_error((*p.grad)[i], fd, 1e-6), tol) << p.name << "[" << i << "]";
    }
  }
}

}  // namespace

TEST(LayerGradients, Conv2dPaddedStrided) {
  cxr::Rng rng(21);
  cxr::nn::Conv2d<double> conv(3, 4, Window{3, 2, 2, 1, 1, 1}, true, rng);
  check_layer_gradients(conv, oracle::random_tensor({2, 3, 7, 6}, 22), 23);
}

TEST(LayerGradients, BatchNormTrainMode) {
  cxr::nn::BatchNorm2d<double> bn(3);
  std::vector<cxr::nn::ParamRef<double>> params;
  bn.collect("", params);
  cxr::Rng rng(24);
  for (auto& v : params[0].value->values()) v = rng.uniform(0.5, 1.5);
  for (auto& v : params[1].value->values()) v = rng.uniform(-0.5, 0.5);
  // normalisation subtracts nearly equal sums, so the difference quotient is noisier
  check_layer_gradients(bn, oracle::random_tensor({3, 3, 4, 4}, 25), 26, 1e-5);
}

TEST(LayerGradients, PoolingDenseAndGap) {
  cxr::nn::AvgPool2d<double> avg_pad(Window::square(3, 1, 1), true);
  check_layer_gradients(avg_pad, oracle::random_tensor({2, 2, 5, 5}, 27), 28);
  cxr::nn::AvgPool2d<double> avg_nopad(Window::square(3, 2, 1), false);
  check_layer_gradients(avg_nopad, oracle::random_tensor({2, 2, 6, 6}, 29), 30);
  cxr::nn::MaxPool2d<double> maxp(Window::square(3, 2, 1));
  check_layer_gradients(maxp, oracle::random_tensor({2, 2, 6, 6}, 31), 32);
  cxr::nn::GlobalAvgPool<double> gap;
  check_layer_gradients(gap, oracle::random_tensor({2, 3, 4, 5}, 33), 34);
  cxr::Rng rng(35);
  cxr::nn::Dense<double> dense(6, 3, rng);
  check_layer_gradients(dense, oracle::random_tensor({4, 6}, 36), 37);
}

TEST(LayerGradients, ConcatAndScaledResidual) {
  cxr::Rng rng(38);
  auto branches = std::make_unique<cxr::nn::Concat<double>>();
  branches->add("a", std::make_unique<cxr::nn::Conv2d<double>>(2, 3, Window::square(1), false, rng));
  branches->add("b", std::make_unique<cxr::nn::Conv2d<double>>(2, 2, Window::square(3, 1, 1), true, rng));
  auto main = std::make_unique<cxr::nn::Sequential<double>>();
  main->add("", std::move(branches));
  main->emplace<cxr::nn::Conv2d<double>>("proj", 5, 2, Window::square(1), true, rng);
  cxr::nn::Residual<double> block(std::move(main), "", nullptr, 0.17, true);
  check_layer_gradients(block, oracle::random_tensor({2, 2, 4, 4}, 39), 40);
}

TEST(LayerGradients, DropoutUsesItsMask) {
  cxr::nn::Dropout<double> drop(0.5, 41);
  const auto x = oracle::random_tensor({4, 8}, 42);
  const auto y = drop.forward(x, cxr::nn::Mode::train);
  const Tensor<double> ones(x.shape(), 1.0);
  const auto g = drop.backward(ones);
  int dropped = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (g[i] == 0.0) {
      ++dropped;
      EXPECT_EQ(y[i], 0.0);
    } else {
      EXPECT_DOUBLE_EQ(g[i], 2.0);
      EXPECT_DOUBLE_EQ(y[i], 2.0 * x[i]);
    }
  }
  EXPECT_GT(dropped, 0);
  EXPECT_LT(dropped, 32);
  expect_close(drop.forward(x, cxr::nn::Mode::eval), x, 0.0);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  auto logits = oracle::random_tensor({4, 2}, 43, -3.0, 3.0);
  const std::vector<int> targets{0, 1, 1, 0};
  const auto r = cxr::nn::softmax_cross_entropy(logits, std::span<const int>(targets));
  auto loss = [&] { return cxr::nn::softmax_cross_entropy(logits, std::span<const int>(targets)).loss; };
  for (std::size_t i = 0; i < logits.size(); ++i) {
    EXPECT_LT(oracle::relative_error(r.grad[i], oracle::central_difference(logits, i, loss)), 1e-7);
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor<double> w({3}, std::vector<double>{1.0, -2.0, 0.5});
  Tensor<double> g({3}, std::vector<double>{0.3, -4.0, 0.0});
  cxr::nn::Adam<double> adam({{"w", &w, &g}}, {.learning_rate = 0.01});
  adam.step();
  // bias-corrected first step: update = lr * g / (|g| + eps)
  EXPECT_NEAR(w[0], 1.0 - 0.01 * 0.3 / (0.3 + 1e-8), 1e-12);
  EXPECT_NEAR(w[1], -2.0 + 0.01 * 4.0 / (4.0 + 1e-8), 1e-12);
  EXPECT_EQ(w[2], 0.5);
}
