#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "hupa/gradcheck.hpp"
#include "hupa/layers.hpp"
#include "hupa/optim.hpp"

namespace hupa::nn {
namespace {

template <class T>
Tensor<T> random_tensor(std::vector<int> shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> d(-scale, scale);
  for (auto& v : t.vec()) v = static_cast<T>(d(rng));
  return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Gradient check of all parameters and the input of a layer under the
/// scalar loss <r, layer(x)>.
template <class Forward, class Backward>
double check_layer(ParamSet<double>& ps, Tensor<double>& x, const Tensor<double>& r, Forward fwd, Backward bwd) {
  ps.zero_grad();
  const Tensor<double> gx = bwd(r);
  auto flat = ps.flat_values();
  const auto gflat = ps.flat_grads();
  auto loss_params = [&] {
    ps.set_flat_values(flat);
    return dot(fwd(), r);
  };
  const auto pres = grad_check(loss_params, std::span<double>(flat), gflat, {.samples = 400});
  ps.set_flat_values(flat);
  auto loss_input = [&] { return dot(fwd(), r); };
  const auto xres = grad_check(loss_input, x.span(), gx.span(), {.samples = 400});
  EXPECT_GT(pres.checked, 0);
  EXPECT_GT(xres.checked, 0);
  return std::max(pres.max_rel_error, xres.max_rel_error);
}

TEST(Conv3x3, ScalarMultiply) {
  ParamSet<float> ps;
  const Conv2d conv = Conv2d::create(ps, "c", 1, 1, 3, 1);
  ps[conv.weight].value.fill(0.0f);
  ps[conv.weight].value[4] = 3.0f;
  const Tensor<float> x({1, 1, 1}, std::vector<float>{2.0f});
  const Tensor<float> y = conv.forward(ps, x);
  EXPECT_EQ(y.shape(), (std::vector<int>{1, 1, 1}));
  EXPECT_EQ(y[0], 6.0f);
}

TEST(Conv3x3, IdentityKernelAndFreeFunction) {
  std::mt19937_64 rng(1);
  const Tensor<float> x = random_tensor<float>({1, 6, 5}, rng);
  Tensor<float> w({1, 1, 3, 3});
  w[4] = 1.0f;
  EXPECT_EQ(conv3x3(x, w, Tensor<float>({1}), 1), x);
}

TEST(Conv3x3, OutputDims) {
  ParamSet<float> ps;
  const Conv2d c = Conv2d::create(ps, "c", 2, 3, 3, 2);
  EXPECT_EQ(c.out_dim(31), 16);
  EXPECT_EQ(c.out_dim(16), 8);
  EXPECT_EQ(c.out_dim(5), 3);
  EXPECT_THROW(c.forward(ps, Tensor<float>({1, 5, 5})), std::invalid_argument);
}

TEST(Conv3x3, GradientMatchesFiniteDifferences) {
  for (int stride : {1, 2}) {
    std::mt19937_64 rng(2 + stride);
    ParamSet<double> ps;
    const Conv2d conv = Conv2d::create(ps, "c", 2, 3, 3, stride);
    conv.init(ps, rng);
    Tensor<double> x = random_tensor<double>({2, 5, 5}, rng);
    const int o = conv.out_dim(5);
    const Tensor<double> r = random_tensor<double>({3, o, o}, rng);
    ConvCache<double> cache;
    const double err = check_layer(
        ps, x, r, [&] { return conv.forward(ps, x); },
        [&](const Tensor<double>& g) {
          conv.forward(ps, x, cache);
          return conv.backward(ps, cache, g);
        });
    EXPECT_LT(err, 1e-6) << "stride " << stride;
  }
}

TEST(Linear, Examples) {
  ParamSet<float> ps;
  const Linear l = Linear::create(ps, "l", 2, 2);
  ps[l.weight].value = Tensor<float>({2, 2}, std::vector<float>{1, 2, 3, 4});
  const Tensor<float> y = l.forward(ps, Tensor<float>({2}, std::vector<float>{1, 1}));
  EXPECT_TRUE(std::ranges::equal(y.vec(), std::vector<float>{3, 7}));
  ps[l.weight].value = Tensor<float>({2, 2}, std::vector<float>{1, 0, 0, 1});
  EXPECT_TRUE(std::ranges::equal(
      linear(Tensor<float>({2}, std::vector<float>{5, -2}), ps[l.weight].value, Tensor<float>({2})).vec(),
      std::vector<float>{5, -2}));
}

TEST(Linear, WeightGradientIsOuterProduct) {
  ParamSet<double> ps;
  const Linear l = Linear::create(ps, "l", 3, 2);
  const Tensor<double> x({3}, std::vector<double>{1, -2, 0.5});
  LinearCache<double> cache;
  l.forward(ps, x, &cache);
  const Tensor<double> g({2}, std::vector<double>{0.25, -4});
  l.backward(ps, cache, g);
  for (int o = 0; o < 2; ++o)
    for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(ps[l.weight].grad[o * 3 + i], g[o] * x[i]);
  EXPECT_EQ(ps[l.bias].grad.vec(), g.vec());
}

TEST(Linear, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  ParamSet<double> ps;
  const Linear l = Linear::create(ps, "l", 7, 5);
  l.init(ps, rng);
  Tensor<double> x = random_tensor<double>({3, 7}, rng);
  const Tensor<double> r = random_tensor<double>({3, 5}, rng);
  LinearCache<double> cache;
  const double err = check_layer(
      ps, x, r, [&] { return l.forward(ps, x); },
      [&](const Tensor<double>& g) {
        l.forward(ps, x, &cache);
        return l.backward(ps, cache, g);
      });
  EXPECT_LT(err, 1e-6);
}

TEST(ResidualBlock, ZeroConvsPassSkipThroughRelu) {
  std::mt19937_64 rng(5);
  ParamSet<float> ps;
  const ResidualBlock b = ResidualBlock::create(ps, "b", 3, 3, 1);
  EXPECT_FALSE(b.proj.has_value());
  const Tensor<float> x = random_tensor<float>({3, 6, 6}, rng);
  EXPECT_EQ(b.forward(ps, x), relu(x));
}

TEST(ResidualBlock, StrideTwoHalvesSpatialDims) {
  ParamSet<float> ps;
  const ResidualBlock b = ResidualBlock::create(ps, "b", 8, 16, 2);
  ASSERT_TRUE(b.proj.has_value());
  std::mt19937_64 rng(6);
  b.init(ps, rng);
  EXPECT_EQ(b.forward(ps, Tensor<float>({8, 31, 31})).shape(), (std::vector<int>{16, 16, 16}));
}

TEST(ResidualBlock, GradientMatchesFiniteDifferences) {
  for (auto [in, out, stride] : {std::tuple{2, 2, 1}, std::tuple{2, 3, 2}}) {
    std::mt19937_64 rng(7 + stride);
    ParamSet<double> ps;
    const ResidualBlock b = ResidualBlock::create(ps, "b", in, out, stride);
    b.init(ps, rng);
    Tensor<double> x = random_tensor<double>({in, 5, 5}, rng);
    const int o = b.out_dim(5);
    const Tensor<double> r = random_tensor<double>({out, o, o}, rng);
    ResidualCache<double> cache;
    const double err = check_layer(
        ps, x, r, [&] { return b.forward(ps, x); },
        [&](const Tensor<double>& g) {
          b.forward(ps, x, cache);
          return b.backward(ps, cache, g);
        });
    EXPECT_LT(err, 1e-6);
  }
}

TEST(AvgPool, ForwardAndGradient) {
  AvgPool pool{2};
  const Tensor<double> x({1, 2, 4}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
  EXPECT_TRUE(std::ranges::equal(pool.forward(x).vec(), std::vector<double>{3.5, 5.5}));
  std::mt19937_64 rng(9);
  Tensor<double> xi = random_tensor<double>({2, 4, 4}, rng);
  const Tensor<double> r = random_tensor<double>({2, 2, 2}, rng);
  const Tensor<double> gx = pool.backward(xi.shape(), r);
  const auto res = grad_check([&] { return dot(pool.forward(xi), r); }, xi.span(), gx.span());
  EXPECT_LT(res.max_rel_error, 1e-8);
  EXPECT_THROW(pool.forward(Tensor<double>({1, 3, 4})), std::invalid_argument);
}

TEST(SoftmaxCrossEntropy, Examples) {
  const auto uniform = softmax_cross_entropy(Tensor<double>({8}), 3);
  EXPECT_NEAR(uniform.loss, std::log(8.0), 1e-12);
  EXPECT_NEAR(std::log(8.0), 2.0794, 1e-4);
  Tensor<double> peaked({8});
  peaked[4] = 30;
  EXPECT_LT(softmax_cross_entropy(peaked, 5).loss, 1e-9);
  std::mt19937_64 rng(10);
  const Tensor<double> l = random_tensor<double>({8}, rng, 3.0);
  const auto res = softmax_cross_entropy(l, 2);
  double sum = 0;
  for (double g : res.grad.vec()) sum += g;
  EXPECT_NEAR(sum, 0.0, 1e-12);
  const Tensor<double> p = softmax(l);
  double psum = 0;
  for (double v : p.vec()) psum += v;
  EXPECT_NEAR(psum, 1.0, 1e-6);
  EXPECT_THROW(softmax_cross_entropy(l, 0), std::out_of_range);
  EXPECT_THROW(softmax_cross_entropy(l, 9), std::out_of_range);
}

TEST(SoftmaxCrossEntropy, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  Tensor<double> l = random_tensor<double>({8}, rng, 2.0);
  const auto res = softmax_cross_entropy(l, 6);
  const auto chk = grad_check([&] { return softmax_cross_entropy(l, 6).loss; }, l.span(), res.grad.span());
  EXPECT_LT(chk.max_rel_error, 1e-8);
}

TEST(Relu, KinkCoordinatesAreSkipped) {
  // y = relu(x), loss = sum(y); x has an entry exactly at the kink.
  Tensor<double> x({3}, std::vector<double>{-1.0, 0.0, 2.0});
  const Tensor<double> analytic({3}, std::vector<double>{0.0, 0.0, 1.0});
  auto loss = [&] {
    const Tensor<double> y = relu(x);
    return y[0] + y[1] + y[2];
  };
  const auto res = grad_check(loss, x.span(), analytic.span());
  EXPECT_EQ(res.skipped_kinks, 1);
  EXPECT_EQ(res.checked, 2);
  EXPECT_LT(res.max_rel_error, 1e-9);
}

TEST(GradCheck, NonFiniteLossIsAnError) {
  Tensor<double> x({1}, std::vector<double>{1.0});
  const Tensor<double> g({1}, std::vector<double>{1.0});
  EXPECT_THROW(grad_check([] { return std::nan(""); }, x.span(), g.span()), std::runtime_error);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  ParamSet<double> ps;
  const int id = ps.add("p", {3});
  ps[id].value = Tensor<double>({3}, std::vector<double>{1, 2, 3});
  Adam<double> opt(ps);
  opt.step(ps);
  EXPECT_TRUE(std::ranges::equal(ps[id].value.vec(), std::vector<double>{1, 2, 3}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  for (double g : {0.3, -50.0}) {
    std::vector<double> p{1.0}, m{0.0}, v{0.0};
    const std::vector<double> grad{g};
    adam_update<double>(p, grad, m, v, 1, {});
    EXPECT_NEAR(1.0 - p[0], 1e-3 * (g > 0 ? 1 : -1), 1e-10);
  }
}

TEST(Adam, ThreeStepsMatchTextbookFormula) {
  const AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
  const double grads[3] = {0.5, -1.25, 2.0};
  // Reference: textbook update with explicit bias-corrected moments.
  double p_ref = 0.7, m_ref = 0, v_ref = 0;
  for (int t = 1; t <= 3; ++t) {
    const double g = grads[t - 1];
    m_ref = 0.9 * m_ref + 0.1 * g;
    v_ref = 0.999 * v_ref + 0.001 * g * g;
    const double mhat = m_ref / (1 - std::pow(0.9, t));
    const double vhat = v_ref / (1 - std::pow(0.999, t));
    p_ref -= 0.01 * mhat / (std::sqrt(vhat) + 1e-8);
  }
  ParamSet<double> ps;
  const int id = ps.add("p", {1});
  ps[id].value[0] = 0.7;
  Adam<double> opt(ps, cfg);
  for (double g : grads) {
    ps[id].grad[0] = g;
    opt.step(ps);
  }
  EXPECT_EQ(opt.steps(), 3);
  EXPECT_NEAR(ps[id].value[0], p_ref, 1e-12);
}

TEST(Forward, DeterministicAcrossCalls) {
  std::mt19937_64 rng(12);
  ParamSet<float> ps;
  const ResidualBlock b = ResidualBlock::create(ps, "b", 4, 8, 2);
  b.init(ps, rng);
  const Tensor<float> x = random_tensor<float>({4, 9, 9}, rng);
  EXPECT_EQ(b.forward(ps, x), b.forward(ps, x));
}

}  // namespace
}  // namespace hupa::nn
