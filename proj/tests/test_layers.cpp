#include <gtest/gtest.h>

#include "ssnet/layers.hpp"
#include "support/oracles.hpp"

using namespace ssnet;

namespace {

std::vector<double> bias_vec(Conv2d<double>& c) {
  return {c.bias().value.vec().begin(), c.bias().value.vec().end()};
}

}  // namespace

TEST(Conv2d, MatchesDirectSum) {
  Rng rng(11);
  const std::vector<ConvGeom> geoms = {ConvGeom::square(3, 1, 1), ConvGeom::square(7, 2, 3),
                                       ConvGeom::square(4, 2, 1), ConvGeom{5, 1, 1, 1, 2, 0},
                                       ConvGeom{1, 3, 1, 2, 0, 1}, ConvGeom::square(1, 2, 3)};
  for (const auto& g : geoms) {
    Conv2d<double> c("c", 3, 4, g);
    c.init(rng);
    for (auto& v : c.bias().value.vec()) v = rng.uniform(-1, 1);
    const auto x = oracle::random_tensor({2, 3, 9, 8}, rng);
    const auto y = c.forward(x);
    const auto ref = oracle::conv2d(x, c.weight().value, bias_vec(c), g.sh, g.sw, g.ph, g.pw);
    ASSERT_EQ(y.shape(), ref.shape());
    EXPECT_LT(oracle::rel_error(y, ref), 1e-12);
  }
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  Rng rng(5);
  Conv2d<double> c("c", 2, 3, ConvGeom::square(3, 2, 1));
  c.init(rng);
  auto x = oracle::random_tensor({2, 2, 7, 6}, rng);
  const auto r = oracle::random_tensor(Shape{2, 3, 4, 3}, rng);
  auto loss = [&](const Tensor<double>& in) { return oracle::dot(c.forward(in), r); };
  c.forward(x);
  zero_grads<double>({&c.weight(), &c.bias()});
  const auto dx = c.backward(r);
  EXPECT_LT(oracle::rel_error(dx, oracle::numeric_grad(loss, x)), 1e-7);

  Tensor<double> w0 = c.weight().value;
  const Tensor<double> gw = c.weight().grad;
  auto wloss = [&](const Tensor<double>& w) {
    c.weight().value = w;
    return oracle::dot(c.forward(x), r);
  };
  EXPECT_LT(oracle::rel_error(gw, oracle::numeric_grad(wloss, w0)), 1e-7);
  c.weight().value = w0;

  // d/db_o = sum of r over channel o
  for (int o = 0; o < 3; ++o) {
    double s = 0;
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j) s += r.at(n, o, i, j);
    EXPECT_NEAR(c.bias().grad[o], s, 1e-12);
  }
}

TEST(Conv2d, BackwardAccumulatesAcrossCalls) {
  Rng rng(2);
  Conv2d<double> c("c", 1, 1, ConvGeom::square(3, 1, 1));
  c.init(rng);
  const auto x = oracle::random_tensor({1, 1, 5, 5}, rng);
  const auto dy = oracle::random_tensor({1, 1, 5, 5}, rng);
  c.forward(x);
  c.backward(dy);
  const Tensor<double> once = c.weight().grad;
  c.backward(dy);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(c.weight().grad[i], 2 * once[i], 1e-12);
}

TEST(Conv2d, RejectsWrongChannels) {
  Conv2d<double> c("c", 2, 1, ConvGeom::square(3, 1, 1));
  EXPECT_THROW(c.forward(Tensor<double>(1, 3, 5, 5)), ShapeError);
}

TEST(ConvTranspose2d, MatchesScatterAndDoublesSize) {
  Rng rng(9);
  ConvTranspose2d<double> d("d", 2, 3, ConvGeom::square(4, 2, 1));
  d.init(rng);
  for (auto& v : d.bias().value.vec()) v = rng.uniform(-1, 1);
  const auto x = oracle::random_tensor({2, 2, 5, 4}, rng);
  const auto y = d.forward(x);
  EXPECT_EQ(y.shape(), (Shape{2, 3, 10, 8}));
  const std::vector<double> b(d.bias().value.vec().begin(), d.bias().value.vec().end());
  EXPECT_LT(oracle::rel_error(y, oracle::conv_transpose2d(x, d.weight().value, b, 2, 1)), 1e-12);
}

TEST(ConvTranspose2d, IsAdjointOfStridedConv) {
  // <conv(x), y> == <x, conv^T(y)> with shared weights and no bias.
  Rng rng(4);
  Conv2d<double> c("c", 3, 2, ConvGeom::square(4, 2, 1), false);
  c.init(rng);
  ConvTranspose2d<double> t("t", 2, 3, ConvGeom::square(4, 2, 1));
  t.weight().value = c.weight().value;  // [2, 3, 4, 4] read as [cin_t, cout_t, k, k]
  const auto x = oracle::random_tensor({1, 3, 8, 8}, rng);
  const auto y = oracle::random_tensor({1, 2, 4, 4}, rng);
  EXPECT_NEAR(oracle::dot(c.forward(x), y), oracle::dot(x, t.forward(y)), 1e-10);
}

TEST(ConvTranspose2d, GradientsMatchFiniteDifferences) {
  Rng rng(3);
  ConvTranspose2d<double> d("d", 2, 2, ConvGeom::square(4, 2, 1));
  d.init(rng);
  const auto x = oracle::random_tensor({1, 2, 3, 3}, rng);
  const auto r = oracle::random_tensor({1, 2, 6, 6}, rng);
  d.forward(x);
  const auto dx = d.backward(r);
  auto loss = [&](const Tensor<double>& in) { return oracle::dot(d.forward(in), r); };
  EXPECT_LT(oracle::rel_error(dx, oracle::numeric_grad(loss, x)), 1e-7);
  const Tensor<double> w0 = d.weight().value, gw = d.weight().grad;
  auto wloss = [&](const Tensor<double>& w) {
    d.weight().value = w;
    return oracle::dot(d.forward(x), r);
  };
  EXPECT_LT(oracle::rel_error(gw, oracle::numeric_grad(wloss, w0)), 1e-7);
}

TEST(InstanceNorm2d, NormalisesEachSampleAndChannel) {
  Rng rng(8);
  InstanceNorm2d<double> norm("n", 3);
  norm.init(rng);
  const auto x = oracle::random_tensor({2, 3, 6, 5}, rng, -3, 7);
  const auto y = norm.forward(x);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c) {
      double m = 0, v = 0;
      for (int i = 0; i < 30; ++i) m += y.channel(n, c)[i];
      m /= 30;
      for (int i = 0; i < 30; ++i) v += (y.channel(n, c)[i] - m) * (y.channel(n, c)[i] - m);
      EXPECT_NEAR(m, 0.0, 1e-12);
      EXPECT_NEAR(v / 30, 1.0, 1e-3);
    }
  // A sample's output does not depend on the rest of the batch.
  Tensor<double> one(Shape{1, 3, 6, 5});
  std::copy_n(x.sample(1), one.size(), one.data());
  const auto y1 = norm.forward(one);
  for (std::size_t i = 0; i < y1.size(); ++i) EXPECT_DOUBLE_EQ(y1[i], y.sample(1)[i]);
}

TEST(InstanceNorm2d, GradientsMatchFiniteDifferences) {
  Rng rng(13);
  InstanceNorm2d<double> norm("n", 2);
  norm.init(rng);
  for (auto& v : norm.gamma().value.vec()) v = rng.uniform(0.5, 1.5);
  for (auto& v : norm.beta().value.vec()) v = rng.uniform(-0.5, 0.5);
  const auto x = oracle::random_tensor({2, 2, 4, 3}, rng);
  const auto r = oracle::random_tensor({2, 2, 4, 3}, rng);
  norm.forward(x);
  const auto dx = norm.backward(r);
  auto loss = [&](const Tensor<double>& in) { return oracle::dot(norm.forward(in), r); };
  EXPECT_LT(oracle::rel_error(dx, oracle::numeric_grad(loss, x)), 1e-6);
  const Tensor<double> g0 = norm.gamma().value, gg = norm.gamma().grad;
  auto gloss = [&](const Tensor<double>& g) {
    norm.gamma().value = g;
    return oracle::dot(norm.forward(x), r);
  };
  EXPECT_LT(oracle::rel_error(gg, oracle::numeric_grad(gloss, g0)), 1e-7);
}

TEST(Activations, LeakyReluAndCrop) {
  LeakyRelu<double> act(0.2);
  Tensor<double> x(1, 1, 1, 4);
  x[0] = -2;
  x[1] = -0.5;
  x[2] = 0.0;
  x[3] = 3;
  const auto y = act.forward(x);
  EXPECT_DOUBLE_EQ(y[0], -0.4);
  EXPECT_DOUBLE_EQ(y[1], -0.1);
  EXPECT_DOUBLE_EQ(y[3], 3);
  Tensor<double> ones(x.shape(), 1.0);
  const auto dx = act.backward(ones);
  EXPECT_DOUBLE_EQ(dx[0], 0.2);
  EXPECT_DOUBLE_EQ(dx[3], 1.0);

  Rng rng(1);
  Crop<double> crop(1, 2, 3, 2);
  const auto big = oracle::random_tensor({2, 2, 5, 6}, rng);
  const auto small = crop.forward(big);
  EXPECT_EQ(small.shape(), (Shape{2, 2, 3, 2}));
  EXPECT_DOUBLE_EQ(small.at(1, 1, 0, 0), big.at(1, 1, 1, 2));
  const auto r = oracle::random_tensor(small.shape(), rng);
  EXPECT_NEAR(oracle::dot(small, r), oracle::dot(big, crop.backward(r)), 1e-12);
}

TEST(Softmax, SumsToOneAndBackpropagates) {
  Rng rng(21);
  const auto z = oracle::random_tensor({2, 2, 3, 3}, rng, -40, 40);
  const auto p = softmax_channels(z);
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 9; ++i) EXPECT_NEAR(p.channel(n, 0)[i] + p.channel(n, 1)[i], 1.0, 1e-15);
  const auto z2 = oracle::random_tensor({2, 2, 3, 3}, rng);
  const auto r = oracle::random_tensor(z2.shape(), rng);
  const auto dz = softmax_channels_backward(softmax_channels(z2), r);
  auto loss = [&](const Tensor<double>& in) { return oracle::dot(softmax_channels(in), r); };
  EXPECT_LT(oracle::rel_error(dz, oracle::numeric_grad(loss, z2)), 1e-8);
}

TEST(Rng, DeterministicAndRestorable) {
  Rng a(77), b(77);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
  a.normal();  // leaves a cached spare
  const std::string st = a.state();
  const double n1 = a.normal(), n2 = a.normal();
  Rng c;
  c.set_state(st);
  EXPECT_EQ(c.normal(), n1);
  EXPECT_EQ(c.normal(), n2);
  EXPECT_THROW(c.set_state("garbage"), std::invalid_argument);
}

TEST(Rng, MomentsAndBounds) {
  Rng r(3);
  double s = 0, ss = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = r.normal();
    s += v;
    ss += v * v;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(ss / n, 1.0, 0.02);
  std::array<int, 7> hist{};
  for (int i = 0; i < 70000; ++i) ++hist[r.below(7)];
  for (int h : hist) EXPECT_NEAR(h, 10000, 500);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Tensor, ShapeChecks) {
  Tensor<float> a(1, 2, 3, 4), b(1, 2, 4, 3);
  EXPECT_THROW(a += b, ShapeError);
  EXPECT_THROW(Tensor<float>(Shape{-1, 1, 1, 1}), ShapeError);
  EXPECT_EQ(a.size(), 24u);
  const auto d = a.cast<double>();
  EXPECT_EQ(d.shape(), a.shape());
}
