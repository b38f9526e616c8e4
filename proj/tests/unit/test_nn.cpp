#include <cmath>

#include "gbatc/nn.hpp"
#include "gradcheck.hpp"
#include "helpers.hpp"

using namespace gbatc;
using namespace gbatc::nn;

TEST(Layers, LeakyReluDefinition) {
  Network net({2}, {LayerSpec::leaky_relu(0.01)});
  const Tensor y = net.infer(Tensor({1, 2}, {-1.0, 2.0}));
  EXPECT_DOUBLE_EQ(y[0], -0.01);
  EXPECT_DOUBLE_EQ(y[1], 2.0);
}

TEST(Layers, IdentityFullyConnected) {
  Network net({3}, {LayerSpec::fc(3, 3)});
  auto p = net.parameters();
  for (int i = 0; i < 3; ++i) (*p[0])[static_cast<std::size_t>(i * 3 + i)] = 1.0;
  const Tensor x({2, 3}, {1.5, -2, 3, 0.25, 7, -8});
  const Tensor y = net.infer(x);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Layers, AveragingConvolutionPreservesConstantInterior) {
  Network net({1, 5, 5, 5}, {LayerSpec::conv3d(1, 1, {3, 3, 3}, {1, 1, 1}, {1, 1, 1})});
  for (double& w : net.parameters()[0]->data()) w = 1.0 / 27.0;
  const Tensor y = net.infer(Tensor({1, 1, 5, 5, 5}, 3.25));
  for (int d = 1; d < 4; ++d) {
    for (int h = 1; h < 4; ++h) {
      for (int w = 1; w < 4; ++w) EXPECT_NEAR(y[static_cast<std::size_t>((d * 5 + h) * 5 + w)], 3.25, 1e-14);
    }
  }
  // corners see 8 of 27 taps under zero padding
  EXPECT_NEAR(y[0], 3.25 * 8 / 27, 1e-14);
}

TEST(Layers, GradientsMatchFiniteDifferences) {
  for (const auto& r : gradcheck::check_all_layer_kinds()) {
    EXPECT_LT(r.max_relative, 1e-4) << r.name;
    EXPECT_LE(r.parameters, 1000u) << r.name;
  }
}

TEST(Network, ZeroLossGradientGivesZeroGradients) {
  Network net({2, 3, 4, 4}, {LayerSpec::conv3d(2, 2, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}), LayerSpec::leaky_relu(),
                             LayerSpec::fc(96, 5)});
  Rng rng(1);
  net.init_glorot(rng);
  Tensor x({3, 2, 3, 4, 4});
  for (double& v : x.data()) v = rng.uniform();
  net.zero_grad();
  net.forward(x);
  const Tensor gin = net.backward(Tensor({3, 5}));
  for (const Tensor* p : std::as_const(net).parameters()) {
    for (double g : p->grad()) EXPECT_EQ(g, 0.0);
  }
  for (double g : gin.data()) EXPECT_EQ(g, 0.0);
}

TEST(Network, StateAndShapeErrors) {
  Network net({4}, {LayerSpec::fc(4, 2)});
  EXPECT_KIND(net.backward(Tensor({1, 2})), ErrorKind::kState);
  try {
    net.forward(Tensor({1, 5}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
    EXPECT_NE(std::string(e.what()).find("layer 0"), std::string::npos);
  }
  // a conv geometry that does not tile fails at construction
  EXPECT_KIND(Network({1, 5, 5, 5}, {LayerSpec::conv3d(1, 1, {3, 4, 4}, {1, 2, 2}, {1, 1, 1})}),
              ErrorKind::kConfiguration);
  EXPECT_KIND(Network({4}, {LayerSpec::fc(4, 2), LayerSpec::fc(3, 2)}), ErrorKind::kConfiguration);
}

TEST(Network, SerializationRoundTripAtFloatPrecision) {
  Network net({2, 5, 4, 4}, {LayerSpec::conv3d(2, 4, {3, 4, 4}, {1, 2, 2}, {1, 1, 1}), LayerSpec::leaky_relu(0.02),
                             LayerSpec::fc(80, 6)});
  Rng rng(2);
  net.init_glorot(rng);
  net.round_parameters_to_float();
  const auto blob = net.serialize();
  const Network back = Network::deserialize(blob);
  EXPECT_EQ(back.specs(), net.specs());
  EXPECT_EQ(back.serialize(), blob);
  Tensor x({2, 2, 5, 4, 4});
  for (double& v : x.data()) v = rng.uniform();
  const Tensor a = net.infer(x), b = back.infer(x);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  auto bad = blob;
  bad[0] ^= 0xFF;
  EXPECT_KIND(Network::deserialize(bad), ErrorKind::kCorruption);
  EXPECT_KIND(Network::deserialize(std::span(blob).first(blob.size() - 3)), ErrorKind::kTruncation);
}

TEST(Network, InitDeterministicAndWithinGlorotLimit) {
  Network a({10}, {LayerSpec::fc(10, 20)}), b({10}, {LayerSpec::fc(10, 20)});
  Rng ra(5), rb(5);
  a.init_glorot(ra);
  b.init_glorot(rb);
  EXPECT_EQ(a.serialize(), b.serialize());
  const double limit = std::sqrt(6.0 / 30.0);
  for (double w : a.parameters()[0]->data()) EXPECT_LE(std::abs(w), limit);
  for (double w : a.parameters()[1]->data()) EXPECT_EQ(w, 0.0);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Tensor w({3}, {1.0, -2.0, 0.5});
  w.zero_grad();
  Adam opt;
  std::vector<Tensor*> params{&w};
  for (int i = 0; i < 5; ++i) opt.step(params);
  EXPECT_EQ(w[0], 1.0);
  EXPECT_EQ(w[1], -2.0);
  EXPECT_EQ(w[2], 0.5);
}

TEST(Adam, ConstantGradientDecreasesMonotonically) {
  Tensor w({1}, {0.0});
  w.zero_grad();
  Adam opt({0.01});
  std::vector<Tensor*> params{&w};
  double prev = w[0];
  for (int i = 0; i < 100; ++i) {
    w.grad()[0] = 0.7;
    opt.step(params);
    EXPECT_LT(w[0], prev);
    prev = w[0];
  }
}

TEST(Adam, QuadraticBowlConverges) {
  Tensor w({1}, {1.0});
  w.zero_grad();
  Adam opt({0.1});
  std::vector<Tensor*> params{&w};
  for (int i = 0; i < 200; ++i) {
    w.grad()[0] = 2 * w[0];
    opt.step(params);
  }
  EXPECT_LT(std::abs(w[0]), 1e-3);
}

TEST(Loss, MseValueAndGradient) {
  const Tensor p({1, 4}, {1, 2, 3, 4}), t({1, 4}, {1, 0, 3, 6});
  Tensor g;
  EXPECT_DOUBLE_EQ(mse_loss(p, t, &g), (4.0 + 4.0) / 4);
  EXPECT_DOUBLE_EQ(g[1], 2.0 * 2 / 4);
  EXPECT_DOUBLE_EQ(g[3], 2.0 * -2 / 4);
  EXPECT_KIND(mse_loss(p, Tensor({1, 3}), nullptr), ErrorKind::kShape);
}
