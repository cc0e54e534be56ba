#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "spikecomp/optim.hpp"

using namespace spikecomp;

TEST(Momentum, TwoUnitGradientsMoveTwoPointNine) {
  std::vector<double> p{0.0}, buf{0.0};
  const std::vector<double> g{1.0};
  momentum_update(p, g, buf, 1.0, 0.9);
  momentum_update(p, g, buf, 1.0, 0.9);
  EXPECT_DOUBLE_EQ(p[0], -2.9);
  EXPECT_DOUBLE_EQ(buf[0], 1.9);
}

TEST(Momentum, ZeroGradientAndZeroBufferIsStationary) {
  std::vector<double> p{0.3, -1.2}, buf{0.0, 0.0};
  momentum_update(p, std::vector<double>{0.0, 0.0}, buf, 0.5, 0.9);
  EXPECT_EQ(p, (std::vector<double>{0.3, -1.2}));
}

TEST(Momentum, ZeroMomentumIsPlainDescent) {
  std::vector<double> p{1.0, 2.0}, buf{5.0, 5.0};
  momentum_update(p, std::vector<double>{0.5, -1.0}, buf, 0.1, 0.0);
  EXPECT_DOUBLE_EQ(p[0], 0.95);
  EXPECT_DOUBLE_EQ(p[1], 2.1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> p{0.0, 0.0}, m{0.0, 0.0}, v{0.0, 0.0};
  AdamHyper h;
  h.lr = 0.01;
  adaptive_update(p, std::vector<double>{3.0, -0.002}, m, v, h, 1);
  EXPECT_NEAR(p[0], -0.01, 1e-9);
  EXPECT_NEAR(p[1], 0.01, 1e-6);
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
  AdamHyper h;
  for (double g : {0.003, 0.5, -7.0}) {
    std::vector<double> p{0.0}, m{0.0}, v{0.0};
    double before = 0.0;
    for (std::size_t t = 1; t <= 5000; ++t) {
      before = p[0];
      adaptive_update(p, std::vector<double>{g}, m, v, h, t);
    }
    const double step = p[0] - before;
    EXPECT_NEAR(step, -h.lr * (g > 0 ? 1.0 : -1.0), 1e-9) << "g = " << g;
  }
}

TEST(Adam, StepMagnitudeIsScaleInvariant) {
  AdamHyper h;
  std::vector<double> a{0.0}, ma{0.0}, va{0.0};
  std::vector<double> b{0.0}, mb{0.0}, vb{0.0};
  for (std::size_t t = 1; t <= 200; ++t) {
    const double g = std::sin(0.1 * static_cast<double>(t)) + 0.5;
    adaptive_update(a, std::vector<double>{g}, ma, va, h, t);
    adaptive_update(b, std::vector<double>{10.0 * g}, mb, vb, h, t);
  }
  EXPECT_NEAR(a[0], b[0], 1e-9);
}

TEST(Adam, ZeroGradientFromInitIsStationary) {
  std::vector<double> p{0.7}, m{0.0}, v{0.0};
  for (std::size_t t = 1; t <= 3; ++t) adaptive_update(p, std::vector<double>{0.0}, m, v, AdamHyper{}, t);
  EXPECT_EQ(p[0], 0.7);
}

TEST(Cosine, Schedule) {
  EXPECT_DOUBLE_EQ(cosine_lr(0.1, 0, 100), 0.1);
  EXPECT_NEAR(cosine_lr(0.1, 50, 100), 0.05, 1e-15);
  EXPECT_NEAR(cosine_lr(0.1, 100, 100), 0.0, 1e-15);
  EXPECT_NEAR(cosine_lr(0.1, 25, 100), 0.05 * (1.0 + std::cos(std::numbers::pi / 4)), 1e-15);
  EXPECT_NEAR(cosine_lr(0.1, 500, 100), 0.0, 1e-15);
  for (std::size_t s = 1; s <= 100; ++s) EXPECT_LE(cosine_lr(0.1, s, 100), cosine_lr(0.1, s - 1, 100));
}

TEST(Optimizers, StepZeroesGradientsAndNamesBuffers) {
  Tensor w = Tensor::vector({1.0, 2.0});
  w.set_requires_grad();
  MomentumOptimizer sgd({{"w", w}}, 0.5, 0.9);
  grad_buffer(w) = {1.0, -1.0};
  sgd.step();
  EXPECT_EQ(w[0], 0.5);
  EXPECT_EQ(w[1], 2.5);
  EXPECT_EQ(w.grad(), (std::vector<double>{0.0, 0.0}));
  ASSERT_EQ(sgd.state().size(), 1u);
  EXPECT_EQ(sgd.state()[0].name, "w.momentum");

  Tensor a = Tensor::vector({0.0});
  a.set_requires_grad();
  AdamOptimizer adam({{"alpha", a}}, AdamHyper{});
  grad_buffer(a) = {2.0};
  adam.step();
  EXPECT_EQ(adam.steps(), 1u);
  EXPECT_NEAR(a[0], -3e-4 * 2.0 / (2.0 + 1e-8), 1e-15);
  ASSERT_EQ(adam.state().size(), 2u);
  EXPECT_EQ(adam.state()[0].name, "alpha.adam_m");
  EXPECT_EQ(adam.state()[1].name, "alpha.adam_v");
}
