#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "xing/adversarial.hpp"
#include "xing/trainer.hpp"

using namespace xing;
using xing::test::uniform;

namespace {

RunConfig tiny() {
  RunConfig c = RunConfig::desk();
  c.model.blocks = 1;
  c.model.channels = 4;
  c.model.height = 16;
  c.model.width = 16;
  c.model.fusion.intermediates = 2;
  c.train.batch = 2;
  c.train.holdout = 2;
  return c;
}

std::vector<Tensor> snapshot(const std::vector<Parameter*>& ps) {
  std::vector<Tensor> out;
  for (const Parameter* p : ps) out.push_back(p->value);
  return out;
}

bool unchanged(const std::vector<Parameter*>& ps, const std::vector<Tensor>& before) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!bitwise_equal(ps[i]->value, before[i])) return false;
  }
  return true;
}

bool all_zero_grads(const std::vector<Parameter*>& ps) {
  for (const Parameter* p : ps)
    for (double g : p->grad)
      if (g != 0.0) return false;
  return true;
}

}  // namespace

TEST(PatchDiscriminator, DeskImageGivesFourByTwoPatches) {
  ParamStore store;
  Rng rng(1);
  const PatchDiscriminator d(store, "d", 3, rng);
  const Tensor s = d.forward(Bind::frozen(), uniform({2, 3, 64, 32}, 2), uniform({2, 3, 64, 32}, 3));
  EXPECT_EQ(s.shape(), (Shape{2, 1, 4, 2}));
  EXPECT_EQ(d.in_channels(), 6u);
}

TEST(GanLoss, ZeroLogitsGiveLogTwo) {
  const std::vector<Tensor> zero{Tensor::zeros({2, 1, 4, 2}), Tensor::zeros({2, 1, 4, 2})};
  EXPECT_NEAR(discriminator_loss(zero, zero).item(), std::log(2.0), 1e-15);
  EXPECT_NEAR(generator_adv_loss(zero).item(), std::log(2.0), 1e-15);
  GanOptions sum_opt;
  sum_opt.reduce = DiscReduce::sum;
  EXPECT_NEAR(generator_adv_loss(zero, sum_opt).item(), 2 * std::log(2.0), 1e-15);
}

TEST(GanLoss, LeastSquaresForm) {
  GanOptions opt;
  opt.kind = GanLossKind::lsgan;
  const std::vector<Tensor> real{Tensor::full({1, 1, 2, 2}, 0.5)}, fake{Tensor::full({1, 1, 2, 2}, 0.25)};
  EXPECT_NEAR(discriminator_loss(real, fake, opt).item(), 0.5 * (0.25 + 0.0625), 1e-15);
  EXPECT_NEAR(generator_adv_loss(fake, opt).item(), 0.5625, 1e-15);
}

TEST(L1, ConstantOffset) {
  const Tensor a = uniform({2, 3, 4, 4}, 4);
  EXPECT_NEAR(l1_loss(add_scalar(a, 0.5), a).item(), 0.5, 1e-15);
  EXPECT_THROW(l1_loss(a, uniform({2, 3, 4, 5}, 1)), ShapeError);
}

TEST(Perceptual, ZeroOnIdenticalImagesAndFrozen) {
  const PerceptualExtractor phi;
  const Tensor x = uniform({1, 3, 16, 16}, 5);
  EXPECT_EQ(perceptual_loss(x, x, phi).item(), 0.0);
  EXPECT_GT(perceptual_loss(x, uniform({1, 3, 16, 16}, 6), phi).item(), 0.0);
  EXPECT_EQ(phi.features(x).size(), 3u);
  const PerceptualExtractor again;
  EXPECT_TRUE(bitwise_equal(phi.features(x).back(), again.features(x).back()));
}

TEST(Adam, MatchesScalarReferenceOver1000Steps) {
  const AdamConfig cfg;
  Parameter p("w", Tensor({3}, {0.5, -1.0, 2.0}));
  Adam opt({&p}, cfg);
  std::vector<double> ref{0.5, -1.0, 2.0}, m(3, 0.0), v(3, 0.0);
  for (int t = 1; t <= 1000; ++t) {
    opt.zero_grad();
    for (std::size_t i = 0; i < 3; ++i) p.grad[i] = std::sin(0.01 * t + double(i)) + 0.1 * p.value[i];
    opt.step();
    for (std::size_t i = 0; i < 3; ++i) {
      const double g = std::sin(0.01 * t + double(i)) + 0.1 * ref[i];
      m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g * g;
      const double mh = m[i] / (1 - std::pow(cfg.beta1, t));
      const double vh = v[i] / (1 - std::pow(cfg.beta2, t));
      ref[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p.value[i], ref[i], 1e-12);
  EXPECT_EQ(opt.steps(), 1000u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // With bias correction the first update is lr * sign(g) up to eps.
  Parameter p("x", Tensor({2}, {1.0, -3.0}));
  Adam opt({&p}, AdamConfig{});
  Graph g;
  g.backward(sum(square(g.param(p))));
  opt.step();
  EXPECT_NEAR(p.value[0], 1.0 - 2e-4, 1e-11);
  EXPECT_NEAR(p.value[1], -3.0 + 2e-4, 1e-11);
}

TEST(Adam, MinimizesQuadratic) {
  Parameter p("x", Tensor::scalar(1.0));
  AdamConfig cfg;
  cfg.lr = 0.05;
  Adam opt({&p}, cfg);
  for (int i = 0; i < 2000; ++i) {
    opt.zero_grad();
    Graph g;
    g.backward(square(g.param(p)));
    opt.step();
  }
  EXPECT_LT(std::abs(p.value[0]), 1e-2);
}

TEST(Detachment, DiscriminatorUpdateLeavesGeneratorUntouched) {
  Trainer tr(tiny());
  const auto batch = pose::training_batch(0, 0, 2, 16, 16);
  auto gen = tr.params().with_prefix("gen.");
  std::vector<Parameter*> disc = tr.params().with_prefix("d_i.");
  for (Parameter* p : tr.params().with_prefix("d_p.")) disc.push_back(p);
  const auto gen_before = snapshot(gen);

  Graph gg;
  const Tensor fake = tr.generator().forward(Bind(&gg), batch.source_image, batch.source_pose, batch.target_pose).image;
  tr.params().zero_grad();
  Adam d_opt(disc, AdamConfig{});
  Graph dg;
  dg.backward(tr.discriminator_objective(Bind(&dg), batch, fake.detach()));
  EXPECT_TRUE(all_zero_grads(gen));
  EXPECT_FALSE(all_zero_grads(disc));
  d_opt.step();
  EXPECT_TRUE(unchanged(gen, gen_before));
}

TEST(Detachment, GeneratorUpdateLeavesDiscriminatorsUntouched) {
  Trainer tr(tiny());
  const auto batch = pose::training_batch(0, 1, 2, 16, 16);
  auto gen = tr.params().with_prefix("gen.");
  std::vector<Parameter*> disc = tr.params().with_prefix("d_i.");
  for (Parameter* p : tr.params().with_prefix("d_p.")) disc.push_back(p);
  const auto disc_before = snapshot(disc);

  tr.params().zero_grad();
  Adam g_opt(gen, AdamConfig{});
  Graph g;
  LossReport r;
  g.backward(tr.generator_objective(Bind(&g), batch, &r));
  EXPECT_TRUE(all_zero_grads(disc));
  EXPECT_FALSE(all_zero_grads(gen));
  g_opt.step();
  EXPECT_TRUE(unchanged(disc, disc_before));
  EXPECT_NEAR(r.loss_g, 5 * r.loss_g_adv + 50 * r.loss_l1 + 50 * r.loss_p, 1e-9);
}

TEST(Trainer, StepUpdatesBothPlayers) {
  Trainer tr(tiny());
  auto gen = tr.params().with_prefix("gen.");
  auto disc = tr.params().with_prefix("d_i.");
  const auto g0 = snapshot(gen), d0 = snapshot(disc);
  const LossReport r = tr.train_step(pose::training_batch(0, 0, 2, 16, 16));
  EXPECT_EQ(r.step, 1u);
  EXPECT_FALSE(unchanged(gen, g0));
  EXPECT_FALSE(unchanged(disc, d0));
  EXPECT_TRUE(std::isfinite(r.loss_d) && std::isfinite(r.loss_g));
}
