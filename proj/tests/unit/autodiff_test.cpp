#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "xing/grad_check.hpp"
#include "xing/ops.hpp"

using namespace xing;
using xing::test::uniform;

TEST(Graph, VariableGradientOfQuadratic) {
  Graph g;
  const Tensor x = g.variable(Tensor({3}, {1.0, -2.0, 0.5}));
  g.backward(sum(square(x)));
  const Tensor dx = g.grad(x);
  EXPECT_DOUBLE_EQ(dx[0], 2.0);
  EXPECT_DOUBLE_EQ(dx[1], -4.0);
  EXPECT_DOUBLE_EQ(dx[2], 1.0);
}

TEST(Graph, ParameterGradientsAccumulate) {
  Parameter p("w", Tensor({2}, {3.0, 4.0}));
  for (int round = 0; round < 2; ++round) {
    Graph g;
    g.backward(sum(mul(g.param(p), g.param(p))));
  }
  EXPECT_DOUBLE_EQ(p.grad[0], 12.0);
  EXPECT_DOUBLE_EQ(p.grad[1], 16.0);
  p.zero_grad();
  EXPECT_DOUBLE_EQ(p.grad[0], 0.0);
}

TEST(Graph, SharedUseSumsContributions) {
  Graph g;
  const Tensor x = g.variable(Tensor::scalar(3.0));
  g.backward(add(mul(x, x), mul_scalar(x, 5.0)));
  EXPECT_DOUBLE_EQ(g.grad(x).item(), 11.0);
}

TEST(Graph, RejectsNonScalarLoss) {
  Graph g;
  const Tensor x = g.variable(uniform({2, 2}, 1));
  EXPECT_THROW(g.backward(x), ContractError);
}

TEST(Bind, FrozenProducesUntrackedValues) {
  Parameter p("w", uniform({3}, 2));
  const Tensor t = Bind::frozen()(p);
  EXPECT_FALSE(t.requires_grad());
  EXPECT_FALSE(mul(t, t).requires_grad());
  Graph g;
  EXPECT_TRUE(Bind(&g)(p).requires_grad());
}

TEST(Parameter, AssignKeepsOldStorageAlive) {
  Parameter p("w", Tensor({2}, {1.0, 2.0}));
  const Tensor old = p.value;
  p.assign({5.0, 6.0});
  EXPECT_EQ(old[0], 1.0);
  EXPECT_EQ(p.value[0], 5.0);
  EXPECT_THROW(p.assign({1.0}), ShapeError);
}

TEST(Detach, StopsGradient) {
  Graph g;
  const Tensor x = g.variable(Tensor::scalar(2.0));
  g.backward(add(mul(x, x.detach()), x));
  EXPECT_DOUBLE_EQ(g.grad(x).item(), 3.0);
}

TEST(GradCheck, CoversCompositeOps) {
  const Tensor a = uniform({3, 4}, 3), b = uniform({4, 2}, 4);
  std::string where;
  GradCheckOptions opt;
  opt.worst_at = &where;
  const double err = grad_check(
      [](const std::vector<Tensor>& x) { return sum(tanh(matmul(x[0], x[1]))); }, {a, b}, opt);
  EXPECT_LT(err, 1e-7);
  EXPECT_FALSE(where.empty());
}

TEST(GradCheck, DetectsInjectedSoftmaxFault) {
  const Tensor x = uniform({2, 5}, 5);
  const Tensor r = uniform({2, 5}, 6);
  auto f = [&](const Tensor& v) { return sum(mul(softmax(v, 1), r)); };
  EXPECT_LT(grad_check(f, x), 1e-6);
  set_fault(Fault::softmax_backward_sign);
  const double bad = grad_check(f, x);
  set_fault(Fault::none);
  EXPECT_GT(bad, 1e-2);
}

TEST(Ridders, ExtrapolatesSmoothDerivative) {
  const Derivative d = ridders_derivative([](double h) { return std::sin(0.3 + h); }, 0.1);
  EXPECT_NEAR(d.value, std::cos(0.3), 1e-12);
  EXPECT_LT(d.error, 1e-10);
}

TEST(KinkTrace, SignatureTracksSignChanges) {
  auto sig = [](double v) {
    KinkTrace trace;
    (void)leaky_relu(Tensor({2}, {v, 1.0}), 0.2);
    return trace.signature();
  };
  EXPECT_EQ(sig(0.5), sig(0.7));
  EXPECT_NE(sig(0.5), sig(-0.5));
}

TEST(GradCheckParams, RestoresValuesBitwise) {
  Parameter p("w", uniform({4}, 7));
  const Tensor before = p.value;
  const double err = grad_check_params(
      [&](const Bind& b) { return sum(square(tanh(b(p)))); }, {&p});
  EXPECT_LT(err, 1e-7);
  EXPECT_TRUE(bitwise_equal(p.value, before));
}
