#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "xing/metrics.hpp"
#include "xing/ops.hpp"
#include "xing/pose.hpp"

using namespace xing;
using xing::test::uniform;

TEST(Ssim, IdentityIsExactlyOne) {
  const Tensor x = uniform({3, 20, 17}, 1);
  EXPECT_EQ(ssim(x, x), 1.0);
  const auto ep = pose::sample_episode(4, 64, 32);
  EXPECT_EQ(ssim(ep.source_image, ep.source_image), 1.0);
}

TEST(Ssim, NegatedZeroMeanImageIsNegative) {
  // A checkerboard has (almost exactly) zero mean inside every window.
  std::vector<double> v(3 * 16 * 16);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = ((i / 16 + i % 16) % 2 ? 0.5 : -0.5);
  const Tensor x({3, 16, 16}, std::move(v));
  EXPECT_LT(ssim(x, mul_scalar(x, -1.0)), -0.9);
}

TEST(Ssim, NegationWithLocalMeansIsNotNegative) {
  // Both the luminance and structure terms flip sign, so their product does not.
  const Tensor x = uniform({3, 16, 16}, 2, 0.2, 1.0);
  EXPECT_GT(ssim(x, mul_scalar(x, -1.0)), 0.0);
}

TEST(Ssim, ConstantImagesMatchClosedForm) {
  const double c1 = 0.02 * 0.02;
  const double want = (2 * 0.2 * 0.4 + c1) / (0.04 + 0.16 + c1);
  EXPECT_NEAR(ssim(Tensor::full({3, 12, 12}, 0.2), Tensor::full({3, 12, 12}, 0.4)), want, 1e-12);
}

TEST(Ssim, SymmetricAndBounded) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor x = uniform({3, 16, 14}, seed * 2 + 10, -5, 5), y = uniform({3, 16, 14}, seed * 2 + 11, -5, 5);
    const double a = ssim(x, y), b = ssim(y, x);
    EXPECT_NEAR(a, b, 1e-12);
    EXPECT_LE(std::abs(a), 1.0);
  }
}

TEST(Ssim, MonotoneUnderIncreasingNoise) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor img = pose::sample_episode(seed, 64, 32).target_image;
    Rng r(seed);
    std::normal_distribution<double> n01(0, 1);
    std::vector<double> z(img.numel());
    for (double& v : z) v = n01(r);
    double prev = 1.0;
    for (double sigma : {0.05, 0.1, 0.2}) {
      std::vector<double> noisy = test::values(img);
      for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += sigma * z[i];
      const double s = ssim(img, Tensor(img.shape(), std::move(noisy)));
      EXPECT_LT(s, prev) << "seed " << seed << " sigma " << sigma;
      prev = s;
    }
  }
}

TEST(Ssim, Contracts) {
  EXPECT_THROW(ssim(uniform({3, 10, 20}, 1), uniform({3, 10, 20}, 2)), ContractError);
  EXPECT_THROW(ssim(uniform({3, 12, 12}, 1), uniform({3, 12, 13}, 2)), ShapeError);
  SsimConfig even;
  even.window = 10;
  EXPECT_THROW(even.validate(), ContractError);
}

TEST(Ssim, GaussianWindowIsNormalizedAndSymmetric) {
  const auto g = gaussian_window(11, 1.5);
  EXPECT_NEAR(std::accumulate(g.begin(), g.end(), 0.0), 1.0, 1e-15);
  for (std::size_t i = 0; i < 11; ++i) EXPECT_DOUBLE_EQ(g[i], g[10 - i]);
  EXPECT_NEAR(g[6] / g[5], std::exp(-1.0 / (2 * 1.5 * 1.5)), 1e-15);
}

TEST(Ssim, BatchMeanAveragesItems) {
  const Tensor a = uniform({2, 3, 12, 12}, 3), b = uniform({2, 3, 12, 12}, 4);
  const double s0 = ssim(reshape(slice(a, 0, 0, 1), {3, 12, 12}), reshape(slice(b, 0, 0, 1), {3, 12, 12}));
  const double s1 = ssim(reshape(slice(a, 0, 1, 1), {3, 12, 12}), reshape(slice(b, 0, 1, 1), {3, 12, 12}));
  EXPECT_NEAR(mean_ssim(a, b), 0.5 * (s0 + s1), 1e-15);
}
