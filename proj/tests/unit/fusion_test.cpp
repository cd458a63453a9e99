#include <gtest/gtest.h>

#include <algorithm>

#include "helpers.hpp"
#include "xing/fusion.hpp"
#include "xing/ops.hpp"

using namespace xing;
using xing::test::uniform;

namespace {

Tensor one_hot_attention(std::size_t b, std::size_t k, std::size_t hot, std::size_t h, std::size_t w) {
  std::vector<double> v(b * k * h * w, 0.0);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t p = 0; p < h * w; ++p) v[(i * k + hot) * h * w + p] = 1.0;
  return Tensor({b, k, h, w}, std::move(v));
}

}  // namespace

TEST(Compose, OneHotSelectsCandidate) {
  const std::size_t n = 2;
  const std::vector<Tensor> apps{uniform({1, 3, 4, 4}, 1), uniform({1, 3, 4, 4}, 2)};
  const std::vector<Tensor> shapes{uniform({1, 3, 4, 4}, 3), uniform({1, 3, 4, 4}, 4)};
  const Tensor src = uniform({1, 3, 4, 4}, 5);
  std::vector<const Tensor*> all{&apps[0], &apps[1], &shapes[0], &shapes[1], &src};
  for (std::size_t k = 0; k < 2 * n + 1; ++k) {
    const Tensor y = compose(apps, shapes, src, one_hot_attention(1, 2 * n + 1, k, 4, 4));
    EXPECT_EQ(max_abs_diff(y, *all[k]), 0.0);
  }
}

TEST(Compose, ConvexCombinationBound) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const std::vector<Tensor> apps{uniform({2, 3, 5, 3}, seed * 10 + 1)};
    const std::vector<Tensor> shapes{uniform({2, 3, 5, 3}, seed * 10 + 2)};
    const Tensor src = uniform({2, 3, 5, 3}, seed * 10 + 3);
    const Tensor att = softmax(uniform({2, 3, 5, 3}, seed * 10 + 4, -3, 3), 1);
    const Tensor y = compose(apps, shapes, src, att);
    for (std::size_t e = 0; e < y.numel(); ++e) {
      const double lo = std::min({apps[0][e], shapes[0][e], src[e]});
      const double hi = std::max({apps[0][e], shapes[0][e], src[e]});
      EXPECT_GE(y[e], lo - 1e-15);
      EXPECT_LE(y[e], hi + 1e-15);
    }
  }
}

TEST(Compose, RejectsWrongChannelCount) {
  const std::vector<Tensor> one{uniform({1, 3, 2, 2}, 1)};
  EXPECT_THROW(compose(one, one, one[0], uniform({1, 4, 2, 2}, 2)), ShapeError);
  EXPECT_THROW(compose(one, {}, one[0], uniform({1, 3, 2, 2}, 2)), ContractError);
}

TEST(CoAttention, ChannelsSumToOnePerPixel) {
  ParamStore store;
  Rng rng(6);
  const std::size_t c = 4, n = 3;
  const CoAttentionParams p = make_co_attention(store, "co", 4 * c, n, rng);
  const std::vector<Tensor> ci{uniform({2, c, 3, 2}, 7), uniform({2, c, 3, 2}, 8)};
  const std::vector<Tensor> cp{uniform({2, c, 3, 2}, 9), uniform({2, c, 3, 2}, 10)};
  const Tensor a = co_attention(Bind::frozen(), ci, cp, p, 12, 8);
  ASSERT_EQ(a.shape(), (Shape{2, 2 * n + 1, 12, 8}));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t px = 0; px < 96; ++px) {
      double s = 0;
      for (std::size_t k = 0; k < 2 * n + 1; ++k) s += a[(b * (2 * n + 1) + k) * 96 + px];
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Decoder, ProducesBoundedImagesAtFourTimesResolution) {
  ParamStore store;
  Rng rng(11);
  const DecoderParams d = make_decoder(store, "dec", 8, 6, 3, rng);
  const auto imgs = decode_intermediates(Bind::frozen(), {uniform({2, 4, 3, 2}, 12), uniform({2, 4, 3, 2}, 13)}, d);
  ASSERT_EQ(imgs.size(), 3u);
  for (const auto& im : imgs) {
    EXPECT_EQ(im.shape(), (Shape{2, 3, 12, 8}));
    for (double v : im.data()) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_THROW(make_decoder(store, "bad", 8, 6, 0, rng), ContractError);
}
