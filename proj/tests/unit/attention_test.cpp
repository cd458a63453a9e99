#include <gtest/gtest.h>

#include "helpers.hpp"
#include "xing/attention.hpp"
#include "xing/bench.hpp"
#include "xing/config.hpp"
#include "xing/generator.hpp"
#include "xing/pose.hpp"

using namespace xing;
using xing::test::uniform;

namespace {

Tensor tokens(const Tensor& x) { return reshape(x, {x.dim(1), x.dim(2) * x.dim(3)}); }

}  // namespace

TEST(Pyramid, GeometryOn12x6) {
  const PyramidSpec spec{{1, 2, 3, 6}};
  const std::vector<std::pair<std::size_t, std::size_t>> want{{12, 6}, {6, 3}, {4, 2}, {2, 1}};
  const std::vector<std::size_t> n{72, 18, 8, 2};
  const auto pooled = pyramid_pool(uniform({2, 3, 12, 6}, 1), spec);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(spec.level_size(k, 12, 6), want[k]);
    EXPECT_EQ(spec.tokens(k, 12, 6), n[k]);
    EXPECT_EQ(pooled[k].shape(), (Shape{2, 3, want[k].first, want[k].second}));
  }
}

TEST(Pyramid, CeilDivisionOnUnevenCodes) {
  const PyramidSpec spec{{1, 2, 3, 6}};
  EXPECT_EQ(spec.level_size(2, 16, 8), (std::pair<std::size_t, std::size_t>{6, 3}));
  EXPECT_EQ(spec.level_size(3, 16, 8), (std::pair<std::size_t, std::size_t>{3, 2}));
}

TEST(Pyramid, RejectsBadFactors) {
  EXPECT_THROW(PyramidSpec{{}}.validate(), ContractError);
  EXPECT_THROW((PyramidSpec{{2, 3}}.validate()), ContractError);
  EXPECT_THROW((PyramidSpec{{1, 3, 2}}.validate()), ContractError);
}

TEST(Bench, SixteenBySixteenLevels) {
  const AttentionBench b = bench_attention(16, 16, PyramidSpec{{1, 2, 3, 6}}, 8, 1);
  const std::vector<std::size_t> want{256, 64, 36, 9};
  ASSERT_EQ(b.scales.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(b.scales[k].tokens, want[k]);
    EXPECT_EQ(b.scales[k].corr_entries, want[k] * want[k]);
  }
}

TEST(SA, ClosedGateIsIdentity) {
  ParamStore store;
  Rng rng(1);
  const SAParams p = make_sa(store, "sa", 4, rng);
  const Tensor fi = uniform({2, 4, 3, 5}, 2), fp = uniform({2, 4, 3, 5}, 3);
  EXPECT_TRUE(bitwise_equal(sa_forward(Bind::frozen(), fi, fp, p).out, fi));
}

TEST(SA, MatchesScalarOracleOnRandomDraws) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ParamStore store;
    Rng rng(seed);
    const std::size_t c = 1 + seed % 5, h = 1 + seed % 4, w = 2 + seed % 3;
    const SAParams p = make_sa(store, "sa", c, rng);
    p.alpha->assign({0.3 + 0.1 * double(seed)});
    const Tensor fi = uniform({1, c, h, w}, 100 + seed), fp = uniform({1, c, h, w}, 200 + seed);
    const Bind fz = Bind::frozen();
    const Tensor ref = attention_oracle(tokens(p.conv_c(fz, fi)), tokens(p.conv_b(fz, fp)),
                                        tokens(p.conv_a(fz, fi)), p.alpha->value[0], tokens(fi));
    EXPECT_LT(max_abs_diff(tokens(sa_forward(fz, fi, fp, p).out), ref), 1e-12);
  }
}

TEST(AS, CorrelationRowsAreStochastic) {
  ParamStore store;
  Rng rng(4);
  const ASParams p = make_as(store, "as", 6, rng);
  const Tensor fp = uniform({2, 6, 4, 3}, 5), prev = uniform({2, 6, 4, 3}, 6), next = uniform({2, 6, 4, 3}, 7);
  const BlockResult r = as_forward(Bind::frozen(), fp, prev, next, p);
  ASSERT_EQ(r.correlations.size(), 1u);
  EXPECT_EQ(r.correlations[0].values.shape(), (Shape{2, 12, 12}));
  EXPECT_LT(r.correlations[0].max_row_sum_error(), 1e-12);
  EXPECT_GE(r.correlations[0].min_entry(), 0.0);
  EXPECT_EQ(r.out.shape(), fp.shape());
  EXPECT_TRUE(bitwise_equal(r.pre_fusion, fp));
}

TEST(EA, ReducedWidthIsCapped) {
  ParamStore store;
  Rng rng(8);
  EXPECT_EQ(make_ea(store, "a", 4, 64, rng).reduced, 4u);
  EXPECT_EQ(make_ea(store, "b", 100, 64, rng).reduced, 64u);
  EXPECT_FALSE(store.contains("a.ln_v.beta"));
}

TEST(EA, RefinedMapIsRowStochastic) {
  ParamStore store;
  Rng rng(9);
  const EAParams p = make_ea(store, "ea", 10, 64, rng);
  const CorrelationMap m = ea_refine(Bind::frozen(), uniform({3, 10, 10}, 10, 0, 1), p);
  EXPECT_TRUE(m.normalized);
  EXPECT_LT(m.max_row_sum_error(), 1e-12);
  EXPECT_THROW(ea_refine(Bind::frozen(), uniform({1, 9, 9}, 1), p), ShapeError);
}

TEST(EMSA, ClosedGateIsIdentityAndMapsNormalized) {
  ParamStore store;
  Rng rng(11);
  const PyramidSpec spec{{1, 2, 4}};
  const EMSAParams p = make_emsa(store, "emsa", 4, 8, 4, spec, 64, rng);
  const Tensor fi = uniform({2, 4, 8, 4}, 12), fp = uniform({2, 4, 8, 4}, 13);
  const BlockResult r = emsa_forward(Bind::frozen(), fi, fp, p);
  EXPECT_TRUE(bitwise_equal(r.out, fi));
  ASSERT_EQ(r.correlations.size(), 3u);
  EXPECT_EQ(r.correlations[1].values.shape(), (Shape{2, 8, 8}));
  for (const auto& m : r.correlations) EXPECT_LT(m.max_row_sum_error(), 1e-12);
  EXPECT_THROW(emsa_forward(Bind::frozen(), fi, uniform({2, 4, 8, 8}, 1), p), ShapeError);
}

TEST(Generator, AppearanceCodesUnchangedAtInit) {
  for (Variant v : {Variant::xing, Variant::xingpp}) {
    GeneratorConfig cfg = RunConfig::desk().model;
    cfg.variant = v;
    cfg.blocks = 3;
    cfg.channels = 8;
    ParamStore store;
    Rng rng(12);
    const Generator gen(cfg, store, rng);
    const auto b = pose::training_batch(0, 0, 1, cfg.height, cfg.width);
    const auto out = gen.forward(Bind::frozen(), b.source_image, b.source_pose, b.target_pose);
    ASSERT_EQ(out.appearance_codes.size(), 4u);
    for (std::size_t t = 1; t < 4; ++t) EXPECT_TRUE(bitwise_equal(out.appearance_codes[t], out.appearance_codes[0]));
    EXPECT_EQ(out.image.shape(), (Shape{1, 3, cfg.height, cfg.width}));
  }
}

TEST(Generator, RejectsBadConfig) {
  GeneratorConfig cfg;
  cfg.height = 62;
  EXPECT_THROW(cfg.validate(), ShapeError);
  cfg = GeneratorConfig{};
  cfg.blocks = 0;
  EXPECT_THROW(cfg.validate(), ContractError);
}
