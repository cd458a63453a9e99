#pragma once

#include <utility>
#include <vector>

#include "xing/layers.hpp"

// Cross-attention between appearance and shape codes. All feature maps are
// batched [b,c,h,w]; correlation maps are [b,n,n] with entry (j,i) weighting
// key position i for query position j.

namespace xing {

/// Pyramid levels as downsampling factors with ceil division.
struct PyramidSpec {
  std::vector<std::size_t> factors{1, 2, 3, 6};

  void validate() const;
  std::pair<std::size_t, std::size_t> level_size(std::size_t level, std::size_t h,
                                                 std::size_t w) const;
  std::size_t tokens(std::size_t level, std::size_t h, std::size_t w) const;

  bool operator==(const PyramidSpec&) const = default;
};

std::vector<Tensor> pyramid_pool(const Tensor& x, const PyramidSpec& spec);

struct CorrelationMap {
  Tensor values;  // [b,n,n]
  bool normalized = false;

  double max_row_sum_error() const;
  double min_entry() const;
};

// -- SA / AS -------------------------------------------------------------------

/// conv_b is the key projection and carries no bias: a key bias shifts every
/// logit of a row equally and cancels in the softmax.
struct SAParams {
  ConvLayer conv_a, conv_b, conv_c;
  Parameter* alpha = nullptr;
};

struct ASParams {
  ConvLayer conv_d, conv_e, conv_h;  // conv_e is the bias-free key projection
  Parameter* beta = nullptr;
  ConvLayer fuse;  // 3x3, 2c -> c
};

SAParams make_sa(ParamStore& store, const std::string& prefix, std::size_t channels, Rng& rng);
ASParams make_as(ParamStore& store, const std::string& prefix, std::size_t channels, Rng& rng);

struct BlockResult {
  Tensor out;
  Tensor pre_fusion;  // AS/EMAS only: gated residual before concat + fuse
  std::vector<CorrelationMap> correlations;
};

BlockResult sa_forward(const Bind& bind, const Tensor& f_i, const Tensor& f_p, const SAParams& p);
/// Keys come from the previous appearance code; the concat uses the updated one.
BlockResult as_forward(const Bind& bind, const Tensor& f_p, const Tensor& f_i_prev,
                       const Tensor& f_i_new, const ASParams& p);

// -- enhanced attention ------------------------------------------------------------

/// Refines a raw [b,n,n] correlation map by attending over its column vectors.
struct EAParams {
  std::size_t tokens = 0;   // n
  std::size_t reduced = 0;  // d <= n
  Parameter* reduce_w = nullptr;  // [d,n]
  Parameter* reduce_b = nullptr;  // [d]
  LayerNormParams ln_kq;          // over d
  LayerNormParams ln_v;           // over n, gamma only
  Parameter* key_w = nullptr;     // [d,d], no bias (cancels in the softmax)
  Parameter* query_w = nullptr;   // [d,d]
  Parameter* query_b = nullptr;   // [d]
  Parameter* out_w = nullptr;     // [n,n], no bias (row constant, cancels)
};

EAParams make_ea(ParamStore& store, const std::string& prefix, std::size_t tokens,
                 std::size_t max_reduced, Rng& rng);

CorrelationMap ea_refine(const Bind& bind, const Tensor& raw, const EAParams& p);

// -- multi-scale ---------------------------------------------------------------

struct ScaleParams {
  ConvLayer value, key, query;  // A/B/C in EMSA, D/E/H in EMAS
  EAParams ea;
};

struct EMSAParams {
  PyramidSpec pyramid;
  std::vector<ScaleParams> scales;
  ConvLayer merge;  // 1x1, levels*c -> c
  Parameter* alpha = nullptr;
};

struct EMASParams {
  PyramidSpec pyramid;
  std::vector<ScaleParams> scales;
  ConvLayer merge;
  Parameter* beta = nullptr;
  ConvLayer fuse;  // 3x3, 2c -> c
};

/// Parameters depend on the code resolution (h, w) because EA projects over tokens.
EMSAParams make_emsa(ParamStore& store, const std::string& prefix, std::size_t channels,
                     std::size_t h, std::size_t w, const PyramidSpec& pyramid,
                     std::size_t ea_max_reduced, Rng& rng);
EMASParams make_emas(ParamStore& store, const std::string& prefix, std::size_t channels,
                     std::size_t h, std::size_t w, const PyramidSpec& pyramid,
                     std::size_t ea_max_reduced, Rng& rng);

BlockResult emsa_forward(const Bind& bind, const Tensor& f_i, const Tensor& f_p,
                         const EMSAParams& p);
BlockResult emas_forward(const Bind& bind, const Tensor& f_p, const Tensor& f_i_prev,
                         const Tensor& f_i_new, const EMASParams& p);

// -- oracle --------------------------------------------------------------------

/// Scalar-loop reference for single-scale cross attention on [c,n] operands:
/// out[:,j] = alpha * sum_i softmax_i(C_j . B_i) A_i + residual[:,j].
Tensor attention_oracle(const Tensor& c, const Tensor& b, const Tensor& a, double alpha,
                        const Tensor& residual);

}  // namespace xing
