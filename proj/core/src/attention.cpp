#include "xing/attention.hpp"

#include <algorithm>
#include <cmath>

namespace xing {
namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op, const char* na,
                  const char* nb) {
  if (a.rank() != 4 || a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": " + na + " " + to_string(a.shape()) + " and " + nb +
                     " " + to_string(b.shape()) + " must be equal [b,c,h,w] shapes");
  }
}

struct Attended {
  Tensor out;  // [b,c,h,w]
  CorrelationMap correlation;
};

// P[j,i] = softmax_i(query_j . key_i), optionally EA-refined; out[:,j] = sum_i P[j,i] value_i.
Attended attend(const Bind& bind, const Tensor& query, const Tensor& key, const Tensor& value,
                const EAParams* ea) {
  const std::size_t b = query.dim(0), c = query.dim(1), h = query.dim(2), w = query.dim(3);
  const std::size_t n = h * w;
  const Tensor q = reshape(query, {b, c, n});
  const Tensor k = reshape(key, {b, c, n});
  const Tensor v = reshape(value, {b, c, n});
  const Tensor raw = matmul(transpose(q), k);
  CorrelationMap corr = ea ? ea_refine(bind, raw, *ea) : CorrelationMap{softmax(raw, 2), true};
  Tensor out = reshape(matmul(v, transpose(corr.values)), {b, c, h, w});
  return {std::move(out), std::move(corr)};
}

Tensor gated_residual(const Bind& bind, Parameter* gate, const Tensor& update,
                      const Tensor& residual) {
  return add(mul(bind(*gate), update), residual);
}

// Pool, project, attend, upsample and merge every pyramid level.
Tensor multi_scale(const Bind& bind, const Tensor& query_src, const Tensor& key_src,
                   const PyramidSpec& pyramid, const std::vector<ScaleParams>& scales,
                   const ConvLayer& merge, std::vector<CorrelationMap>& correlations) {
  const std::size_t h = query_src.dim(2), w = query_src.dim(3);
  const auto q_levels = pyramid_pool(query_src, pyramid);
  const auto k_levels = pyramid_pool(key_src, pyramid);
  std::vector<Tensor> upsampled;
  upsampled.reserve(scales.size());
  for (std::size_t s = 0; s < scales.size(); ++s) {
    const ScaleParams& sp = scales[s];
    Attended att = attend(bind, sp.query(bind, q_levels[s]), sp.key(bind, k_levels[s]),
                          sp.value(bind, q_levels[s]), &sp.ea);
    upsampled.push_back(upsample_bilinear(att.out, h, w));
    correlations.push_back(std::move(att.correlation));
  }
  return merge(bind, concat(upsampled, 1));
}

std::vector<ScaleParams> make_scales(ParamStore& store, const std::string& prefix,
                                     std::size_t channels, std::size_t h, std::size_t w,
                                     const PyramidSpec& pyramid, std::size_t ea_max_reduced,
                                     Rng& rng) {
  pyramid.validate();
  std::vector<ScaleParams> scales;
  for (std::size_t s = 0; s < pyramid.factors.size(); ++s) {
    const std::string sp = prefix + ".scale" + std::to_string(s);
    ScaleParams p;
    p.value = make_conv(store, sp + ".value", channels, channels, 1, 1, true, rng);
    p.key = make_conv(store, sp + ".key", channels, channels, 1, 1, false, rng);
    p.query = make_conv(store, sp + ".query", channels, channels, 1, 1, true, rng);
    p.ea = make_ea(store, sp + ".ea", pyramid.tokens(s, h, w), ea_max_reduced, rng);
    scales.push_back(p);
  }
  return scales;
}

}  // namespace

// -- pyramid -----------------------------------------------------------------------

void PyramidSpec::validate() const {
  if (factors.empty()) throw ContractError("pyramid: at least one scale factor required");
  if (factors.front() != 1) throw ContractError("pyramid: the first scale factor must be 1");
  for (std::size_t i = 1; i < factors.size(); ++i) {
    if (factors[i] <= factors[i - 1]) {
      throw ContractError("pyramid: scale factors must be strictly increasing");
    }
  }
}

std::pair<std::size_t, std::size_t> PyramidSpec::level_size(std::size_t level, std::size_t h,
                                                            std::size_t w) const {
  const std::size_t s = factors.at(level);
  return {(h + s - 1) / s, (w + s - 1) / s};
}

std::size_t PyramidSpec::tokens(std::size_t level, std::size_t h, std::size_t w) const {
  const auto [lh, lw] = level_size(level, h, w);
  return lh * lw;
}

std::vector<Tensor> pyramid_pool(const Tensor& x, const PyramidSpec& spec) {
  spec.validate();
  if (x.rank() != 4) throw ShapeError("pyramid_pool: expected [b,c,h,w], got " + to_string(x.shape()));
  std::vector<Tensor> levels;
  levels.reserve(spec.factors.size());
  for (std::size_t k = 0; k < spec.factors.size(); ++k) {
    if (spec.factors[k] == 1) {
      levels.push_back(x);
      continue;
    }
    const auto [lh, lw] = spec.level_size(k, x.dim(2), x.dim(3));
    levels.push_back(adaptive_avg_pool2d(x, lh, lw));
  }
  return levels;
}

double CorrelationMap::max_row_sum_error() const {
  const std::size_t n = values.dim(values.rank() - 1);
  const std::size_t rows = values.numel() / n;
  double worst = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += values[r * n + i];
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

double CorrelationMap::min_entry() const {
  const auto d = values.data();
  return *std::min_element(d.begin(), d.end());
}

// -- SA / AS -------------------------------------------------------------------

SAParams make_sa(ParamStore& store, const std::string& prefix, std::size_t channels, Rng& rng) {
  SAParams p;
  p.conv_a = make_conv(store, prefix + ".conv_a", channels, channels, 1, 1, true, rng);
  p.conv_b = make_conv(store, prefix + ".conv_b", channels, channels, 1, 1, false, rng);
  p.conv_c = make_conv(store, prefix + ".conv_c", channels, channels, 1, 1, true, rng);
  p.alpha = &make_gate(store, prefix + ".alpha");
  return p;
}

ASParams make_as(ParamStore& store, const std::string& prefix, std::size_t channels, Rng& rng) {
  ASParams p;
  p.conv_d = make_conv(store, prefix + ".conv_d", channels, channels, 1, 1, true, rng);
  p.conv_e = make_conv(store, prefix + ".conv_e", channels, channels, 1, 1, false, rng);
  p.conv_h = make_conv(store, prefix + ".conv_h", channels, channels, 1, 1, true, rng);
  p.beta = &make_gate(store, prefix + ".beta");
  p.fuse = make_conv(store, prefix + ".fuse", 2 * channels, channels, 3, 1, true, rng);
  return p;
}

BlockResult sa_forward(const Bind& bind, const Tensor& f_i, const Tensor& f_p, const SAParams& p) {
  require_same(f_i, f_p, "sa_forward", "F_I", "F_P");
  Attended att = attend(bind, p.conv_c(bind, f_i), p.conv_b(bind, f_p), p.conv_a(bind, f_i), nullptr);
  BlockResult r;
  r.out = gated_residual(bind, p.alpha, att.out, f_i);
  r.correlations.push_back(std::move(att.correlation));
  return r;
}

BlockResult as_forward(const Bind& bind, const Tensor& f_p, const Tensor& f_i_prev,
                       const Tensor& f_i_new, const ASParams& p) {
  require_same(f_p, f_i_prev, "as_forward", "F_P", "F_I_prev");
  require_same(f_p, f_i_new, "as_forward", "F_P", "F_I_new");
  Attended att =
      attend(bind, p.conv_h(bind, f_p), p.conv_e(bind, f_i_prev), p.conv_d(bind, f_p), nullptr);
  BlockResult r;
  r.pre_fusion = gated_residual(bind, p.beta, att.out, f_p);
  r.out = p.fuse(bind, concat({r.pre_fusion, f_i_new}, 1));
  r.correlations.push_back(std::move(att.correlation));
  return r;
}

// -- enhanced attention ----------------------------------------------------------

EAParams make_ea(ParamStore& store, const std::string& prefix, std::size_t tokens,
                 std::size_t max_reduced, Rng& rng) {
  if (tokens == 0 || max_reduced == 0) throw ContractError("make_ea: sizes must be positive");
  EAParams p;
  p.tokens = tokens;
  p.reduced = std::min(tokens, max_reduced);
  const std::size_t n = p.tokens, d = p.reduced;
  p.reduce_w = &store.add(prefix + ".reduce.weight", kaiming_uniform({d, n}, n, rng));
  p.reduce_b = &store.add(prefix + ".reduce.bias", Tensor::zeros({d}));
  p.ln_kq = make_layer_norm(store, prefix + ".ln_kq", d);
  // The value shift is constant along the softmax axis and would cancel.
  p.ln_v = make_layer_norm(store, prefix + ".ln_v", n, false);
  p.key_w = &store.add(prefix + ".key.weight", kaiming_uniform({d, d}, d, rng));
  p.query_w = &store.add(prefix + ".query.weight", kaiming_uniform({d, d}, d, rng));
  p.query_b = &store.add(prefix + ".query.bias", Tensor::zeros({d}));
  p.out_w = &store.add(prefix + ".out.weight", kaiming_uniform({n, n}, n, rng));
  return p;
}

CorrelationMap ea_refine(const Bind& bind, const Tensor& raw, const EAParams& p) {
  if (raw.rank() == 2) {
    CorrelationMap r = ea_refine(bind, reshape(raw, {1, raw.dim(0), raw.dim(1)}), p);
    r.values = reshape(r.values, raw.shape());
    return r;
  }
  if (raw.rank() != 3 || raw.dim(1) != raw.dim(2)) {
    throw ShapeError("ea_refine: correlation map must be square, got " + to_string(raw.shape()));
  }
  if (raw.dim(1) != p.tokens) {
    throw ShapeError("ea_refine: map has " + std::to_string(raw.dim(1)) +
                     " tokens, parameters expect " + std::to_string(p.tokens));
  }
  const std::size_t d = p.reduced;
  // Columns of the raw map are the correlation vectors; projections act on the vector axis.
  const Tensor reduced =
      add(matmul(bind(p.reduce_w), raw), reshape(bind(p.reduce_b), {d, 1}));
  const Tensor normed = p.ln_kq(bind, reduced, 1);
  const Tensor key = matmul(bind(p.key_w), normed);
  const Tensor query = add(matmul(bind(p.query_w), normed), reshape(bind(p.query_b), {d, 1}));
  const Tensor value = p.ln_v(bind, raw, 1);
  const Tensor weights = softmax(matmul(transpose(query), key), 2);
  const Tensor ea1 = matmul(value, transpose(weights));
  const Tensor ea2 = add(ea1, matmul(bind(p.out_w), ea1));
  return {softmax(add(ea2, raw), 2), true};
}

// -- multi-scale ---------------------------------------------------------------

EMSAParams make_emsa(ParamStore& store, const std::string& prefix, std::size_t channels,
                     std::size_t h, std::size_t w, const PyramidSpec& pyramid,
                     std::size_t ea_max_reduced, Rng& rng) {
  EMSAParams p;
  p.pyramid = pyramid;
  p.scales = make_scales(store, prefix, channels, h, w, pyramid, ea_max_reduced, rng);
  p.merge = make_conv(store, prefix + ".merge", pyramid.factors.size() * channels, channels, 1, 1,
                      true, rng);
  p.alpha = &make_gate(store, prefix + ".alpha");
  return p;
}

EMASParams make_emas(ParamStore& store, const std::string& prefix, std::size_t channels,
                     std::size_t h, std::size_t w, const PyramidSpec& pyramid,
                     std::size_t ea_max_reduced, Rng& rng) {
  EMASParams p;
  p.pyramid = pyramid;
  p.scales = make_scales(store, prefix, channels, h, w, pyramid, ea_max_reduced, rng);
  p.merge = make_conv(store, prefix + ".merge", pyramid.factors.size() * channels, channels, 1, 1,
                      true, rng);
  p.beta = &make_gate(store, prefix + ".beta");
  p.fuse = make_conv(store, prefix + ".fuse", 2 * channels, channels, 3, 1, true, rng);
  return p;
}

BlockResult emsa_forward(const Bind& bind, const Tensor& f_i, const Tensor& f_p,
                         const EMSAParams& p) {
  require_same(f_i, f_p, "emsa_forward", "F_I", "F_P");
  BlockResult r;
  const Tensor merged = multi_scale(bind, f_i, f_p, p.pyramid, p.scales, p.merge, r.correlations);
  r.out = gated_residual(bind, p.alpha, merged, f_i);
  return r;
}

BlockResult emas_forward(const Bind& bind, const Tensor& f_p, const Tensor& f_i_prev,
                         const Tensor& f_i_new, const EMASParams& p) {
  require_same(f_p, f_i_prev, "emas_forward", "F_P", "F_I_prev");
  require_same(f_p, f_i_new, "emas_forward", "F_P", "F_I_new");
  BlockResult r;
  const Tensor merged =
      multi_scale(bind, f_p, f_i_prev, p.pyramid, p.scales, p.merge, r.correlations);
  r.pre_fusion = gated_residual(bind, p.beta, merged, f_p);
  r.out = p.fuse(bind, concat({r.pre_fusion, f_i_new}, 1));
  return r;
}

// -- oracle --------------------------------------------------------------------

Tensor attention_oracle(const Tensor& c, const Tensor& b, const Tensor& a, double alpha,
                        const Tensor& residual) {
  if (c.rank() != 2 || c.shape() != b.shape() || c.shape() != a.shape() ||
      c.shape() != residual.shape()) {
    throw ShapeError("attention_oracle: operands must share one [c,n] shape");
  }
  const std::size_t ch = c.dim(0), n = c.dim(1);
  std::vector<double> out(ch * n);
  std::vector<double> logits(n), p(n);
  for (std::size_t j = 0; j < n; ++j) {
    double mx = -INFINITY;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < ch; ++k) s += b[k * n + i] * c[k * n + j];
      logits[i] = s;
      mx = std::max(mx, s);
    }
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(logits[i] - mx);
    for (std::size_t i = 0; i < n; ++i) p[i] = std::exp(logits[i] - mx) / z;
    for (std::size_t k = 0; k < ch; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += p[i] * a[k * n + i];
      out[k * n + j] = alpha * acc + residual[k * n + j];
    }
  }
  return Tensor(c.shape(), std::move(out));
}

}  // namespace xing
