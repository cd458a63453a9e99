#include "xing/fusion.hpp"

namespace xing {

DecoderParams make_decoder(ParamStore& store, const std::string& prefix, std::size_t in_channels,
                           std::size_t width, std::size_t images, Rng& rng) {
  if (images == 0) throw ContractError("decoder: at least one intermediate image required");
  DecoderParams d;
  d.stage1 = make_conv(store, prefix + ".stage1", in_channels, width, 3, 1, true, rng);
  d.stage2 = make_conv(store, prefix + ".stage2", width, width, 3, 1, true, rng);
  d.out = make_conv(store, prefix + ".out", width, 3 * images, 3, 1, true, rng);
  d.images = images;
  return d;
}

CoAttentionParams make_co_attention(ParamStore& store, const std::string& prefix,
                                    std::size_t in_channels, std::size_t intermediates, Rng& rng) {
  return {make_conv(store, prefix + ".conv", in_channels, 2 * intermediates + 1, 1, 1, true, rng)};
}

std::vector<Tensor> decode_intermediates(const Bind& bind, const std::vector<Tensor>& codes,
                                         const DecoderParams& dec) {
  if (codes.empty()) throw ContractError("decode_intermediates: empty code list");
  Tensor x = codes.size() == 1 ? codes.front() : concat(codes, 1);
  x = upsample_bilinear(x, 2 * x.dim(2), 2 * x.dim(3));
  x = leaky_relu(dec.stage1(bind, x), 0.2);
  x = upsample_bilinear(x, 2 * x.dim(2), 2 * x.dim(3));
  x = leaky_relu(dec.stage2(bind, x), 0.2);
  const Tensor images = tanh(dec.out(bind, x));
  std::vector<Tensor> out;
  out.reserve(dec.images);
  for (std::size_t i = 0; i < dec.images; ++i) out.push_back(slice(images, 1, 3 * i, 3));
  return out;
}

Tensor co_attention(const Bind& bind, const std::vector<Tensor>& codes_i,
                    const std::vector<Tensor>& codes_p, const CoAttentionParams& p,
                    std::size_t height, std::size_t width) {
  if (codes_i.empty() || codes_p.empty()) throw ContractError("co_attention: empty code list");
  std::vector<Tensor> stacked(codes_i);
  stacked.insert(stacked.end(), codes_p.begin(), codes_p.end());
  const Tensor logits = p.conv(bind, concat(stacked, 1));
  return softmax(upsample_bilinear(logits, height, width), 1);
}

Tensor compose(const std::vector<Tensor>& apps, const std::vector<Tensor>& shapes,
               const Tensor& source, const Tensor& attention) {
  const std::size_t n = apps.size();
  if (n == 0 || shapes.size() != n) throw ContractError("compose: need N appearance and N shape images");
  if (attention.rank() != 4 || attention.dim(1) != 2 * n + 1) {
    throw ShapeError("compose: attention " + to_string(attention.shape()) + " must have " +
                     std::to_string(2 * n + 1) + " channels");
  }
  std::vector<const Tensor*> candidates;
  for (const auto& t : apps) candidates.push_back(&t);
  for (const auto& t : shapes) candidates.push_back(&t);
  candidates.push_back(&source);
  Tensor out;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const Tensor& cand = *candidates[k];
    if (cand.rank() != 4 || cand.dim(0) != attention.dim(0) || cand.dim(2) != attention.dim(2) ||
        cand.dim(3) != attention.dim(3)) {
      throw ShapeError("compose: candidate " + to_string(cand.shape()) +
                       " does not match attention " + to_string(attention.shape()));
    }
    const Tensor term = mul(slice(attention, 1, k, 1), cand);
    out = out.defined() ? add(out, term) : term;
  }
  return out;
}

}  // namespace xing
