#pragma once

#include <vector>

#include "xing/layers.hpp"

namespace xing {

enum class FusionMode { dccaf, caf };

struct FusionConfig {
  std::size_t intermediates = 10;  // N
  FusionMode mode = FusionMode::dccaf;

  bool operator==(const FusionConfig&) const = default;
};

/// Two (upsample x2, 3x3 conv, leaky_relu) stages, then a 3x3 conv to 3N channels.
struct DecoderParams {
  ConvLayer stage1, stage2, out;
  std::size_t images = 0;
};

DecoderParams make_decoder(ParamStore& store, const std::string& prefix, std::size_t in_channels,
                           std::size_t width, std::size_t images, Rng& rng);

/// 1x1 conv from the stacked appearance+shape codes to 2N+1 logits.
struct CoAttentionParams {
  ConvLayer conv;
};

CoAttentionParams make_co_attention(ParamStore& store, const std::string& prefix,
                                    std::size_t in_channels, std::size_t intermediates, Rng& rng);

/// Channel-concatenates the codes, decodes and splits into N tanh images [b,3,4h',4w'].
std::vector<Tensor> decode_intermediates(const Bind& bind, const std::vector<Tensor>& codes,
                                         const DecoderParams& dec);

/// Softmax over 2N+1 channels at every pixel of the (upsampled) image grid.
Tensor co_attention(const Bind& bind, const std::vector<Tensor>& codes_i,
                    const std::vector<Tensor>& codes_p, const CoAttentionParams& p,
                    std::size_t height, std::size_t width);

/// Per-pixel convex combination of N appearance images, N shape images and the source.
Tensor compose(const std::vector<Tensor>& apps, const std::vector<Tensor>& shapes,
               const Tensor& source, const Tensor& attention);

}  // namespace xing
