#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "xing/graph.hpp"
#include "xing/ops.hpp"

namespace xing {

using Rng = std::mt19937_64;

/// Kaiming-uniform bound for leaky_relu(0.2) fan-in initialization.
double kaiming_bound(std::size_t fan_in);
Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng);

/// Convolution with "same" padding (output = ceil(input / stride)).
struct ConvLayer {
  Parameter* weight = nullptr;  // [co, ci, k, k]
  Parameter* bias = nullptr;    // [co] or null
  std::size_t stride = 1;

  Tensor operator()(const Bind& bind, const Tensor& x) const;
  std::size_t out_channels() const { return weight->value.dim(0); }
  std::size_t in_channels() const { return weight->value.dim(1); }
};

ConvLayer make_conv(ParamStore& store, const std::string& name, std::size_t in_channels,
                    std::size_t out_channels, std::size_t kernel, std::size_t stride, bool bias,
                    Rng& rng);

struct LayerNormParams {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;  // null: no shift
  double eps = 1e-5;

  Tensor operator()(const Bind& bind, const Tensor& x, std::size_t axis) const;
};

LayerNormParams make_layer_norm(ParamStore& store, const std::string& name, std::size_t length,
                                bool shift = true);

/// Scalar gate initialized to exactly zero.
Parameter& make_gate(ParamStore& store, const std::string& name);

}  // namespace xing
