#include "xing/layers.hpp"

#include <cmath>

namespace xing {

double kaiming_bound(std::size_t fan_in) {
  constexpr double slope = 0.2;
  return std::sqrt(6.0 / ((1.0 + slope * slope) * static_cast<double>(fan_in)));
}

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = kaiming_bound(fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> data(numel(shape));
  for (auto& v : data) v = dist(rng);
  return Tensor(std::move(shape), std::move(data));
}

Tensor ConvLayer::operator()(const Bind& bind, const Tensor& x) const {
  const Tensor w = bind(*weight);
  const Tensor b = bias ? bind(*bias) : Tensor();
  const std::size_t k = w.dim(2);
  if (x.rank() != 4) throw ShapeError("conv layer expects [b,c,h,w], got " + to_string(x.shape()));
  return conv2d(x, w, b, stride, Padding::same(x.dim(2), x.dim(3), k, k, stride));
}

ConvLayer make_conv(ParamStore& store, const std::string& name, std::size_t in_channels,
                    std::size_t out_channels, std::size_t kernel, std::size_t stride, bool bias,
                    Rng& rng) {
  ConvLayer layer;
  const std::size_t fan_in = in_channels * kernel * kernel;
  layer.weight = &store.add(name + ".weight",
                            kaiming_uniform({out_channels, in_channels, kernel, kernel}, fan_in, rng));
  if (bias) layer.bias = &store.add(name + ".bias", Tensor::zeros({out_channels}));
  layer.stride = stride;
  return layer;
}

Tensor LayerNormParams::operator()(const Bind& bind, const Tensor& x, std::size_t axis) const {
  const Tensor b = beta ? bind(*beta) : Tensor::zeros(gamma->value.shape());
  return layer_norm(x, axis, bind(*gamma), b, eps);
}

LayerNormParams make_layer_norm(ParamStore& store, const std::string& name, std::size_t length,
                                bool shift) {
  LayerNormParams ln;
  ln.gamma = &store.add(name + ".gamma", Tensor::full({length}, 1.0));
  if (shift) ln.beta = &store.add(name + ".beta", Tensor::zeros({length}));
  return ln;
}

Parameter& make_gate(ParamStore& store, const std::string& name) {
  return store.add(name, Tensor::zeros({1}));
}

}  // namespace xing
