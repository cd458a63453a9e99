#pragma once

#include <random>
#include <vector>

#include "xing/layers.hpp"
#include "xing/tensor.hpp"

namespace xing::test {

inline Tensor uniform(const Shape& s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(numel(s));
  for (double& x : v) x = d(rng);
  return Tensor(s, std::move(v));
}

inline std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace xing::test
