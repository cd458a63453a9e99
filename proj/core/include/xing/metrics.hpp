#pragma once

#include <vector>

#include "xing/tensor.hpp"

namespace xing {

struct SsimConfig {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 2.0;  // images in [-1,1]

  void validate() const;
};

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
std::vector<double> gaussian_window(std::size_t size, double sigma);

/// Mean SSIM over channels and valid (fully inside) window positions.
/// x, y are [c,h,w] with h, w >= window.
double ssim(const Tensor& x, const Tensor& y, const SsimConfig& cfg = {});

/// Mean of per-item SSIM over a [b,c,h,w] batch.
double mean_ssim(const Tensor& x, const Tensor& y, const SsimConfig& cfg = {});

}  // namespace xing
