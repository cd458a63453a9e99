#include "xing/metrics.hpp"

#include <cmath>

namespace xing {

void SsimConfig::validate() const {
  if (window == 0 || window % 2 == 0) throw ContractError("ssim: window must be odd");
  if (!(sigma > 0) || !(k1 > 0) || !(k2 > 0) || !(data_range > 0)) {
    throw ContractError("ssim: sigma, K1, K2 and data_range must be positive");
  }
}

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> g(size);
  const double c = 0.5 * double(size - 1);
  double total = 0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = double(i) - c;
    g[i] = std::exp(-d * d / (2 * sigma * sigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

double ssim(const Tensor& x, const Tensor& y, const SsimConfig& cfg) {
  cfg.validate();
  if (x.shape() != y.shape() || x.rank() != 3) {
    throw ShapeError("ssim expects two [c,h,w] images of equal shape, got " + to_string(x.shape()) +
                     " and " + to_string(y.shape()));
  }
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), k = cfg.window;
  if (h < k || w < k) {
    throw ContractError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                        " is smaller than the " + std::to_string(k) + "x" + std::to_string(k) +
                        " window");
  }
  const auto g = gaussian_window(k, cfg.sigma);
  const double c1 = (cfg.k1 * cfg.data_range) * (cfg.k1 * cfg.data_range);
  const double c2 = (cfg.k2 * cfg.data_range) * (cfg.k2 * cfg.data_range);
  const std::size_t oh = h - k + 1, ow = w - k + 1;
  const auto xd = x.data(), yd = y.data();

  double total = 0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* X = xd.data() + ch * h * w;
    const double* Y = yd.data() + ch * h * w;
    double channel = 0;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (std::size_t a = 0; a < k; ++a) {
          for (std::size_t b = 0; b < k; ++b) {
            const double wgt = g[a] * g[b];
            const double xv = X[(i + a) * w + j + b], yv = Y[(i + a) * w + j + b];
            mx += wgt * xv;
            my += wgt * yv;
            xx += wgt * xv * xv;
            yy += wgt * yv * yv;
            xy += wgt * xv * yv;
          }
        }
        const double vx = xx - mx * mx, vy = yy - my * my, cov = xy - mx * my;
        channel += ((2 * mx * my + c1) * (2 * cov + c2)) /
                   ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
    }
    total += channel / double(oh * ow);
  }
  return total / double(c);
}

double mean_ssim(const Tensor& x, const Tensor& y, const SsimConfig& cfg) {
  if (x.shape() != y.shape() || x.rank() != 4) {
    throw ShapeError("mean_ssim expects two [b,c,h,w] batches of equal shape");
  }
  const std::size_t b = x.dim(0);
  const Shape item{x.dim(1), x.dim(2), x.dim(3)};
  const std::size_t n = numel(item);
  double total = 0;
  for (std::size_t i = 0; i < b; ++i) {
    const auto xs = x.data().subspan(i * n, n), ys = y.data().subspan(i * n, n);
    total += ssim(Tensor(item, {xs.begin(), xs.end()}), Tensor(item, {ys.begin(), ys.end()}), cfg);
  }
  return total / double(b);
}

}  // namespace xing
