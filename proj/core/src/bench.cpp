#include "xing/bench.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <random>

namespace xing {

namespace {

template <class F>
double best_of(std::size_t reps, F&& f) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(reps, 1); ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

Tensor random_code(std::size_t c, std::size_t h, std::size_t w, Rng& rng) {
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> v(c * h * w);
  for (double& x : v) x = d(rng);
  return Tensor({1, c, h, w}, std::move(v));
}

}  // namespace

AttentionBench bench_attention(std::size_t h, std::size_t w, const PyramidSpec& pyramid,
                               std::size_t channels, std::size_t reps) {
  pyramid.validate();
  Rng rng(42);
  ParamStore store;
  const SAParams sa = make_sa(store, "sa", channels, rng);
  const EMSAParams emsa = make_emsa(store, "emsa", channels, h, w, pyramid, 64, rng);
  const Tensor fi = random_code(channels, h, w, rng), fp = random_code(channels, h, w, rng);
  const Bind fz = Bind::frozen();

  AttentionBench out;
  const auto pooled_i = pyramid_pool(fi, pyramid);
  const auto pooled_p = pyramid_pool(fp, pyramid);
  for (std::size_t k = 0; k < pyramid.factors.size(); ++k) {
    ScaleCost sc;
    sc.factor = pyramid.factors[k];
    std::tie(sc.height, sc.width) = pyramid.level_size(k, h, w);
    sc.tokens = sc.height * sc.width;
    sc.corr_entries = sc.tokens * sc.tokens;
    const auto& scale = emsa.scales[k];
    sc.seconds = best_of(reps, [&] {
      const Tensor q = reshape(scale.query(fz, pooled_i[k]), {1, channels, sc.tokens});
      const Tensor key = reshape(scale.key(fz, pooled_p[k]), {1, channels, sc.tokens});
      const Tensor corr = softmax(matmul(transpose(q), key), 2);
      (void)corr;
    });
    out.scales.push_back(sc);
  }
  out.single_scale_seconds = best_of(reps, [&] { (void)sa_forward(fz, fi, fp, sa); });
  out.multi_scale_seconds = best_of(reps, [&] { (void)emsa_forward(fz, fi, fp, emsa); });
  return out;
}

}  // namespace xing
