#include "xing/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

namespace xing {

namespace {

std::vector<std::size_t> probe_indices(std::size_t n, const GradCheckOptions& opt, std::uint64_t salt) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (opt.max_coords == 0 || n <= opt.max_coords) return all;
  std::vector<std::size_t> picked;
  std::mt19937_64 rng(opt.seed * 0x9e3779b97f4a7c15ULL + salt);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), opt.max_coords, rng);
  return picked;
}

double scalar_of(const Tensor& loss) {
  if (loss.numel() != 1) throw ContractError("grad_check: function must return a scalar");
  return loss.item();
}

std::string describe(const std::string& what, std::size_t i, double analytic, double numeric) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "[%zu] analytic=%.6e numeric=%.6e", i, analytic, numeric);
  return what + buf;
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                  const std::vector<Tensor>& inputs, const GradCheckOptions& opt) {
  Graph g;
  std::vector<Tensor> leaves;
  for (const auto& x : inputs) leaves.push_back(g.variable(x.detach()));
  g.backward(f(leaves));

  double worst = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = g.grad(leaves[k]);
    const auto base = inputs[k].data();
    for (std::size_t i : probe_indices(inputs[k].numel(), opt, k)) {
      auto eval = [&](double delta) {
        std::vector<double> v(base.begin(), base.end());
        v[i] += delta;
        std::vector<Tensor> xs;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          xs.push_back(j == k ? Tensor(inputs[k].shape(), std::move(v)) : inputs[j].detach());
        }
        return scalar_of(f(xs));
      };
      const double numeric = (eval(opt.eps) - eval(-opt.eps)) / (2 * opt.eps);
      const double e = relative_error(analytic[i], numeric);
      if (e > worst && opt.worst_at) *opt.worst_at = describe("input" + std::to_string(k), i, analytic[i], numeric);
      worst = std::max(worst, e);
    }
  }
  return worst;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  const GradCheckOptions& opt) {
  return grad_check([&](const std::vector<Tensor>& xs) { return f(xs[0]); },
                    std::vector<Tensor>{x}, opt);
}

double grad_check_params(const std::function<Tensor(const Bind&)>& f,
                         const std::vector<Parameter*>& params, const GradCheckOptions& opt) {
  for (Parameter* p : params) p->zero_grad();
  {
    Graph g;
    g.backward(f(Bind(&g)));
  }
  double worst = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    const Tensor original = p.value;
    const auto base = original.data();
    for (std::size_t i : probe_indices(original.numel(), opt, 1000 + k)) {
      auto eval = [&](double delta) {
        std::vector<double> v(base.begin(), base.end());
        v[i] += delta;
        p.assign(std::move(v));
        return scalar_of(f(Bind::frozen()));
      };
      const double plus = eval(opt.eps);
      const double minus = eval(-opt.eps);
      p.assign({base.begin(), base.end()});
      const double numeric = (plus - minus) / (2 * opt.eps);
      const double e = relative_error(p.grad[i], numeric);
      if (e > worst && opt.worst_at) *opt.worst_at = describe(p.name, i, p.grad[i], numeric);
      worst = std::max(worst, e);
    }
  }
  return worst;
}

Derivative ridders_derivative(const std::function<double(double)>& f, double h0, std::size_t levels) {
  constexpr double kShrink = 2.0, kSafe = 2.0;
  // Rounding in f is amplified by 1/h; the tableau alone cannot see it once the
  // differences are quantized, so each entry carries this floor.
  constexpr double kRoundoff = 16 * std::numeric_limits<double>::epsilon();
  const std::size_t n = std::max<std::size_t>(levels, 2);
  std::vector<std::vector<double>> a(n, std::vector<double>(n));
  double h = h0, scale = 0;
  const auto central = [&] {
    const double up = f(h), down = f(-h);
    scale = std::max({scale, std::abs(up), std::abs(down)});
    return (up - down) / (2 * h);
  };
  a[0][0] = central();
  Derivative best{a[0][0], INFINITY};
  for (std::size_t i = 1; i < n; ++i) {
    h /= kShrink;
    a[0][i] = central();
    const double floor = kRoundoff * scale / h;
    double fac = kShrink * kShrink;
    for (std::size_t j = 1; j <= i; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1);
      fac *= kShrink * kShrink;
      const double e = std::max({std::abs(a[j][i] - a[j - 1][i]),
                                 std::abs(a[j][i] - a[j - 1][i - 1]), floor});
      if (e <= best.error) best = {a[j][i], e};
    }
    // Higher orders stopped helping: roundoff or a kink dominates from here on.
    if (std::abs(a[i][i] - a[i - 1][i - 1]) >= kSafe * best.error) break;
  }
  return best;
}

ExtrapolatedCheck grad_check_params_extrapolated(const std::function<Tensor(const Bind&)>& f,
                                                 const std::vector<Parameter*>& params, double tol,
                                                 const GradCheckOptions& opt) {
  constexpr double kMinStep = 1e-9;
  for (Parameter* p : params) p->zero_grad();
  std::uint64_t base_signature = 0;
  {
    Graph g;
    KinkTrace trace;
    g.backward(f(Bind(&g)));
    base_signature = trace.signature();
  }
  ExtrapolatedCheck out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    const Tensor original = p.value;
    const auto base = original.data();
    for (std::size_t i : probe_indices(original.numel(), opt, 1000 + k)) {
      // Shrink the starting step until no evaluation lands across a kink.
      bool crossed = true;
      Derivative d;
      for (double h = opt.eps; crossed && h >= kMinStep; h /= 8) {
        crossed = false;
        d = ridders_derivative(
            [&](double delta) {
              std::vector<double> v(base.begin(), base.end());
              v[i] += delta;
              p.assign(std::move(v));
              KinkTrace trace;
              const double y = scalar_of(f(Bind::frozen()));
              crossed = crossed || trace.signature() != base_signature;
              return y;
            },
            h);
      }
      p.assign({base.begin(), base.end()});
      ++out.probed;
      const double band = tol * std::max({std::abs(p.grad[i]), std::abs(d.value), 1e-8});
      if (crossed || !(d.error <= 0.5 * band)) {
        ++out.unresolved;
        continue;
      }
      const double e = relative_error(p.grad[i], d.value);
      if (e >= out.max_error) out.worst_at = describe(p.name, i, p.grad[i], d.value);
      out.max_error = std::max(out.max_error, e);
    }
  }
  return out;
}

}  // namespace xing
