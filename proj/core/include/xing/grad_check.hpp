#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "xing/graph.hpp"
#include "xing/ops.hpp"

namespace xing {

struct GradCheckOptions {
  double eps = 1e-5;
  /// Coordinates probed per tensor; 0 probes all of them.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
  /// If set, receives "<input or parameter>[index]" of the worst coordinate.
  std::string* worst_at = nullptr;
};

/// |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

/// Max relative error between backward() and central differences over every
/// probed coordinate of every input. `f` must be scalar-valued and deterministic.
double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                  const std::vector<Tensor>& inputs, const GradCheckOptions& opt = {});
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  const GradCheckOptions& opt = {});

/// Same, perturbing parameter values in place (restored bitwise afterwards).
/// Zeroes the parameters' gradients.
double grad_check_params(const std::function<Tensor(const Bind&)>& f,
                         const std::vector<Parameter*>& params, const GradCheckOptions& opt = {});

struct Derivative {
  double value = 0;
  double error = 0;  // extrapolation's own error estimate
};

/// Ridders' extrapolation of central differences of `f` at 0, starting from
/// step `h0` and shrinking it by 2 per level.
Derivative ridders_derivative(const std::function<double(double)>& f, double h0,
                              std::size_t levels = 8);

struct ExtrapolatedCheck {
  double max_error = 0;
  std::size_t probed = 0;
  std::size_t unresolved = 0;  // estimate too uncertain to judge the tolerance
  std::string worst_at;
};

/// Parameter check against Ridders estimates (opt.eps is the initial step, cut
/// down until no evaluation crosses a kink; see KinkTrace).
/// A coordinate is scored only when the estimate's error is below half the
/// tolerance band; the others are counted in `unresolved`.
ExtrapolatedCheck grad_check_params_extrapolated(const std::function<Tensor(const Bind&)>& f,
                                                 const std::vector<Parameter*>& params, double tol,
                                                 const GradCheckOptions& opt = {});

}  // namespace xing
