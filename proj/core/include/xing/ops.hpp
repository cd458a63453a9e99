#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "xing/tensor.hpp"

// Differentiable tensor operations. Every function records itself on the
// graph of its tracked inputs (if any) and otherwise just computes values.

namespace xing {

// -- linear algebra ----------------------------------------------------------

/// [m,k]x[k,n], [b,m,k]x[b,k,n], or either side broadcast over the batch.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swaps the last two axes of a rank-2 or rank-3 tensor.
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

// -- convolution ---------------------------------------------------------------

struct Padding {
  std::size_t top = 0, bottom = 0, left = 0, right = 0;

  static Padding symmetric(std::size_t p) { return {p, p, p, p}; }
  /// Output size ceil(in / stride); the odd pixel of padding goes to the end.
  static Padding same(std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
                      std::size_t stride);
};

/// Cross-correlation. x:[b,ci,h,w], w:[co,ci,kh,kw], bias:[co] or undefined.
/// Throws ShapeError unless (h + pads - kh) is a multiple of stride.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t pad);
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              const Padding& pad);

// -- elementwise ---------------------------------------------------------------

// Binary ops broadcast numpy-style (trailing axes aligned, size-1 axes stretched).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, double s);
Tensor mul_scalar(const Tensor& x, double s);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);

// -- reductions ----------------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// -- normalization -------------------------------------------------------------

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
/// Normalizes each slice along `axis` (biased variance) then applies
/// gamma/beta, both of length shape[axis].
Tensor layer_norm(const Tensor& x, std::size_t axis, const Tensor& gamma, const Tensor& beta,
                  double eps);

// -- resampling (x is [b,c,h,w]) ----------------------------------------------

/// Bin i covers rows floor(i*h/oh) .. floor((i+1)*h/oh) - 1.
Tensor adaptive_avg_pool2d(const Tensor& x, std::size_t oh, std::size_t ow);
/// Half-pixel centres (align_corners = false), edge clamped.
Tensor upsample_bilinear(const Tensor& x, std::size_t oh, std::size_t ow);

// -- structure -----------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);

// -- losses --------------------------------------------------------------------

/// Mean binary cross-entropy of logits against a constant target in [0,1].
Tensor bce_with_logits(const Tensor& logits, double target);

// -- fault injection (verification harness only) --------------------------------

enum class Fault { none, softmax_backward_sign };
void set_fault(Fault f);
Fault active_fault();

/// While alive, abs and leaky_relu on this thread fold which side of zero each
/// element fell on into signature(). Equal signatures at two points mean no kink
/// lies between them, unless one was crossed an even number of times.
class KinkTrace {
 public:
  KinkTrace();
  ~KinkTrace();
  KinkTrace(const KinkTrace&) = delete;
  KinkTrace& operator=(const KinkTrace&) = delete;

  std::uint64_t signature() const { return hash_; }
  void fold(std::span<const double> x);

 private:
  std::uint64_t hash_;
  KinkTrace* previous_;
};

}  // namespace xing
