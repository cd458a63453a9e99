#include "xing/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>

#include "xing/graph.hpp"
#include "xing/parallel.hpp"

namespace xing {

using detail::GradAccess;
using detail::record;
using Storage = std::shared_ptr<const std::vector<double>>;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

std::atomic<Fault> g_fault{Fault::none};

std::string shapes(const Tensor& a, const Tensor& b) {
  return to_string(a.shape()) + " and " + to_string(b.shape());
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(x.shape()));
  }
}

// Numpy-style broadcast of two shapes, right aligned.
struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a, stride_b;
};

std::vector<std::size_t> padded_strides(const Shape& s, std::size_t rank, const Shape& out) {
  std::vector<std::size_t> strides(rank, 0);
  std::size_t acc = 1;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const std::size_t src = s.size() - 1 - i;
    const std::size_t dst = rank - 1 - i;
    strides[dst] = (s[src] == 1 && out[dst] != 1) ? 0 : acc;
    acc *= s[src];
  }
  return strides;
}

Broadcast broadcast(const Tensor& a, const Tensor& b, const char* op) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  const std::size_t rank = std::max(sa.size(), sb.size());
  Broadcast bc;
  bc.out.assign(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < sa.size() ? sa[sa.size() - 1 - i] : 1;
    const std::size_t db = i < sb.size() ? sb[sb.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shapes(a, b));
    }
    bc.out[rank - 1 - i] = std::max(da, db);
  }
  bc.stride_a = padded_strides(sa, rank, bc.out);
  bc.stride_b = padded_strides(sb, rank, bc.out);
  return bc;
}

template <class F>
void broadcast_loop(const Broadcast& bc, F&& f) {
  const std::size_t rank = bc.out.size();
  const std::size_t n = numel(bc.out);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < n; ++o) {
    f(o, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += bc.stride_a[d];
      ib += bc.stride_b[d];
      if (idx[d] < bc.out[d]) break;
      ia -= bc.stride_a[d] * bc.out[d];
      ib -= bc.stride_b[d] * bc.out[d];
      idx[d] = 0;
    }
  }
}

enum class BinaryKind { add, sub, mul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind) {
  const char* op = kind == BinaryKind::add ? "add" : kind == BinaryKind::sub ? "sub" : "mul";
  Storage da = a.storage(), db = b.storage();
  auto apply = [kind](double x, double y) {
    switch (kind) {
      case BinaryKind::add: return x + y;
      case BinaryKind::sub: return x - y;
      case BinaryKind::mul: return x * y;
    }
    return 0.0;
  };

  if (a.shape() == b.shape()) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply((*da)[i], (*db)[i]);
    return record(op, a.shape(), std::move(out), {&a, &b},
                  [da, db, kind](std::span<const double> g, GradAccess& acc) {
                    if (acc.wants(0)) {
                      auto ga = acc.grad(0);
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        ga[i] += kind == BinaryKind::mul ? g[i] * (*db)[i] : g[i];
                      }
                    }
                    if (acc.wants(1)) {
                      auto gb = acc.grad(1);
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        gb[i] += kind == BinaryKind::mul   ? g[i] * (*da)[i]
                                 : kind == BinaryKind::sub ? -g[i]
                                                           : g[i];
                      }
                    }
                  });
  }

  auto bc = std::make_shared<Broadcast>(broadcast(a, b, op));
  std::vector<double> out(numel(bc->out));
  broadcast_loop(*bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    out[o] = apply((*da)[ia], (*db)[ib]);
  });
  return record(op, bc->out, std::move(out), {&a, &b},
                [da, db, kind, bc](std::span<const double> g, GradAccess& acc) {
                  const bool wa = acc.wants(0), wb = acc.wants(1);
                  std::span<double> ga = wa ? acc.grad(0) : std::span<double>();
                  std::span<double> gb = wb ? acc.grad(1) : std::span<double>();
                  broadcast_loop(*bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                    if (wa) ga[ia] += kind == BinaryKind::mul ? g[o] * (*db)[ib] : g[o];
                    if (wb) {
                      gb[ib] += kind == BinaryKind::mul   ? g[o] * (*da)[ia]
                                : kind == BinaryKind::sub ? -g[o]
                                                          : g[o];
                    }
                  });
                });
}

// Unary op with derivative expressed through input x and output y.
template <class Fwd, class Deriv>
Tensor unary(const char* op, const Tensor& x, Fwd fwd, Deriv deriv) {
  Storage dx = x.storage();
  auto out = std::make_shared<std::vector<double>>(x.numel());
  for (std::size_t i = 0; i < out->size(); ++i) (*out)[i] = fwd((*dx)[i]);
  Storage dy = out;
  return record(op, x.shape(), *out, {&x},
                [dx, dy, deriv](std::span<const double> g, GradAccess& acc) {
                  auto gx = acc.grad(0);
                  for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv((*dx)[i], (*dy)[i]);
                });
}

// outer x len x inner decomposition of an axis.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                     to_string(s));
  }
  AxisSplit a;
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  a.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

// -- conv helpers --

struct ConvGeom {
  std::size_t b, ci, h, w, co, kh, kw, oh, ow, stride;
  Padding pad;
  std::size_t k() const { return ci * kh * kw; }
  std::size_t p() const { return oh * ow; }
  bool pointwise() const {
    return kh == 1 && kw == 1 && stride == 1 && pad.top == 0 && pad.bottom == 0 && pad.left == 0 &&
           pad.right == 0;
  }
};

void im2col(const double* x, const ConvGeom& g, double* col) {
  const std::size_t P = g.p();
  for (std::size_t c = 0; c < g.ci; ++c) {
    const double* xc = x + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        double* row = col + ((c * g.kh + ky) * g.kw + kx) * P;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad.top);
          double* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.ow, 0.0);
            continue;
          }
          const double* src = xc + iy * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad.left);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im(const double* col, const ConvGeom& g, double* x) {
  const std::size_t P = g.p();
  for (std::size_t c = 0; c < g.ci; ++c) {
    double* xc = x + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const double* row = col + ((c * g.kh + ky) * g.kw + kx) * P;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad.top);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          double* dst = xc + iy * g.w;
          const double* src = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad.left);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t pa, std::size_t pb,
                     std::size_t stride, const char* what) {
  const std::size_t span = in + pa + pb;
  if (span < k || (span - k) % stride != 0) {
    throw ShapeError(std::string("conv2d: non-integral output ") + what + " for input " +
                     std::to_string(in) + ", kernel " + std::to_string(k) + ", padding " +
                     std::to_string(pa) + "+" + std::to_string(pb) + ", stride " +
                     std::to_string(stride));
  }
  return (span - k) / stride + 1;
}

// Bilinear source coordinates for one axis.
struct Lerp {
  std::vector<std::size_t> i0, i1;
  std::vector<double> t;
};

Lerp bilinear_axis(std::size_t in, std::size_t out) {
  Lerp l;
  l.i0.resize(out);
  l.i1.resize(out);
  l.t.resize(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    std::size_t i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    l.i0[o] = i0;
    l.i1[o] = std::min(i0 + 1, in - 1);
    l.t[o] = src - static_cast<double>(i0);
  }
  return l;
}

Tensor copy_op(const char* op, const Tensor& x) {
  return record(op, x.shape(), std::vector<double>(x.data().begin(), x.data().end()), {&x},
                [](std::span<const double> g, GradAccess& acc) {
                  auto gx = acc.grad(0);
                  for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                });
}

}  // namespace

void set_fault(Fault f) { g_fault.store(f); }
Fault active_fault() { return g_fault.load(); }

namespace {
thread_local KinkTrace* t_trace = nullptr;
}

KinkTrace::KinkTrace() : hash_(0xcbf29ce484222325ULL), previous_(t_trace) { t_trace = this; }
KinkTrace::~KinkTrace() { t_trace = previous_; }

void KinkTrace::fold(std::span<const double> x) {
  for (std::size_t i = 0; i < x.size(); i += 64) {
    std::uint64_t bits = 0;
    const std::size_t n = std::min<std::size_t>(64, x.size() - i);
    for (std::size_t j = 0; j < n; ++j) bits |= std::uint64_t{x[i + j] > 0} << j;
    hash_ = (hash_ ^ bits) * 0x100000001b3ULL;
    hash_ ^= hash_ >> 29;
  }
  if (previous_) previous_->fold(x);
}

// -- linear algebra ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if ((a.rank() != 2 && a.rank() != 3) || (b.rank() != 2 && b.rank() != 3)) {
    throw ShapeError("matmul: operands must be rank 2 or 3, got " + shapes(a, b));
  }
  const std::size_t m = a.dim(a.rank() - 2), k = a.dim(a.rank() - 1);
  const std::size_t k2 = b.dim(b.rank() - 2), n = b.dim(b.rank() - 1);
  const std::size_t ba = a.rank() == 3 ? a.dim(0) : 1;
  const std::size_t bb = b.rank() == 3 ? b.dim(0) : 1;
  if (k != k2 || (a.rank() == 3 && b.rank() == 3 && ba != bb)) {
    throw ShapeError("matmul: incompatible shapes " + shapes(a, b));
  }
  const std::size_t batch = std::max(ba, bb);
  const bool batched = a.rank() == 3 || b.rank() == 3;
  const std::size_t sa = ba > 1 ? m * k : 0;  // per-batch offsets; 0 when broadcast
  const std::size_t sb = bb > 1 ? k * n : 0;

  Storage da = a.storage(), db = b.storage();
  std::vector<double> out(batch * m * n);
  parallel_for(batch, [&](std::size_t i) {
    Map(out.data() + i * m * n, m, n).noalias() =
        MapC(da->data() + i * sa, m, k) * MapC(db->data() + i * sb, k, n);
  });

  Shape shape = batched ? Shape{batch, m, n} : Shape{m, n};
  return record("matmul", shape, std::move(out), {&a, &b},
                [=](std::span<const double> g, GradAccess& acc) {
                  if (acc.wants(0)) {
                    auto ga = acc.grad(0);
                    if (sa != 0 || batch == 1) {
                      parallel_for(batch, [&](std::size_t i) {
                        Map(ga.data() + i * sa, m, k).noalias() +=
                            MapC(g.data() + i * m * n, m, n) *
                            MapC(db->data() + i * sb, k, n).transpose();
                      });
                    } else {
                      std::vector<RowMat> part(batch);
                      parallel_for(batch, [&](std::size_t i) {
                        part[i] = MapC(g.data() + i * m * n, m, n) *
                                  MapC(db->data() + i * sb, k, n).transpose();
                      });
                      Map dst(ga.data(), m, k);
                      for (const auto& p : part) dst += p;
                    }
                  }
                  if (acc.wants(1)) {
                    auto gb = acc.grad(1);
                    if (sb != 0 || batch == 1) {
                      parallel_for(batch, [&](std::size_t i) {
                        Map(gb.data() + i * sb, k, n).noalias() +=
                            MapC(da->data() + i * sa, m, k).transpose() *
                            MapC(g.data() + i * m * n, m, n);
                      });
                    } else {
                      std::vector<RowMat> part(batch);
                      parallel_for(batch, [&](std::size_t i) {
                        part[i] = MapC(da->data() + i * sa, m, k).transpose() *
                                  MapC(g.data() + i * m * n, m, n);
                      });
                      Map dst(gb.data(), k, n);
                      for (const auto& p : part) dst += p;
                    }
                  }
                });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2 && x.rank() != 3) {
    throw ShapeError("transpose: expected rank 2 or 3, got " + to_string(x.shape()));
  }
  const std::size_t batch = x.rank() == 3 ? x.dim(0) : 1;
  const std::size_t r = x.dim(x.rank() - 2), c = x.dim(x.rank() - 1);
  const auto src = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = src[b * r * c + i * c + j];
    }
  }
  Shape shape = x.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  return record("transpose", shape, std::move(out), {&x},
                [=](std::span<const double> g, GradAccess& acc) {
                  auto gx = acc.grad(0);
                  for (std::size_t b = 0; b < batch; ++b) {
                    for (std::size_t i = 0; i < r; ++i) {
                      for (std::size_t j = 0; j < c; ++j) {
                        gx[b * r * c + i * c + j] += g[b * r * c + j * r + i];
                      }
                    }
                  }
                });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  Tensor view = Tensor::from_storage(shape, x.storage());
  if (!x.requires_grad()) return view;
  detail::Node node;
  node.op = "reshape";
  node.numel = x.numel();
  node.parents = {x.node()};
  node.backward = [](std::span<const double> g, GradAccess& acc) {
    auto gx = acc.grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  };
  const int id = x.tape()->add(std::move(node));
  return view.with_node(x.tape(), id);
}

// -- convolution ---------------------------------------------------------------

Padding Padding::same(std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
                      std::size_t stride) {
  auto one = [stride](std::size_t in, std::size_t k) {
    const std::size_t out = (in + stride - 1) / stride;
    const std::size_t need = (out - 1) * stride + k;
    const std::size_t total = need > in ? need - in : 0;
    return std::pair{total / 2, total - total / 2};
  };
  const auto [t, b] = one(h, kh);
  const auto [l, r] = one(w, kw);
  return {t, b, l, r};
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t pad) {
  return conv2d(x, w, bias, stride, Padding::symmetric(pad));
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              const Padding& pad) {
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d weight");
  if (stride == 0) throw ShapeError("conv2d: stride must be >= 1");
  if (x.dim(1) != w.dim(1)) {
    throw ShapeError("conv2d: input channels " + std::to_string(x.dim(1)) +
                     " do not match weight " + to_string(w.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != w.dim(0))) {
    throw ShapeError("conv2d: bias " + to_string(bias.shape()) + " does not match weight " +
                     to_string(w.shape()));
  }
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3), 0, 0, stride, pad};
  g.oh = conv_out(g.h, g.kh, pad.top, pad.bottom, stride, "height");
  g.ow = conv_out(g.w, g.kw, pad.left, pad.right, stride, "width");
  const std::size_t K = g.k(), P = g.p(), in_sz = g.ci * g.h * g.w, out_sz = g.co * P;

  Storage dx = x.storage(), dw = w.storage();
  Storage db = bias.defined() ? bias.storage() : nullptr;
  std::vector<double> out(g.b * out_sz);
  parallel_for(g.b, [&](std::size_t n) {
    Map y(out.data() + n * out_sz, g.co, P);
    if (g.pointwise()) {
      y.noalias() = MapC(dw->data(), g.co, K) * MapC(dx->data() + n * in_sz, K, P);
    } else {
      std::vector<double> col(K * P);
      im2col(dx->data() + n * in_sz, g, col.data());
      y.noalias() = MapC(dw->data(), g.co, K) * MapC(col.data(), K, P);
    }
    if (db) {
      for (std::size_t c = 0; c < g.co; ++c) y.row(c).array() += (*db)[c];
    }
  });

  return record(
      "conv2d", {g.b, g.co, g.oh, g.ow}, std::move(out), {&x, &w, &bias},
      [g, dx, dw, K, P, in_sz, out_sz](std::span<const double> grad, GradAccess& acc) {
        const bool want_x = acc.wants(0), want_w = acc.wants(1), want_b = acc.wants(2);
        std::span<double> gx = want_x ? acc.grad(0) : std::span<double>();
        std::vector<RowMat> gw_part(want_w ? g.b : 0);
        parallel_for(g.b, [&](std::size_t n) {
          MapC gy(grad.data() + n * out_sz, g.co, P);
          std::vector<double> col;
          if (want_w) {
            if (g.pointwise()) {
              gw_part[n] = gy * MapC(dx->data() + n * in_sz, K, P).transpose();
            } else {
              col.resize(K * P);
              im2col(dx->data() + n * in_sz, g, col.data());
              gw_part[n] = gy * MapC(col.data(), K, P).transpose();
            }
          }
          if (want_x) {
            if (g.pointwise()) {
              Map(gx.data() + n * in_sz, K, P).noalias() += MapC(dw->data(), g.co, K).transpose() * gy;
            } else {
              col.resize(K * P);
              Map(col.data(), K, P).noalias() = MapC(dw->data(), g.co, K).transpose() * gy;
              col2im(col.data(), g, gx.data() + n * in_sz);
            }
          }
        });
        if (want_w) {
          Map dst(acc.grad(1).data(), g.co, K);
          for (const auto& p : gw_part) dst += p;
        }
        if (want_b) {
          auto gb = acc.grad(2);
          for (std::size_t n = 0; n < g.b; ++n) {
            for (std::size_t c = 0; c < g.co; ++c) {
              const double* row = grad.data() + n * out_sz + c * P;
              double s = 0.0;
              for (std::size_t i = 0; i < P; ++i) s += row[i];
              gb[c] += s;
            }
          }
        }
      });
}

// -- elementwise ---------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::mul); }

Tensor add_scalar(const Tensor& x, double s) {
  return unary("add_scalar", x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double s) {
  return unary("mul_scalar", x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor tanh(const Tensor& x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  if (t_trace) t_trace->fold(x.data());
  return unary(
      "leaky_relu", x, [slope](double v) { return v > 0 ? v : slope * v; },
      [slope](double v, double) { return v > 0 ? 1.0 : slope; });
}

Tensor abs(const Tensor& x) {
  if (t_trace) t_trace->fold(x.data());
  return unary(
      "abs", x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& x) {
  return unary("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

// -- reductions ----------------------------------------------------------------

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return record("sum", {1}, {s}, {&x}, [](std::span<const double> g, GradAccess& acc) {
    auto gx = acc.grad(0);
    for (auto& v : gx) v += g[0];
  });
}

Tensor mean(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const double n = static_cast<double>(x.numel());
  return record("mean", {1}, {s / n}, {&x}, [n](std::span<const double> g, GradAccess& acc) {
    auto gx = acc.grad(0);
    const double d = g[0] / n;
    for (auto& v : gx) v += d;
  });
}

// -- normalization -------------------------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "softmax");
  const auto src = x.data();
  auto y = std::make_shared<std::vector<double>>(x.numel());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < s.len; ++i) mx = std::max(mx, src[base + i * s.inner]);
      double z = 0.0;
      for (std::size_t i = 0; i < s.len; ++i) {
        const double e = std::exp(src[base + i * s.inner] - mx);
        (*y)[base + i * s.inner] = e;
        z += e;
      }
      for (std::size_t i = 0; i < s.len; ++i) (*y)[base + i * s.inner] /= z;
    }
  }
  Storage ys = y;
  return record("softmax", x.shape(), *y, {&x}, [ys, s](std::span<const double> g, GradAccess& acc) {
    auto gx = acc.grad(0);
    const double sign = active_fault() == Fault::softmax_backward_sign ? -1.0 : 1.0;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.len * s.inner + in;
        double dot = 0.0;
        for (std::size_t i = 0; i < s.len; ++i) {
          dot += g[base + i * s.inner] * (*ys)[base + i * s.inner];
        }
        for (std::size_t i = 0; i < s.len; ++i) {
          const std::size_t k = base + i * s.inner;
          gx[k] += sign * (*ys)[k] * (g[k] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, std::size_t axis, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  const AxisSplit s = split_axis(x.shape(), axis, "layer_norm");
  if (gamma.numel() != s.len || beta.numel() != s.len) {
    throw ShapeError("layer_norm: gamma/beta " + shapes(gamma, beta) + " must have length " +
                     std::to_string(s.len));
  }
  const auto src = x.data();
  const auto gm = gamma.data();
  const auto bt = beta.data();
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(s.outer * s.inner);
  std::vector<double> out(x.numel());
  const double len = static_cast<double>(s.len);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mu = 0.0;
      for (std::size_t i = 0; i < s.len; ++i) mu += src[base + i * s.inner];
      mu /= len;
      double var = 0.0;
      for (std::size_t i = 0; i < s.len; ++i) {
        const double d = src[base + i * s.inner] - mu;
        var += d * d;
      }
      var /= len;
      const double r = 1.0 / std::sqrt(var + eps);
      (*inv_std)[o * s.inner + in] = r;
      for (std::size_t i = 0; i < s.len; ++i) {
        const std::size_t k = base + i * s.inner;
        const double xh = (src[k] - mu) * r;
        (*xhat)[k] = xh;
        out[k] = gm[i] * xh + bt[i];
      }
    }
  }
  Storage xh = xhat, rs = inv_std, gs = gamma.storage();
  return record(
      "layer_norm", x.shape(), std::move(out), {&x, &gamma, &beta},
      [xh, rs, gs, s, len](std::span<const double> g, GradAccess& acc) {
        const bool wx = acc.wants(0), wg = acc.wants(1), wb = acc.wants(2);
        std::span<double> gx = wx ? acc.grad(0) : std::span<double>();
        std::span<double> gg = wg ? acc.grad(1) : std::span<double>();
        std::span<double> gb = wb ? acc.grad(2) : std::span<double>();
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.len * s.inner + in;
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t i = 0; i < s.len; ++i) {
              const std::size_t k = base + i * s.inner;
              const double dxh = g[k] * (*gs)[i];
              m1 += dxh;
              m2 += dxh * (*xh)[k];
              if (wg) gg[i] += g[k] * (*xh)[k];
              if (wb) gb[i] += g[k];
            }
            if (!wx) continue;
            m1 /= len;
            m2 /= len;
            const double r = (*rs)[o * s.inner + in];
            for (std::size_t i = 0; i < s.len; ++i) {
              const std::size_t k = base + i * s.inner;
              gx[k] += r * (g[k] * (*gs)[i] - m1 - (*xh)[k] * m2);
            }
          }
        }
      });
}

// -- resampling ---------------------------------------------------------------

Tensor adaptive_avg_pool2d(const Tensor& x, std::size_t oh, std::size_t ow) {
  require_rank(x, 4, "adaptive_avg_pool2d");
  const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (oh < 1 || ow < 1 || oh > h || ow > w) {
    throw ShapeError("adaptive_avg_pool2d: output " + std::to_string(oh) + "x" +
                     std::to_string(ow) + " invalid for input " + to_string(x.shape()));
  }
  if (oh == h && ow == w) return copy_op("adaptive_avg_pool2d", x);
  auto edges = [](std::size_t in, std::size_t out) {
    std::vector<std::size_t> e(out + 1);
    for (std::size_t i = 0; i <= out; ++i) e[i] = i * in / out;
    return e;
  };
  const auto ey = edges(h, oh), ex = edges(w, ow);
  const auto src = x.data();
  std::vector<double> out(b * c * oh * ow);
  for (std::size_t m = 0; m < b * c; ++m) {
    const double* plane = src.data() + m * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        double s = 0.0;
        for (std::size_t y = ey[i]; y < ey[i + 1]; ++y) {
          for (std::size_t xx = ex[j]; xx < ex[j + 1]; ++xx) s += plane[y * w + xx];
        }
        const double cnt = static_cast<double>((ey[i + 1] - ey[i]) * (ex[j + 1] - ex[j]));
        out[(m * oh + i) * ow + j] = s / cnt;
      }
    }
  }
  return record("adaptive_avg_pool2d", {b, c, oh, ow}, std::move(out), {&x},
                [=](std::span<const double> g, GradAccess& acc) {
                  auto gx = acc.grad(0);
                  for (std::size_t m = 0; m < b * c; ++m) {
                    for (std::size_t i = 0; i < oh; ++i) {
                      for (std::size_t j = 0; j < ow; ++j) {
                        const double cnt =
                            static_cast<double>((ey[i + 1] - ey[i]) * (ex[j + 1] - ex[j]));
                        const double d = g[(m * oh + i) * ow + j] / cnt;
                        for (std::size_t y = ey[i]; y < ey[i + 1]; ++y) {
                          for (std::size_t xx = ex[j]; xx < ex[j + 1]; ++xx) {
                            gx[(m * h + y) * w + xx] += d;
                          }
                        }
                      }
                    }
                  }
                });
}

Tensor upsample_bilinear(const Tensor& x, std::size_t oh, std::size_t ow) {
  require_rank(x, 4, "upsample_bilinear");
  if (oh < 1 || ow < 1) throw ShapeError("upsample_bilinear: output size must be >= 1");
  const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (oh == h && ow == w) return copy_op("upsample_bilinear", x);
  auto ly = std::make_shared<Lerp>(bilinear_axis(h, oh));
  auto lx = std::make_shared<Lerp>(bilinear_axis(w, ow));
  const auto src = x.data();
  std::vector<double> out(b * c * oh * ow);
  for (std::size_t m = 0; m < b * c; ++m) {
    const double* p = src.data() + m * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      const double* r0 = p + ly->i0[i] * w;
      const double* r1 = p + ly->i1[i] * w;
      const double ty = ly->t[i];
      for (std::size_t j = 0; j < ow; ++j) {
        const std::size_t x0 = lx->i0[j], x1 = lx->i1[j];
        const double tx = lx->t[j];
        const double top = r0[x0] + tx * (r0[x1] - r0[x0]);
        const double bottom = r1[x0] + tx * (r1[x1] - r1[x0]);
        out[(m * oh + i) * ow + j] = top + ty * (bottom - top);
      }
    }
  }
  return record("upsample_bilinear", {b, c, oh, ow}, std::move(out), {&x},
                [=](std::span<const double> g, GradAccess& acc) {
                  auto gx = acc.grad(0);
                  for (std::size_t m = 0; m < b * c; ++m) {
                    double* p = gx.data() + m * h * w;
                    for (std::size_t i = 0; i < oh; ++i) {
                      const double ty = ly->t[i];
                      double* r0 = p + ly->i0[i] * w;
                      double* r1 = p + ly->i1[i] * w;
                      for (std::size_t j = 0; j < ow; ++j) {
                        const double tx = lx->t[j];
                        const double v = g[(m * oh + i) * ow + j];
                        r0[lx->i0[j]] += v * (1 - tx) * (1 - ty);
                        r0[lx->i1[j]] += v * tx * (1 - ty);
                        r1[lx->i0[j]] += v * (1 - tx) * ty;
                        r1[lx->i1[j]] += v * tx * ty;
                      }
                    }
                  }
                });
}

// -- structure -----------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
  if (xs.empty()) throw ContractError("concat: empty input list");
  const Shape& ref = xs.front().shape();
  if (axis >= ref.size()) throw ShapeError("concat: axis out of range for " + to_string(ref));
  std::vector<std::size_t> lens;
  std::size_t total = 0;
  for (const auto& t : xs) {
    if (t.rank() != ref.size()) throw ShapeError("concat: rank mismatch " + shapes(xs.front(), t));
    for (std::size_t d = 0; d < ref.size(); ++d) {
      if (d != axis && t.dim(d) != ref[d]) {
        throw ShapeError("concat: non-axis dims differ " + shapes(xs.front(), t));
      }
    }
    lens.push_back(t.dim(axis));
    total += t.dim(axis);
  }
  Shape shape = ref;
  shape[axis] = total;
  const AxisSplit s = split_axis(shape, axis, "concat");
  std::vector<double> out(numel(shape));
  std::size_t offset = 0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const auto src = xs[t].data();
    const std::size_t chunk = lens[t] * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(src.data() + o * chunk, chunk, out.data() + o * total * s.inner + offset * s.inner);
    }
    offset += lens[t];
  }
  std::vector<const Tensor*> inputs;
  for (const auto& t : xs) inputs.push_back(&t);
  return record("concat", shape, std::move(out), inputs,
                [lens, s, total](std::span<const double> g, GradAccess& acc) {
                  std::size_t offset = 0;
                  for (std::size_t t = 0; t < lens.size(); ++t) {
                    const std::size_t chunk = lens[t] * s.inner;
                    if (acc.wants(t)) {
                      auto gx = acc.grad(t);
                      for (std::size_t o = 0; o < s.outer; ++o) {
                        const double* src = g.data() + o * total * s.inner + offset * s.inner;
                        double* dst = gx.data() + o * chunk;
                        for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                      }
                    }
                    offset += lens[t];
                  }
                });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  const AxisSplit s = split_axis(x.shape(), axis, "slice");
  if (length == 0 || start + length > s.len) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") out of bounds for " + to_string(x.shape()));
  }
  Shape shape = x.shape();
  shape[axis] = length;
  const auto src = x.data();
  const std::size_t chunk = length * s.inner;
  std::vector<double> out(numel(shape));
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(src.data() + (o * s.len + start) * s.inner, chunk, out.data() + o * chunk);
  }
  return record("slice", shape, std::move(out), {&x},
                [s, start, chunk](std::span<const double> g, GradAccess& acc) {
                  auto gx = acc.grad(0);
                  for (std::size_t o = 0; o < s.outer; ++o) {
                    double* dst = gx.data() + (o * s.len + start) * s.inner;
                    const double* src = g.data() + o * chunk;
                    for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                  }
                });
}

// -- losses --------------------------------------------------------------------

Tensor bce_with_logits(const Tensor& logits, double target) {
  Storage dl = logits.storage();
  double s = 0.0;
  for (double x : *dl) s += std::max(x, 0.0) - x * target + std::log1p(std::exp(-std::abs(x)));
  const double n = static_cast<double>(logits.numel());
  return record("bce_with_logits", {1}, {s / n}, {&logits},
                [dl, target, n](std::span<const double> g, GradAccess& acc) {
                  auto gx = acc.grad(0);
                  for (std::size_t i = 0; i < gx.size(); ++i) {
                    const double x = (*dl)[i];
                    const double p = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
                    gx[i] += g[0] * (p - target) / n;
                  }
                });
}

}  // namespace xing
