#include "fsmix/ops.hpp"

#include <cmath>

#include "fsmix/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fsmix::ad {

namespace {

constexpr int64_t kOmpMinWork = 1 << 14;

template <class F>
Tensor unary_map(const Tensor& a, F f) {
  Tensor out(a.shape());
  const double* ap = a.ptr();
  double* op = out.ptr();
  const int64_t n = a.numel();
  const bool par = kernels::parallel_enabled() && n >= kOmpMinWork;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par)
#endif
  for (int64_t i = 0; i < n; ++i) op[i] = f(ap[i]);
  (void)par;
  return out;
}

template <class F>
Tensor binary_map(const Tensor& a, const Tensor& b, F f, const char* name) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(name) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  Tensor out(a.shape());
  const double* ap = a.ptr();
  const double* bp = b.ptr();
  double* op = out.ptr();
  const int64_t n = a.numel();
  const bool par = kernels::parallel_enabled() && n >= kOmpMinWork;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par)
#endif
  for (int64_t i = 0; i < n; ++i) op[i] = f(ap[i], bp[i]);
  (void)par;
  return out;
}

void require_4d(const Var& x, const char* name) {
  if (x.val().ndim() != 4)
    throw ShapeError(std::string(name) + ": expected a [B,C,H,W] tensor, got " + shape_str(x.val()));
}

}  // namespace

Var add(const Var& a, const Var& b) {
  Tensor out = binary_map(a.val(), b.val(), [](double x, double y) { return x + y; }, "add");
  return make_op(std::move(out), {a, b},
                 [](const Var& g) { return std::vector<Var>{g, g}; });
}

Var sub(const Var& a, const Var& b) {
  Tensor out = binary_map(a.val(), b.val(), [](double x, double y) { return x - y; }, "sub");
  return make_op(std::move(out), {a, b},
                 [](const Var& g) { return std::vector<Var>{g, neg(g)}; });
}

Var mul(const Var& a, const Var& b) {
  Tensor out = binary_map(a.val(), b.val(), [](double x, double y) { return x * y; }, "mul");
  return make_op(std::move(out), {a, b}, [a, b](const Var& g) {
    return std::vector<Var>{mul(g, b), mul(g, a)};
  });
}

Var div(const Var& a, const Var& b) {
  Tensor out = binary_map(a.val(), b.val(), [](double x, double y) { return x / y; }, "div");
  return make_op(std::move(out), {a, b}, [a, b](const Var& g) {
    Var ga = div(g, b);
    Var gb = neg(div(mul(g, a), mul(b, b)));
    return std::vector<Var>{ga, gb};
  });
}

Var neg(const Var& a) {
  Tensor out = unary_map(a.val(), [](double x) { return -x; });
  return make_op(std::move(out), {a},
                 [](const Var& g) { return std::vector<Var>{neg(g)}; });
}

Var scale(const Var& a, double s) {
  Tensor out = unary_map(a.val(), [s](double x) { return s * x; });
  return make_op(std::move(out), {a},
                 [s](const Var& g) { return std::vector<Var>{scale(g, s)}; });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = unary_map(a.val(), [s](double x) { return x + s; });
  return make_op(std::move(out), {a},
                 [](const Var& g) { return std::vector<Var>{g}; });
}

Var vsqrt(const Var& a) {
  Tensor out = unary_map(a.val(), [](double x) { return std::sqrt(x); });
  return make_op(std::move(out), {a}, [a](const Var& g) {
    return std::vector<Var>{scale(div(g, vsqrt(a)), 0.5)};
  });
}

Var square(const Var& a) { return mul(a, a); }

Var vtanh(const Var& a) {
  Tensor out = unary_map(a.val(), [](double x) { return std::tanh(x); });
  return make_op(std::move(out), {a}, [a](const Var& g) {
    Var t = vtanh(a);
    return std::vector<Var>{mul(g, add_scalar(neg(square(t)), 1.0))};
  });
}

Var sigmoid(const Var& a) {
  Tensor out = unary_map(a.val(), [](double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  return make_op(std::move(out), {a}, [a](const Var& g) {
    Var s = sigmoid(a);
    return std::vector<Var>{mul(g, mul(s, add_scalar(neg(s), 1.0)))};
  });
}

Var softplus(const Var& a) {
  Tensor out = unary_map(a.val(), [](double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  });
  return make_op(std::move(out), {a}, [a](const Var& g) {
    return std::vector<Var>{mul(g, sigmoid(a))};
  });
}

Var leaky_relu(const Var& a, double slope) {
  Tensor out = unary_map(a.val(), [slope](double x) { return x >= 0.0 ? x : slope * x; });
  // Piecewise-constant derivative; the mask is a constant of the input value.
  Tensor mask = unary_map(a.val(), [slope](double x) { return x >= 0.0 ? 1.0 : slope; });
  Var mask_leaf = make_leaf(std::move(mask), false);
  return make_op(std::move(out), {a}, [mask_leaf](const Var& g) {
    return std::vector<Var>{mul(g, mask_leaf)};
  });
}

Var reshape(const Var& a, std::vector<int64_t> shape) {
  Tensor out = a.val().reshaped(std::move(shape));
  std::vector<int64_t> orig = a.val().shape();
  return make_op(std::move(out), {a}, [orig](const Var& g) {
    return std::vector<Var>{reshape(g, orig)};
  });
}

Var conv2d(const Var& x, const Var& w, int64_t pad) {
  require_4d(x, "conv2d");
  require_4d(w, "conv2d(weight)");
  const Tensor& xt = x.val();
  const Tensor& wt = w.val();
  const int64_t B = xt.dim(0), C = xt.dim(1), H = xt.dim(2), W = xt.dim(3);
  const int64_t O = wt.dim(0), k = wt.dim(2);
  if (wt.dim(1) != C)
    throw ShapeError("conv2d: weight expects " + std::to_string(wt.dim(1)) +
                     " input channels, got " + std::to_string(C));
  if (wt.dim(3) != k) throw ShapeError("conv2d: kernel must be square");
  Tensor out({B, O, H, W});
  kernels::conv2d_fwd(xt.ptr(), wt.ptr(), nullptr, out.ptr(), B, C, H, W, O, k, pad);
  return make_op(std::move(out), {x, w}, [x, w, k, pad](const Var& g) {
    Var gx = conv2d(g, flip_transpose(w), pad);
    Var gw = conv2d_wgrad(x, g, k, pad);
    return std::vector<Var>{gx, gw};
  });
}

Var conv2d_wgrad(const Var& x, const Var& gy, int64_t k, int64_t pad) {
  require_4d(x, "conv2d_wgrad");
  require_4d(gy, "conv2d_wgrad(gy)");
  const Tensor& xt = x.val();
  const Tensor& gt = gy.val();
  const int64_t B = xt.dim(0), C = xt.dim(1), H = xt.dim(2), W = xt.dim(3);
  const int64_t O = gt.dim(1);
  if (gt.dim(0) != B || gt.dim(2) != H || gt.dim(3) != W)
    throw ShapeError("conv2d_wgrad: incompatible shapes");
  Tensor out({O, C, k, k});
  kernels::conv2d_wgrad(xt.ptr(), gt.ptr(), out.ptr(), B, C, H, W, O, k, pad);
  return make_op(std::move(out), {x, gy}, [x, gy, k, pad](const Var& g) {
    Var gx = conv2d(gy, flip_transpose(g), pad);
    Var ggy = conv2d(x, g, pad);
    return std::vector<Var>{gx, ggy};
  });
}

Var flip_transpose(const Var& w) {
  require_4d(w, "flip_transpose");
  const Tensor& wt = w.val();
  const int64_t O = wt.dim(0), C = wt.dim(1), k = wt.dim(2);
  Tensor out({C, O, k, k});
  kernels::kernel_flip_transpose(wt.ptr(), out.ptr(), O, C, k);
  return make_op(std::move(out), {w}, [](const Var& g) {
    return std::vector<Var>{flip_transpose(g)};
  });
}

Var avgpool2(const Var& x) {
  require_4d(x, "avgpool2");
  const Tensor& xt = x.val();
  const int64_t B = xt.dim(0), C = xt.dim(1), H = xt.dim(2), W = xt.dim(3);
  if (H % 2 != 0 || W % 2 != 0) throw ShapeError("avgpool2: spatial dims must be even");
  Tensor out({B, C, H / 2, W / 2});
  kernels::avgpool2(xt.ptr(), out.ptr(), B, C, H, W);
  return make_op(std::move(out), {x}, [](const Var& g) {
    return std::vector<Var>{scale(upsample2(g), 0.25)};
  });
}

Var upsample2(const Var& x) {
  require_4d(x, "upsample2");
  const Tensor& xt = x.val();
  const int64_t B = xt.dim(0), C = xt.dim(1), H = xt.dim(2), W = xt.dim(3);
  Tensor out({B, C, 2 * H, 2 * W});
  kernels::upsample2(xt.ptr(), out.ptr(), B, C, H, W);
  return make_op(std::move(out), {x}, [](const Var& g) {
    return std::vector<Var>{scale(avgpool2(g), 4.0)};
  });
}

Var matmul(const Var& a, const Var& b) {
  const Tensor& at = a.val();
  const Tensor& bt = b.val();
  if (at.ndim() != 2 || bt.ndim() != 2 || at.dim(1) != bt.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(at) + " x " + shape_str(bt));
  const int64_t m = at.dim(0), k = at.dim(1), n = bt.dim(1);
  Tensor out({m, n});
  kernels::matmul(at.ptr(), bt.ptr(), out.ptr(), m, k, n);
  return make_op(std::move(out), {a, b}, [a, b](const Var& g) {
    Var ga = matmul(g, transpose2(b));
    Var gb = matmul(transpose2(a), g);
    return std::vector<Var>{ga, gb};
  });
}

Var transpose2(const Var& a) {
  const Tensor& at = a.val();
  if (at.ndim() != 2) throw ShapeError("transpose2: expected a matrix");
  Tensor out({at.dim(1), at.dim(0)});
  kernels::transpose2d(at.ptr(), out.ptr(), at.dim(0), at.dim(1));
  return make_op(std::move(out), {a}, [](const Var& g) {
    return std::vector<Var>{transpose2(g)};
  });
}

Var spatial_sum(const Var& x) {
  require_4d(x, "spatial_sum");
  const Tensor& xt = x.val();
  const int64_t B = xt.dim(0), C = xt.dim(1), H = xt.dim(2), W = xt.dim(3);
  Tensor out({B, C});
  kernels::spatial_sum(xt.ptr(), out.ptr(), B * C, H * W);
  return make_op(std::move(out), {x}, [H, W](const Var& g) {
    return std::vector<Var>{bcast_spatial(g, H, W)};
  });
}

Var bcast_spatial(const Var& v, int64_t h, int64_t w) {
  const Tensor& vt = v.val();
  if (vt.ndim() != 2) throw ShapeError("bcast_spatial: expected [B,C]");
  Tensor out({vt.dim(0), vt.dim(1), h, w});
  kernels::bcast_spatial(vt.ptr(), out.ptr(), vt.dim(0) * vt.dim(1), h * w);
  return make_op(std::move(out), {v}, [](const Var& g) {
    return std::vector<Var>{spatial_sum(g)};
  });
}

Var sum_rows(const Var& x) {
  const Tensor& xt = x.val();
  if (xt.ndim() != 2) throw ShapeError("sum_rows: expected [B,F]");
  const int64_t B = xt.dim(0), F = xt.dim(1);
  Tensor out({F});
  kernels::sum_rows(xt.ptr(), out.ptr(), B, F);
  return make_op(std::move(out), {x}, [B](const Var& g) {
    return std::vector<Var>{bcast_rows(g, B)};
  });
}

Var bcast_rows(const Var& v, int64_t b) {
  const Tensor& vt = v.val();
  if (vt.ndim() != 1) throw ShapeError("bcast_rows: expected a vector");
  Tensor out({b, vt.dim(0)});
  kernels::bcast_rows(vt.ptr(), out.ptr(), b, vt.dim(0));
  return make_op(std::move(out), {v}, [](const Var& g) {
    return std::vector<Var>{sum_rows(g)};
  });
}

Var sum_all(const Var& x) {
  Tensor out = Tensor::scalar(kernels::sum_all(x.val().ptr(), x.val().numel()));
  std::vector<int64_t> shape = x.val().shape();
  return make_op(std::move(out), {x}, [shape](const Var& g) {
    return std::vector<Var>{bcast_all(g, shape)};
  });
}

Var bcast_all(const Var& s, std::vector<int64_t> shape) {
  if (s.val().numel() != 1) throw ShapeError("bcast_all: expected a scalar");
  Tensor out = Tensor::full(shape, s.val()[0]);
  return make_op(std::move(out), {s}, [](const Var& g) {
    return std::vector<Var>{sum_all(g)};
  });
}

Var spatial_mean(const Var& x) {
  require_4d(x, "spatial_mean");
  const double inv = 1.0 / static_cast<double>(x.val().dim(2) * x.val().dim(3));
  return scale(spatial_sum(x), inv);
}

Var mean_all(const Var& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x.val().numel()));
}

}  // namespace fsmix::ad
